"""End-to-end campaigns: generate, schedule, simulate, attack, report.

Every output of :func:`run_campaign` is a CSV or JSON file under the
output directory, listed with its SHA-256 in ``manifest.json``.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__, cpa
from .aes import gen_sbox_netlist
from .diffstore import storage_report
from .diversify import DEFAULT_RATE_CAP, FAULT_MIXES, POLICIES, STAGES
from .errors import ConfigError, NetdivError
from .netlist import write_netlist
from .power import PowerModel, calibrate_sigma, default_model, gen_campaign
from .repair import generate_variants
from .rotate import DEFAULT_BANDWIDTH, RotationPlan, make_plan, validate_plan
from .timing import DelayModel, delay_distribution

DEFAULT_KEY = "b97e151628aed2a6abf7158809cf4f3c"
AXES = ("fault_rate", "policy", "fault_mix", "stage", "n_variants")
OVERHEAD_RATES = (0.01, 0.05, 0.10, 0.15, 0.20, 0.25)


@dataclass(frozen=True)
class CampaignConfig:
    master_seed: int = 0
    n_variants: int = 128
    rate: float = 0.10
    policy: str = "critical"
    mix: str = "mixed"
    stage: str = "postopt"
    n_prr: int = 8
    window: int = 1
    budget: int = 50000
    step: int = 100
    attack_traces: int = 20000
    sigma: object = "calibrate"           # float or "calibrate"
    calibration_target: Tuple[int, int] = (500, 2000)
    calibration_budget: int = 5000
    key: str = DEFAULT_KEY
    rate_cap: float = DEFAULT_RATE_CAP
    bandwidth: float = DEFAULT_BANDWIDTH
    overhead_rates: Tuple[float, ...] = OVERHEAD_RATES
    overhead_variants: int = 32
    variant_counts: Tuple[int, ...] = (0, 1, 2, 4, 8, 16, 32, 64, 128)   # 0 = unprotected
    power: Dict[str, object] = field(default_factory=dict)   # PowerModel overrides
    out_dir: str = "campaign_out"
    threads: int = 1
    deterministic_strict: bool = False

    # fields that do not change results
    NON_SEMANTIC = ("out_dir", "threads", "deterministic_strict")

    def __post_init__(self):
        problems = []
        if self.policy not in POLICIES:
            problems.append(f"policy must be one of {POLICIES}")
        if self.mix not in FAULT_MIXES:
            problems.append(f"mix must be one of {FAULT_MIXES}")
        if self.stage not in STAGES:
            problems.append(f"stage must be one of {STAGES}")
        if self.n_variants < 1 or self.n_prr < 1 or self.window < 1:
            problems.append("n_variants, n_prr and window must be positive")
        if not 0 <= self.rate <= self.rate_cap:
            problems.append(f"rate {self.rate} outside [0, cap {self.rate_cap}]")
        if self.step < 2 or self.budget < self.step:
            problems.append("need budget >= step >= 2")
        if not (self.sigma == "calibrate" or (isinstance(self.sigma, (int, float)) and self.sigma >= 0)):
            problems.append("sigma must be a non-negative number or 'calibrate'")
        try:
            if len(bytes.fromhex(self.key)) != 16:
                problems.append("key must be 16 bytes of hex")
        except ValueError:
            problems.append("key must be hex")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def key_bytes(self) -> bytes:
        return bytes.fromhex(self.key)

    def normalized(self) -> dict:
        d = dataclasses.asdict(self)
        for k in self.NON_SEMANTIC:
            d.pop(k)
        d["calibration_target"] = list(d["calibration_target"])
        d["overhead_rates"] = [float(r) for r in d["overhead_rates"]]
        d["variant_counts"] = list(d["variant_counts"])
        d["rate"] = float(d["rate"])
        d["key"] = d["key"].lower()
        return d

    def hash(self) -> str:
        blob = json.dumps(self.normalized(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_json(self) -> dict:
        d = self.normalized()
        d["out_dir"] = self.out_dir
        d["threads"] = self.threads
        return d

    @classmethod
    def from_dict(cls, d: dict, **overrides) -> "CampaignConfig":
        d = {**d, **{k: v for k, v in overrides.items() if v is not None}}
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        for k in ("calibration_target", "overhead_rates", "variant_counts"):
            if k in d:
                d[k] = tuple(d[k])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path, **overrides) -> "CampaignConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d, **overrides)


# --- helpers -----------------------------------------------------------------


def csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    return "" if v is None else v


def mean_peak(ts, key: bytes, n: Optional[int] = None) -> float:
    """CPA peak of the true key, averaged over all 16 bytes (true previous byte chained)."""
    peaks = []
    for b in range(16):
        model = cpa.HypothesisModel(b, cpa.HD_CONSECUTIVE, None if b == 0 else key[b - 1])
        peaks.append(cpa.correlate(ts, model, n, true_key=key[b]).true_peak)
    return float(np.mean(peaks))


def variant_set(orig, cfg: CampaignConfig, n: Optional[int] = None, **kw):
    params = dict(policy=cfg.policy, rate=cfg.rate, mix=cfg.mix, stage=cfg.stage, cap=cfg.rate_cap)
    params.update(kw)
    threads = 1 if cfg.deterministic_strict else cfg.threads
    return generate_variants(orig, range(n or cfg.n_variants), threads=threads, **params)


def build_plan(variants, cfg: CampaignConfig, n_prr: Optional[int] = None) -> RotationPlan:
    ids = [v.id for v in variants]
    return make_plan(ids, min(n_prr or cfg.n_prr, len(ids)), cfg.master_seed, cfg.window, cfg.bandwidth)


def sensor_model(cfg: CampaignConfig, netlists) -> PowerModel:
    extra = {k: v for k, v in cfg.power.items() if k != "lsb"}
    model = default_model(*netlists, **extra)
    if "lsb" in cfg.power:
        model = dataclasses.replace(model, lsb=float(cfg.power["lsb"]))
    if cfg.sigma != "calibrate":
        model = model.with_sigma(float(cfg.sigma))
    return model


def calibrated(orig, cfg: CampaignConfig, model: PowerModel) -> Tuple[PowerModel, Optional[dict]]:
    if cfg.sigma != "calibrate":
        return model, None
    cal = calibrate_sigma(orig, cfg.key_bytes, model, cfg.calibration_target, cfg.calibration_budget,
                          cfg.step, seed=cfg.master_seed)
    return model.with_sigma(cal.sigma), dataclasses.asdict(cal)


def with_plan_deltas(plan: RotationPlan, variants) -> RotationPlan:
    from .diffstore import load_sizes

    return dataclasses.replace(plan, delta_sizes=load_sizes(variants, plan))


# --- campaign ----------------------------------------------------------------


def run_campaign(cfg: CampaignConfig) -> dict:
    """Run the full pipeline and write every report; returns the manifest."""
    out = Path(cfg.out_dir)
    tmp = Path(tempfile.mkdtemp(prefix=".campaign-", dir=out.parent if out.parent.exists() else None))
    try:
        manifest = _campaign(cfg, tmp)
        if out.exists():
            shutil.rmtree(out)
        shutil.move(str(tmp), str(out))
        return manifest
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def _campaign(cfg: CampaignConfig, out: Path) -> dict:
    files: Dict[str, str] = {}

    def emit(name: str, text: str) -> None:
        p = out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
        files[name] = hashlib.sha256(text.encode()).hexdigest()

    def emit_json(name: str, obj) -> None:
        emit(name, json.dumps(obj, indent=1, sort_keys=True) + "\n")

    orig = gen_sbox_netlist()
    key = cfg.key_bytes
    emit("sbox.gnl", write_netlist(orig))

    variants, failures = variant_set(orig, cfg)
    if not variants:
        raise NetdivError("no variant could be generated")
    for v in variants:
        emit(f"variants/v{v.id:03d}.gnl", write_netlist(v.netlist))
    emit_json("variants/manifest.json", {
        "variants": [v.manifest_entry() for v in variants],
        "failures": [{"seed": s, "error": repr(e)} for s, e in failures],
        "original_gate_count": len(orig.gates),
    })

    # (d) delay distribution
    if len(variants) >= 2:
        stats = delay_distribution([v.netlist for v in variants], DelayModel())
        emit("delay_distribution.csv", stats.to_csv())
        emit("variant_delays.csv", csv_text(["variant", "critical_delay"],
                                            [(v.id, v.critical_delay) for v in variants]))

    # sensor, calibration, schedule
    model = sensor_model(cfg, [orig] + [v.netlist for v in variants])
    model, cal = calibrated(orig, cfg, model)
    unprot = gen_campaign([orig], make_plan([0], 1), cfg.calibration_budget, model, cfg.master_seed + 1, key)
    mtd_unprot = cpa.mtd_byte(unprot, 0, key, cfg.step, cfg.calibration_budget)
    plan = with_plan_deltas(build_plan(variants, cfg), variants)
    violations = validate_plan(plan, mtd_unprot or cfg.calibration_budget)
    emit_json("schedule.json", {
        "plan": plan.to_json(),
        "mtd_unprotected": mtd_unprot,
        "violations": [x.to_json() for x in violations],
    })

    # protected campaign and attack
    ts = gen_campaign(variants, plan, cfg.budget, model, cfg.master_seed, key)
    res = cpa.mtd(ts, key, cfg.step, cfg.budget)
    n_att = min(cfg.attack_traces, len(ts))
    rows = []
    for b in range(16):
        hm = cpa.HypothesisModel(b, cpa.HD_CONSECUTIVE, None if b == 0 else key[b - 1])
        rep = cpa.correlate(ts, hm, n_att, true_key=key[b])
        rows += [(b, g, float(rep.peaks[g]), int(g == key[b])) for g in range(256)]
    emit("correlation_by_guess.csv", csv_text(["byte", "guess", "max_abs_rho", "is_key"], rows))
    rec = cpa.recover_key(ts, n_att)
    emit_json("attack.json", {
        "mtd": res.to_json(),
        "mtd_unprotected_byte0": mtd_unprot,
        "peak_mean": mean_peak(ts, key, n_att),
        "attack_traces": n_att,
        "recovered_key": [k for k in rec.key],
        "model": model.to_json(),
        "calibration": cal,
    })

    # (a) MTD versus number of deployed variants
    rows = []
    for k in cfg.variant_counts:
        if k > len(variants):
            continue
        if k == 0:
            sub, p = [orig], make_plan([0], 1)
        else:
            sub = variants[:k]
            p = build_plan(sub, cfg)
        t = gen_campaign(sub, p, cfg.budget, model, cfg.master_seed, key)
        m = cpa.mtd_byte(t, 0, key, cfg.step, cfg.budget)
        rows.append((k, m if m is not None else f"NotDetected({cfg.budget})", mean_peak(t, key, n_att)))
    emit("mtd_vs_variants.csv", csv_text(["n_variants", "mtd_byte0", "peak_mean"], rows))

    # (c) overhead across fault rates
    emit("overhead.csv", overhead_table(orig, cfg))

    # (e) storage
    emit_json("storage.json", storage_report(variants, plan).to_json())

    manifest = {
        "tool": "netdiv",
        "version": __version__,
        "config": cfg.normalized(),
        "config_hash": cfg.hash(),
        "files": dict(sorted(files.items())),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def overhead_table(orig, cfg: CampaignConfig) -> str:
    rows = []
    base = len(orig.gates)
    for r in cfg.overhead_rates:
        vs, fails = variant_set(orig, cfg, cfg.overhead_variants, rate=r)
        if vs:
            ovh = float(np.mean([v.gate_count / base - 1 for v in vs]))
            rows.append((r, len(vs), len(fails), ovh, float(np.mean([v.patch_gate_count for v in vs]))))
        else:
            rows.append((r, 0, len(fails), None, None))
    return csv_text(["rate", "variants", "failures", "gate_overhead", "mean_patch_gates"], rows)


# --- ablation ----------------------------------------------------------------

_AXIS_FIELD = {"fault_rate": "rate", "policy": "policy", "fault_mix": "mix", "stage": "stage", "n_variants": "n_variants"}


def ablation(cfg: CampaignConfig, axis: str, values: Sequence) -> str:
    """One protected campaign per axis value, sharing seeds, sensor and sigma.

    ``n_variants`` value 0 stands for the unprotected design.  Returns a CSV
    of (value, CPA peak, byte-0 MTD, gate overhead, mean delta size).
    """
    from .diffstore import chain_deltas

    if axis not in AXES:
        raise ConfigError(f"axis must be one of {AXES}")
    if not values:
        raise ConfigError("ablation needs at least one value")
    orig = gen_sbox_netlist()
    key = cfg.key_bytes
    runs = []
    for val in values:
        if axis == "n_variants" and int(val) == 0:
            runs.append((val, None, cfg))
            continue
        c = dataclasses.replace(cfg, **{_AXIS_FIELD[axis]: val})
        vs, _ = variant_set(orig, c)
        if not vs:
            raise NetdivError(f"no variants for {axis}={val}")
        runs.append((val, vs, c))
    nets = [orig] + [v.netlist for _, vs, _ in runs if vs for v in vs]
    model, _ = calibrated(orig, cfg, sensor_model(cfg, nets))
    rows = []
    base = len(orig.gates)
    for val, vs, c in runs:
        if vs is None:
            plan, pool = make_plan([0], 1), [orig]
            ovh, dsize = 0.0, 0.0
        else:
            plan, pool = build_plan(vs, c), vs
            ovh = float(np.mean([v.gate_count / base - 1 for v in vs]))
            ds = [d.size for d in chain_deltas(vs, plan)]
            dsize = float(np.mean(ds)) if ds else 0.0
        ts = gen_campaign(pool, plan, cfg.budget, model, cfg.master_seed, key)
        m = cpa.mtd_byte(ts, 0, key, cfg.step, cfg.budget)
        peak = mean_peak(ts, key, min(cfg.attack_traces, len(ts)))
        rows.append((val, peak, m if m is not None else f"NotDetected({cfg.budget})", ovh, dsize))
    return csv_text([axis, "cpa_peak", "mtd_byte0", "gate_overhead", "mean_delta_bytes"], rows)


def parse_axis_values(axis: str, text: str) -> List:
    items = [t.strip() for t in text.split(",") if t.strip()]
    try:
        if axis == "fault_rate":
            return [float(t) for t in items]
        if axis == "n_variants":
            return [int(t) for t in items]
    except ValueError as exc:
        raise ConfigError(f"bad value list for {axis}: {text}") from exc
    allowed = {"policy": POLICIES, "fault_mix": FAULT_MIXES, "stage": STAGES}.get(axis)
    if allowed is None:
        raise ConfigError(f"axis must be one of {AXES}")
    bad = [t for t in items if t not in allowed]
    if bad:
        raise ConfigError(f"{axis} values must be among {allowed}, got {bad}")
    return items

