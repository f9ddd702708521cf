"""Simulated TDC power traces of the serial SubBytes device.

Each clock contributes one sample: the weighted count of toggling gates
and flip-flops, plus a static offset and Gaussian measurement noise, read
through a saturating tapped-delay-line quantizer.

The cycle-accurate route runs the device netlist through
:func:`netdiv.netlist.evaluate`.  Campaign-scale generation uses per-variant
lookup tables of S-box toggle weight between every pair of consecutive
inputs; both routes produce the same samples (tested).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .aes import SerialSubBytesDevice, popcount
from .errors import CalibrationFailed, PlanInvalid, TraceFormatError
from .netlist import Netlist, all_input_vectors, simulate_batch

DEFAULT_WEIGHTS = {
    "BUF": 0.5,
    "NOT": 0.5,
    "AND": 1.0,
    "OR": 1.0,
    "NAND": 1.0,
    "NOR": 1.0,
    "XOR": 1.5,
    "XNOR": 1.5,
    "MUX": 1.5,
    "CONST0": 0.0,
    "CONST1": 0.0,
    "DFF": 2.0,
}
SAMPLES_PER_TRACE = 16
TARGET_TAPS_SPAN = 80


@dataclass(frozen=True)
class PowerModel:
    weights: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    offset: float = 5.0
    sigma: float = 0.0
    lsb: float = 1.0
    taps: int = 128
    background_sigma: float = 0.0

    def __post_init__(self):
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("toggle weights must be non-negative")
        if self.taps < 1 or self.lsb <= 0 or self.sigma < 0 or self.background_sigma < 0:
            raise ValueError("invalid sensor parameters")

    def with_sigma(self, sigma: float) -> "PowerModel":
        return replace(self, sigma=float(sigma))

    def to_json(self) -> dict:
        d = asdict(self)
        d["weights"] = dict(self.weights)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "PowerModel":
        return cls(**d)


def tdc_quantize(raw, model: PowerModel):
    """``clamp(round_half_up(raw / lsb), 0, taps)``; works on scalars and arrays."""
    q = np.floor(np.asarray(raw, dtype=float) / model.lsb + 0.5)
    q = np.clip(q, 0, model.taps).astype(np.int64)
    return int(q) if q.ndim == 0 else q


# --- leakage tables ----------------------------------------------------------


@dataclass(frozen=True)
class LeakageTable:
    """Toggle weight of the S-box gates for every (previous input, input) pair."""

    comb: np.ndarray        # (256, 256) float
    sbox_out: np.ndarray    # (256,) int, S-box values computed by this netlist

    @classmethod
    def build(cls, sbox: Netlist, weights: Mapping[str, float]) -> "LeakageTable":
        val = simulate_batch(sbox, all_input_vectors(8))
        nets = list(sbox.topo_order)
        if nets:
            m = np.stack([val[net] for net in nets], axis=1).astype(np.float64)
            w = np.array([weights[sbox.gates[net].kind] for net in nets])
            s = m @ w
            comb = s[:, None] + s[None, :] - 2.0 * (m * w) @ m.T
        else:
            comb = np.zeros((256, 256))
        outs = np.stack([val[o] for o in sbox.outputs], axis=1).astype(np.int64)
        sbox_out = (outs << np.arange(8)).sum(axis=1)
        return cls(np.round(comb, 9), sbox_out)


_HW = np.array([popcount(i) for i in range(256)], dtype=np.int64)


def hamming_weight(x) -> np.ndarray:
    return _HW[np.asarray(x, dtype=np.int64)]


def noiseless_samples(table: LeakageTable, xs: np.ndarray, model: PowerModel, prev_input=None) -> np.ndarray:
    """Raw (pre-noise, pre-quantizer) samples for rows of S-box inputs, shape (n, 16).

    ``prev_input`` is the input-register content before each row's first
    byte (default 0).
    """
    xs = np.asarray(xs, dtype=np.int64)
    n = xs.shape[0]
    zeros = np.zeros((n, 1), dtype=np.int64)
    first = zeros if prev_input is None else np.asarray(prev_input, dtype=np.int64).reshape(n, 1)
    prev_x = np.concatenate([first, xs[:, :-1]], axis=1)
    next_x = np.concatenate([xs[:, 1:], zeros], axis=1)
    y = table.sbox_out[xs]
    prev_y = np.concatenate([zeros, y[:, :-1]], axis=1)
    w = model.weights
    hd_out = hamming_weight(prev_y ^ y)
    hd_in = hamming_weight(xs ^ next_x)
    return (
        table.comb[prev_x, xs]
        + (w["MUX"] + w["DFF"]) * hd_out
        + w["DFF"] * hd_in
        + model.offset
    )


# --- traces ------------------------------------------------------------------


@dataclass
class TraceSet:
    traces: np.ndarray        # (n, 16) int
    plaintexts: np.ndarray    # (n, 16) uint8
    key: Optional[bytes]
    schedule: np.ndarray      # (n,) variant id per trace
    model: Optional[PowerModel] = None

    def __post_init__(self):
        if not (len(self.traces) == len(self.plaintexts) == len(self.schedule)):
            raise ValueError("traces, plaintexts and schedule must align")

    def __len__(self):
        return len(self.traces)

    def head(self, n: int) -> "TraceSet":
        return TraceSet(self.traces[:n], self.plaintexts[:n], self.key, self.schedule[:n], self.model)

    def permuted(self, perm) -> "TraceSet":
        perm = np.asarray(perm)
        return TraceSet(self.traces[perm], self.plaintexts[perm], self.key, self.schedule[perm], self.model)


def trace_rng(master_seed: int, index: int) -> np.random.Generator:
    """Generator for trace ``index`` alone, derived from (master seed, index)."""
    return np.random.default_rng([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(index)])


def simulate_trace(device, plaintext: Sequence[int], key: Sequence[int], model: PowerModel,
                   noise_seed=None, prev_input: int = 0) -> np.ndarray:
    """Cycle-accurate trace of one encryption's SubBytes round.

    ``device`` is a :class:`SerialSubBytesDevice` (or a bare S-box netlist,
    which is wrapped).  Sample ``i`` covers the clock in which the output
    register moves to ``Sbox(p_i ^ k_i)``.
    """
    if isinstance(device, Netlist):
        device = SerialSubBytesDevice.wrap(device)
    xs = [p ^ k for p, k in zip(plaintext, key)]
    cycles, _ = device.run(xs, prev_input)
    n = device.netlist
    w = model.weights
    prev_val = cycles[0][1]
    raw = []
    for before, val, after in cycles[1:]:
        total = 0.0
        for net in n.topo_order:
            if val[net] != prev_val[net]:
                total += w[n.gates[net].kind]
        for net in n.latches:
            if before.latches[net] != after.latches[net]:
                total += w["DFF"]
        raw.append(total + model.offset)
        prev_val = val
    raw = np.array(raw)
    if noise_seed is not None and (model.sigma > 0 or model.background_sigma > 0):
        rng = np.random.default_rng(noise_seed)
        raw = raw + _noise(rng, model, len(raw))
    return tdc_quantize(raw, model)


def _noise(rng: np.random.Generator, model: PowerModel, size: int) -> np.ndarray:
    e = rng.standard_normal(size) * model.sigma
    if model.background_sigma > 0:
        e = e + rng.standard_normal(size) * model.background_sigma
    return e


def default_model(*netlists: Netlist, sigma: float = 0.0, **kw) -> PowerModel:
    """Default model with ``lsb`` set so the noiseless range spans about 80 taps.

    Pass every netlist the sensor will see (unprotected and variants): the
    quantizer step is sized for the largest of them, so none saturates.
    """
    base = PowerModel(sigma=sigma, **kw)
    w = base.weights
    comb = max(LeakageTable.build(n, w).comb.max() for n in netlists) if netlists else 0.0
    peak = comb + 8 * (w["MUX"] + w["DFF"]) + 8 * w["DFF"] + base.offset
    return replace(base, lsb=float(peak) / TARGET_TAPS_SPAN)


class _TableCache:
    def __init__(self):
        self._cache: Dict[Tuple, LeakageTable] = {}

    def get(self, n: Netlist, weights: Mapping[str, float]) -> LeakageTable:
        key = (n.structure(), tuple(sorted(weights.items())))
        t = self._cache.get(key)
        if t is None:
            t = LeakageTable.build(n, weights)
            if len(self._cache) > 4096:
                self._cache.clear()
            self._cache[key] = t
        return t


_tables = _TableCache()


def leakage_table(n: Netlist, model: PowerModel) -> LeakageTable:
    return _tables.get(n, model.weights)


def gen_campaign(
    variants: Sequence,
    plan,
    n_traces: int,
    model: PowerModel,
    master_seed: int,
    key: Sequence[int],
    start: int = 0,
) -> TraceSet:
    """Traces ``start .. start + n_traces - 1`` of a rotating-variant campaign.

    ``variants`` are netlists or objects with ``.netlist`` and ``.id``;
    ``plan`` is a :class:`netdiv.rotate.RotationPlan` over their ids.
    Plaintext and noise of trace ``i`` come from ``trace_rng(master_seed, i)``.
    The input register enters trace ``i`` holding the last S-box input of
    trace ``i - 1`` (0 before trace 0), so any trace can be rebuilt alone.
    """
    from .rotate import next_active

    nets = {}
    for i, v in enumerate(variants):
        vid = getattr(v, "id", i)
        nets[vid] = getattr(v, "netlist", v)
    ids_in_plan = {vid for cat in plan.categories for vid in cat}
    if not ids_in_plan <= set(nets):
        raise PlanInvalid(f"plan references unknown variants {sorted(ids_in_plan - set(nets))}")
    key = np.frombuffer(bytes(key), dtype=np.uint8).astype(np.int64)
    if key.shape != (16,):
        raise ValueError("key must be 16 bytes")

    idx = np.arange(start, start + n_traces)
    pts = np.empty((n_traces, 16), dtype=np.uint8)
    noise = np.zeros((n_traces, SAMPLES_PER_TRACE))
    noisy = model.sigma > 0 or model.background_sigma > 0
    for j, i in enumerate(idx):
        rng = trace_rng(master_seed, int(i))
        pts[j] = rng.integers(0, 256, size=16, dtype=np.uint8)
        if noisy:
            noise[j] = _noise(rng, model, SAMPLES_PER_TRACE)
    schedule = np.array([next_active(plan, int(i))[1] for i in idx], dtype=np.int64)
    xs = pts.astype(np.int64) ^ key[None, :]
    prev = np.zeros(n_traces, dtype=np.int64)
    if n_traces:
        prev[1:] = xs[:-1, 15]
        if start > 0:
            p_before = trace_rng(master_seed, start - 1).integers(0, 256, size=16, dtype=np.uint8)
            prev[0] = int(p_before[15]) ^ int(key[15])
    raw = np.empty((n_traces, SAMPLES_PER_TRACE))
    for vid in np.unique(schedule):
        rows = schedule == vid
        table = leakage_table(nets[int(vid)], model)
        raw[rows] = noiseless_samples(table, xs[rows], model, prev[rows])
    traces = tdc_quantize(raw + noise, model)
    return TraceSet(traces, pts, bytes(key.astype(np.uint8)), schedule, model)


# --- TRCB files --------------------------------------------------------------

TRCB_MAGIC = b"TRCB"
TRCB_VERSION = 1


def write_traces(ts: TraceSet, path, redact_key: bool = False) -> None:
    """Binary trace file plus ``<path>.json`` sidecar."""
    path = Path(path)
    n, s = ts.traces.shape if len(ts) else (0, SAMPLES_PER_TRACE)
    if ts.traces.size and (ts.traces.min() < 0 or ts.traces.max() > 0xFFFF):
        raise TraceFormatError("samples do not fit in u16")
    body = bytearray()
    body += TRCB_MAGIC
    body += struct.pack("<BII", TRCB_VERSION, n, s)
    rows = np.concatenate(
        [ts.plaintexts.astype(np.uint8).view(np.uint8), ts.traces.astype("<u2").view(np.uint8)], axis=1
    ) if n else np.zeros((0, 16 + 2 * s), dtype=np.uint8)
    body += rows.tobytes()
    path.write_bytes(bytes(body))
    side = {
        "model": ts.model.to_json() if ts.model else None,
        "schedule": [int(v) for v in ts.schedule],
        "key": None if (redact_key or ts.key is None) else ts.key.hex(),
        "key_redacted": bool(redact_key),
    }
    Path(str(path) + ".json").write_text(json.dumps(side, indent=1, sort_keys=True))


def read_traces(path) -> TraceSet:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != TRCB_MAGIC:
        raise TraceFormatError("not a TRCB file")
    version, n, s = struct.unpack_from("<BII", data, 4)
    if version != TRCB_VERSION:
        raise TraceFormatError(f"unsupported TRCB version {version}")
    row = 16 + 2 * s
    payload = np.frombuffer(data, dtype=np.uint8, offset=13)
    if payload.size != n * row:
        raise TraceFormatError("truncated TRCB file")
    payload = payload.reshape(n, row)
    pts = payload[:, :16].copy()
    traces = payload[:, 16:].copy().view("<u2").astype(np.int64)
    side_path = Path(str(path) + ".json")
    key, schedule, model = None, np.zeros(n, dtype=np.int64), None
    if side_path.exists():
        side = json.loads(side_path.read_text())
        key = bytes.fromhex(side["key"]) if side.get("key") else None
        schedule = np.array(side.get("schedule", [0] * n), dtype=np.int64)
        model = PowerModel.from_json(side["model"]) if side.get("model") else None
    return TraceSet(traces, pts, key, schedule, model)


# --- calibration -------------------------------------------------------------


@dataclass(frozen=True)
class Calibration:
    sigma: float
    mtd: int              # byte-0 MTD on the search trace set
    validation_mtd: int   # byte-0 MTD on a fresh trace set
    steps: int


def calibrate_sigma(
    sbox: Netlist,
    key: Sequence[int],
    model: PowerModel,
    target: Tuple[int, int] = (500, 2000),
    budget: int = 5000,
    step: int = 100,
    seed: int = 0,
    sigma_bounds: Tuple[float, float] = (0.5, 500.0),
    max_steps: int = 40,
) -> Calibration:
    """Search ``sigma`` so the unprotected byte-0 MTD lands inside ``target``.

    Bisection runs in log-sigma toward the geometric middle of the target
    range, on traces from ``seed``; a candidate is accepted only if a
    fresh trace set (``seed + 1``) also lands in range.
    """
    from .cpa import mtd_byte
    from .rotate import make_plan

    lo_t, hi_t = target
    if not 1 <= lo_t <= hi_t <= budget:
        raise ValueError("target range must lie within [1, budget]")
    plan = make_plan([0], 1)
    goal = math.sqrt(lo_t * hi_t)

    def measure(sigma: float, s: int) -> float:
        ts = gen_campaign([sbox], plan, budget, model.with_sigma(sigma), s, key)
        m = mtd_byte(ts, 0, key, step, budget)
        return float("inf") if m is None else float(m)

    lo, hi = math.log(sigma_bounds[0]), math.log(sigma_bounds[1])
    if measure(math.exp(lo), seed) > hi_t:
        raise CalibrationFailed("MTD exceeds the target even at the lowest sigma")
    if measure(math.exp(hi), seed) < lo_t:
        raise CalibrationFailed("MTD stays below the target even at the highest sigma")
    for k in range(1, max_steps + 1):
        mid = 0.5 * (lo + hi)
        sigma = math.exp(mid)
        m = measure(sigma, seed)
        if lo_t <= m <= hi_t:
            v = measure(sigma, seed + 1)
            if lo_t <= v <= hi_t:
                return Calibration(sigma, int(m), int(v), k)
            m = v  # steer by the fresh measurement instead
        if m < goal:
            lo = mid
        else:
            hi = mid
    raise CalibrationFailed(f"no sigma in {sigma_bounds} gave MTD in {target} after {max_steps} steps")
