"""Command-line entry point: ``netdiv <subcommand> ...``.

Exit codes: 0 success, 2 configuration or usage error, 3 pipeline error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import NamedTuple

from . import __version__
from .errors import ConfigError, NetdivError

EXIT_OK, EXIT_CONFIG, EXIT_PIPELINE = 0, 2, 3


class _V(NamedTuple):
    id: int
    netlist: object


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="campaign config JSON; flags override its fields")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output file or directory")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--deterministic-strict", action="store_true",
                   help="sequential, fixed-order evaluation for bit-exact output")
    return p


def _config(args, **overrides):
    from .campaign import CampaignConfig

    over = {"master_seed": args.seed, "threads": args.threads, "out_dir": args.out}
    if args.deterministic_strict:
        over["deterministic_strict"] = True
    over.update({k: v for k, v in overrides.items() if v is not None})
    if args.config:
        return CampaignConfig.load(args.config, **over)
    return CampaignConfig.from_dict({}, **over)


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _read_netlist(path):
    from .netlist import parse_netlist

    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_netlist(text, Path(path).stem)


def _load_variants(directory):
    """Netlists of a ``variants`` output directory, in manifest order."""
    d = Path(directory)
    man = d / "manifest.json"
    if not man.exists():
        raise ConfigError(f"{d} has no manifest.json")
    entries = json.loads(man.read_text())["variants"]
    return [(int(e["id"]), _read_netlist(d / f"v{int(e['id']):03d}.gnl")) for e in entries]


# --- subcommands -------------------------------------------------------------


def cmd_gen_sbox(args):
    from .aes import gen_sbox_netlist
    from .netlist import write_netlist

    _write(args.out, write_netlist(gen_sbox_netlist()))


def cmd_variants(args):
    from .aes import gen_sbox_netlist
    from .campaign import variant_set
    from .netlist import write_netlist

    cfg = _config(args, n_variants=args.count, rate=args.rate, policy=args.policy, mix=args.mix, stage=args.stage)
    orig = _read_netlist(args.netlist) if args.netlist else gen_sbox_netlist()
    variants, failures = variant_set(orig, cfg)
    out = Path(args.out or "variants")
    out.mkdir(parents=True, exist_ok=True)
    for v in variants:
        (out / f"v{v.id:03d}.gnl").write_text(write_netlist(v.netlist))
    manifest = {
        "variants": [v.manifest_entry() for v in variants],
        "failures": [{"seed": s, "error": repr(e)} for s, e in failures],
        "original_gate_count": len(orig.gates),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    print(json.dumps({"variants": len(variants), "failures": len(failures), "out": str(out)}))


def cmd_timing(args):
    from .timing import DelayModel, analyze, delay_distribution

    m = DelayModel()
    target = Path(args.target)
    if target.is_dir():
        nets = [n for _, n in _load_variants(target)]
        stats = delay_distribution(nets, m)
        _write(args.out, stats.to_csv())
        print(json.dumps({"mean": stats.mean, "std": stats.std, "n": len(nets)}), file=sys.stderr)
    else:
        rep = analyze(_read_netlist(target), m)
        _write(args.out, rep.to_csv())
        print(json.dumps(rep.summary()), file=sys.stderr)


def cmd_inject(args):
    from .diversify import inject, optimize, select_nets
    from .netlist import write_netlist

    n = _read_netlist(args.netlist)
    plan = select_nets(n, args.policy, args.rate, args.seed or 0, args.mix)
    faulty = inject(n, plan)
    if args.optimize:
        faulty = optimize(faulty)
    _write(args.out, write_netlist(faulty))
    if args.plan_out:
        Path(args.plan_out).write_text(json.dumps(plan.to_json(), indent=1) + "\n")


def cmd_repair(args):
    from .netlist import write_netlist
    from .repair import repair

    orig, faulty = _read_netlist(args.original), _read_netlist(args.faulty)
    res = repair(orig, faulty, args.seed or 0, args.iteration_limit)
    _write(args.out, write_netlist(res.netlist.replace(name=orig.name)))
    print(json.dumps({"iterations": res.iterations, "patch_gates": res.patch_gate_count,
                      "mismatch_history": list(res.mismatch_history)}), file=sys.stderr)


def cmd_schedule(args):
    from .diffstore import load_sizes
    from .rotate import make_plan, validate_plan

    cfg = _config(args, n_prr=args.n_prr, window=args.window)
    pool = [_V(i, n) for i, n in _load_variants(args.variants)] if args.variants else []
    ids = [v.id for v in pool] or list(range(args.count))
    plan = make_plan(ids, min(cfg.n_prr, len(ids)), cfg.master_seed, cfg.window,
                     args.bandwidth or cfg.bandwidth)
    if pool:
        plan = dataclasses.replace(plan, delta_sizes=load_sizes(pool, plan))
    viol = validate_plan(plan, args.mtd)
    _write(args.out, json.dumps({"plan": plan.to_json(), "mtd_unprotected": args.mtd,
                                 "violations": [v.to_json() for v in viol]}, indent=1) + "\n")


def cmd_simulate(args):
    from .aes import gen_sbox_netlist
    from .power import default_model, gen_campaign, write_traces
    from .rotate import RotationPlan, make_plan

    cfg = _config(args)
    if args.variants:
        pool = [_V(i, n) for i, n in _load_variants(args.variants)]
    else:
        n = _read_netlist(args.netlist) if args.netlist else gen_sbox_netlist()
        pool = [_V(0, n)]
    if args.plan:
        plan = RotationPlan.from_json(json.loads(Path(args.plan).read_text())["plan"])
    else:
        plan = make_plan([v.id for v in pool], min(cfg.n_prr, len(pool)), cfg.master_seed)
    model = default_model(*[v.netlist for v in pool], sigma=args.sigma)
    ts = gen_campaign(pool, plan, args.n, model, cfg.master_seed, cfg.key_bytes)
    write_traces(ts, args.out or "traces.trcb", redact_key=args.redact_key)


def cmd_attack(args):
    from . import cpa
    from .campaign import csv_text
    from .power import read_traces

    ts = read_traces(args.traces)
    n = args.n or len(ts)
    rec = cpa.recover_key(ts, n)
    rows = []
    for b, rep in enumerate(rec.reports):
        rows += [(b, g, float(rep.peaks[g])) for g in range(256)]
    out = Path(args.out or "attack")
    out.mkdir(parents=True, exist_ok=True)
    (out / "correlation_by_guess.csv").write_text(csv_text(["byte", "guess", "max_abs_rho"], rows))
    summary = {"recovered_key": list(rec.key), "traces": n}
    if ts.key is not None:
        res = cpa.mtd(ts, ts.key, args.step, n)
        summary["mtd"] = res.to_json()
        summary["correct"] = [k == t for k, t in zip(rec.key, ts.key)]
    (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    print(json.dumps(summary))


def cmd_diff(args):
    from .diffstore import diff, serialize

    a, b = _read_netlist(args.base), _read_netlist(args.target)
    d = diff(a, b)
    data = d.encode()
    out = Path(args.out or "delta.gnld")
    out.write_bytes(data)
    report = {"delta_bytes": len(data), "base_bytes": len(serialize(a)), "target_bytes": len(serialize(b)),
              "removed": len(d.removed), "added": len(d.added), "rewired": len(d.rewired)}
    Path(str(out) + ".json").write_text(json.dumps(report, indent=1) + "\n")
    print(json.dumps(report))


def cmd_campaign(args):
    from .campaign import run_campaign

    cfg = _config(args)
    manifest = run_campaign(cfg)
    print(json.dumps({"out": cfg.out_dir, "config_hash": manifest["config_hash"],
                      "files": len(manifest["files"])}))


def cmd_ablation(args):
    from .campaign import ablation, parse_axis_values

    cfg = _config(args)
    text = ablation(cfg, args.axis, parse_axis_values(args.axis, args.values))
    _write(args.out, text)


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    p = _Parser(prog="netdiv", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        s = sub.add_parser(name, parents=[common], help=help_)
        s.set_defaults(fn=fn)
        return s

    add("gen-sbox", cmd_gen_sbox, "write the composite-field S-box netlist")

    s = add("variants", cmd_variants, "generate repaired variants")
    s.add_argument("--netlist", help="original netlist (default: built-in S-box)")
    s.add_argument("--count", type=int)
    s.add_argument("--rate", type=float)
    s.add_argument("--policy", choices=["random", "critical"])
    s.add_argument("--mix", choices=["sa0", "sa1", "mixed"])
    s.add_argument("--stage", choices=["preopt", "postopt"])

    s = add("timing", cmd_timing, "timing report of a netlist, or delay distribution of a variant directory")
    s.add_argument("target")

    s = add("inject", cmd_inject, "inject stuck-at faults")
    s.add_argument("netlist")
    s.add_argument("--rate", type=float, default=0.10)
    s.add_argument("--policy", choices=["random", "critical"], default="critical")
    s.add_argument("--mix", choices=["sa0", "sa1", "mixed"], default="mixed")
    s.add_argument("--optimize", action="store_true", help="run constant propagation after injection")
    s.add_argument("--plan-out", help="write the fault plan JSON here")

    s = add("repair", cmd_repair, "rectify a faulty netlist against the original")
    s.add_argument("original")
    s.add_argument("faulty")
    s.add_argument("--iteration-limit", type=int, default=64)

    s = add("schedule", cmd_schedule, "build and validate a rotation plan")
    s.add_argument("--variants", help="variant directory (delta sizes are measured)")
    s.add_argument("--count", type=int, default=128)
    s.add_argument("--n-prr", type=int)
    s.add_argument("--window", type=int)
    s.add_argument("--bandwidth", type=float)
    s.add_argument("--mtd", type=int, default=1000, help="unprotected MTD")

    s = add("simulate", cmd_simulate, "simulate a trace campaign")
    s.add_argument("--variants")
    s.add_argument("--netlist")
    s.add_argument("--plan")
    s.add_argument("-n", type=int, default=10000)
    s.add_argument("--sigma", type=float, default=0.0)
    s.add_argument("--redact-key", action="store_true")

    s = add("attack", cmd_attack, "CPA key recovery and MTD on a trace file")
    s.add_argument("traces")
    s.add_argument("-n", type=int)
    s.add_argument("--step", type=int, default=100)

    s = add("diff", cmd_diff, "delta script between two netlists")
    s.add_argument("base")
    s.add_argument("target")

    add("campaign", cmd_campaign, "run the full evaluation campaign")

    s = add("ablation", cmd_ablation, "sweep one campaign parameter")
    s.add_argument("--axis", required=True, choices=["fault_rate", "policy", "fault_mix", "stage", "n_variants"])
    s.add_argument("--values", required=True, help="comma-separated values")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        rc = args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NetdivError as exc:
        print(f"pipeline error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    return rc or EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
