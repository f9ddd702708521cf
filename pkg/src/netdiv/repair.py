"""Equivalence checking, NEQ diagnosis, XOR rectification, and variant generation.

A faulty netlist is repaired output by output: the difference function
``d = f_orig ^ f_faulty`` of the worst non-equivalent output is rebuilt as
a randomized Shannon decomposition and XOR-ed onto that output.  The
variable order is drawn from the seed, so each seed yields a structurally
different patch for the same fault set.
"""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import sat
from .diversify import (
    DEFAULT_RATE_CAP,
    FaultPlan,
    STAGES,
    _fresh,
    inject,
    optimize,
    remove_dead,
    select_nets,
)
from .errors import ConeTooLarge, InterfaceMismatch, IterationLimit
from .netlist import Gate, Netlist, all_input_vectors, simulate_batch
from .timing import DelayModel, analyze

log = logging.getLogger(__name__)

EXHAUSTIVE_LIMIT = 20
_CHUNK_BITS = 16


@dataclass(frozen=True)
class NeqEntry:
    output: str
    counterexample: Tuple[int, ...]          # one bit per primary input
    cone_inputs: Optional[Tuple[str, ...]] = None
    diff_table: Optional[np.ndarray] = None  # over cone inputs, LSB = first cone input

    @property
    def mismatches(self) -> Optional[int]:
        return None if self.diff_table is None else int(self.diff_table.sum())


@dataclass(frozen=True)
class NeqReport:
    entries: Tuple[NeqEntry, ...] = ()

    @property
    def equivalent(self) -> bool:
        return not self.entries

    def outputs(self) -> List[str]:
        return [e.output for e in self.entries]

    def total_mismatches(self) -> int:
        return sum(e.mismatches or 0 for e in self.entries)


def _check_interface(a: Netlist, b: Netlist) -> None:
    if a.inputs != b.inputs or a.outputs != b.outputs:
        raise InterfaceMismatch("netlists differ in primary input/output names or order")


def support(n: Netlist, net: str) -> List[str]:
    """Primary inputs in the transitive fan-in of ``net``, in declaration order."""
    seen, stack = set(), [net]
    while stack:
        x = stack.pop()
        if x in seen:
            continue
        seen.add(x)
        g = n.gates.get(x)
        if g is not None:
            stack.extend(g.inputs)
    return [x for x in n.inputs if x in seen]


def _cone_tables(a: Netlist, b: Netlist, out: str, cone: Sequence[str]):
    vecs = all_input_vectors(len(cone))
    full = np.zeros((vecs.shape[0], len(a.inputs)), dtype=bool)
    pos = {x: i for i, x in enumerate(a.inputs)}
    for j, x in enumerate(cone):
        full[:, pos[x]] = vecs[:, j]
    return simulate_batch(a, full)[out], simulate_batch(b, full)[out], full


def check_equivalence(a: Netlist, b: Netlist) -> NeqReport:
    """Decide equivalence of two combinational netlists with identical interfaces.

    Up to 20 primary inputs the decision is exhaustive; wider interfaces
    go through a SAT check of the XOR miter of each output pair.  Every
    reported output carries a counterexample, plus the full difference
    table when its cone is small enough to enumerate.
    """
    _check_interface(a, b)
    k = len(a.inputs)
    bad: Dict[str, Tuple[int, ...]] = {}
    if k <= EXHAUSTIVE_LIMIT:
        chunk = 1 << min(k, _CHUNK_BITS)
        for start in range(0, 1 << k, chunk):
            idx = np.arange(start, start + chunk, dtype=np.int64)
            vecs = ((idx[:, None] >> np.arange(k)) & 1).astype(bool)
            va, vb = simulate_batch(a, vecs), simulate_batch(b, vecs)
            for o in a.outputs:
                if o in bad:
                    continue
                diff = np.flatnonzero(va[o] != vb[o])
                if diff.size:
                    bad[o] = tuple(int(v) for v in vecs[diff[0]])
            if len(bad) == len(a.outputs):
                break
    else:
        for o in a.outputs:
            cex = _sat_miter(a, b, o)
            if cex is not None:
                bad[o] = cex
    entries = []
    for o in a.outputs:
        if o not in bad:
            continue
        cone = list(dict.fromkeys(support(a, o) + support(b, o)))
        cone = [x for x in a.inputs if x in cone]
        if len(cone) <= EXHAUSTIVE_LIMIT:
            fa, fb, _ = _cone_tables(a, b, o, cone)
            entries.append(NeqEntry(o, bad[o], tuple(cone), fa ^ fb))
        else:
            entries.append(NeqEntry(o, bad[o]))
    return NeqReport(tuple(entries))


def _sat_miter(a: Netlist, b: Netlist, out: str) -> Optional[Tuple[int, ...]]:
    cnf = sat.Cnf()
    pis = {x: cnf.var() for x in a.inputs}
    va = sat.encode(a, cnf, pis)
    vb = sat.encode(b, cnf, pis)
    z = cnf.xor2(va[out], vb[out])
    cnf.add(z)
    model = sat.solve(cnf, order=[pis[x] for x in a.inputs])
    if model is None:
        return None
    return tuple(int(model[pis[x]]) for x in a.inputs)


@dataclass(frozen=True)
class DiffFunction:
    output: str
    inputs: Tuple[str, ...]
    table: np.ndarray   # bool, length 2**len(inputs)

    @property
    def mismatches(self) -> int:
        return int(self.table.sum())


def diagnose(orig: Netlist, faulty: Netlist, report: NeqReport) -> Dict[str, DiffFunction]:
    """Exact difference function per non-equivalent output."""
    out = {}
    for e in report.entries:
        if e.diff_table is None:
            raise ConeTooLarge(f"cone of {e.output!r} exceeds {EXHAUSTIVE_LIMIT} inputs")
        if e.diff_table.any():
            out[e.output] = DiffFunction(e.output, e.cone_inputs, e.diff_table)
    return out


# --- patch synthesis ---------------------------------------------------------


@dataclass(frozen=True)
class Patch:
    gates: Dict[str, Gate]
    root: Optional[str]     # None for the empty patch (d == 0)


def synthesize_patch(d: DiffFunction, seed, prefix: str = "patch.") -> Patch:
    """Multi-level netlist computing ``d`` via randomized Shannon decomposition.

    Variables are split in a seeded random order; constant and equal
    cofactors collapse, and identical sub-functions are shared.
    """
    table = np.asarray(d.table, dtype=bool)
    if not table.any():
        return Patch({}, None)
    k = len(d.inputs)
    order = [int(i) for i in np.random.default_rng(seed).permutation(k)]
    gates: Dict[str, Gate] = {}
    counter = [0]

    def new(kind: str, *ins: str) -> str:
        name = f"{prefix}n{counter[0]}"
        counter[0] += 1
        gates[name] = Gate(kind, tuple(ins), name)
        return name

    consts: Dict[int, str] = {}

    def const(v: int) -> str:
        if v not in consts:
            consts[v] = new(f"CONST{v}")
        return consts[v]

    # axis j of the cube is input j (C-order reshape puts the last input first)
    cube = np.transpose(table.reshape((2,) * k), axes=list(range(k))[::-1])
    memo: Dict[Tuple[int, bytes], object] = {}

    def build(f: np.ndarray, level: int, remaining: Tuple[int, ...]):
        """Net name for ``f``, or the int 0/1 for a constant function."""
        if not f.any():
            return 0
        if f.all():
            return 1
        key = (level, np.packbits(f).tobytes())
        if key in memo:
            return memo[key]
        var = order[level]
        axis = remaining.index(var)
        rest = remaining[:axis] + remaining[axis + 1:]
        f0, f1 = np.take(f, 0, axis=axis), np.take(f, 1, axis=axis)
        if np.array_equal(f0, f1):
            res = build(f0, level + 1, rest)
        else:
            lo, hi = build(f0, level + 1, rest), build(f1, level + 1, rest)
            x = d.inputs[var]
            if lo == 0 and hi == 1:
                res = x
            elif lo == 1 and hi == 0:
                res = new("NOT", x)
            elif lo == 0:
                res = new("AND", x, hi)
            elif hi == 1:
                res = new("OR", x, lo)
            else:
                a = const(lo) if isinstance(lo, int) else lo
                b = const(hi) if isinstance(hi, int) else hi
                res = new("MUX", x, a, b)
        memo[key] = res
        return res

    root = build(cube, 0, tuple(range(k)))
    if isinstance(root, int):
        root = const(root)
    return Patch(gates, root)


def evaluate_patch(p: Patch, d: DiffFunction) -> np.ndarray:
    """Truth table of a patch over ``d.inputs``."""
    if p.root is None:
        return np.zeros(1 << len(d.inputs), dtype=bool)
    wrapper = Netlist("patch", d.inputs, (p.root,) if p.root not in d.inputs else (), p.gates, {})
    val = simulate_batch(wrapper, all_input_vectors(len(d.inputs)))
    return val[p.root]


def apply_patch(n: Netlist, output: str, patch: Patch, tag: str) -> Netlist:
    """Rectify ``output`` as ``faulty_output ^ patch``; other nets keep their names."""
    if patch.root is None:
        return n
    taken = set(n.nets) | set(patch.gates)
    pre = _fresh(f"{output}.pre{tag}", taken)
    gates = dict(n.gates)
    if output in gates:
        g = gates.pop(output)
        gates[pre] = Gate(g.kind, g.inputs, pre)
    else:
        # the output is a primary input or latch net; route it through a buffer
        raise InterfaceMismatch(f"output {output!r} is not gate-driven")
    for name, g in patch.gates.items():
        gates[name] = g
    gates[output] = Gate("XOR", (pre, patch.root), output)
    return n.replace(gates=gates)


@dataclass(frozen=True)
class Variant:
    id: int
    netlist: Netlist
    plan: FaultPlan
    stage: str
    repair_iterations: int
    patch_gate_count: int
    gate_count: int
    critical_delay: float
    seed: int

    def manifest_entry(self) -> dict:
        return {
            "id": self.id,
            "seed": self.seed,
            "stage": self.stage,
            "plan": self.plan.to_json(),
            "repair_iterations": self.repair_iterations,
            "patch_gate_count": self.patch_gate_count,
            "gate_count": self.gate_count,
            "critical_delay": self.critical_delay,
        }


@dataclass(frozen=True)
class RepairResult:
    netlist: Netlist
    iterations: int
    patch_gate_count: int
    mismatch_history: Tuple[int, ...]   # total mismatches before each iteration


def repair(orig: Netlist, faulty: Netlist, seed=0, iteration_limit: int = 64) -> RepairResult:
    """Rectify ``faulty`` until it is equivalent to ``orig``, worst output first."""
    cur = faulty
    iterations = 0
    patch_gates = 0
    history = []
    while True:
        report = check_equivalence(orig, cur)
        if report.equivalent:
            break
        if iterations >= iteration_limit:
            raise IterationLimit(f"seed {seed}: still {len(report.entries)} NEQ outputs")
        diffs = diagnose(orig, cur, report)
        history.append(sum(df.mismatches for df in diffs.values()))
        worst = min(diffs.values(), key=lambda df: (-df.mismatches, df.output))
        patch = synthesize_patch(worst, [seed, iterations], prefix=f"fix{iterations}.")
        cur = remove_dead(apply_patch(cur, worst.output, patch, str(iterations)))
        patch_gates += len(patch.gates) + 1
        iterations += 1
    return RepairResult(cur, iterations, patch_gates, tuple(history))


def generate_variant(
    orig: Netlist,
    policy: str = "critical",
    rate: float = 0.10,
    mix: str = "mixed",
    stage: str = "postopt",
    seed: int = 0,
    *,
    variant_id: Optional[int] = None,
    cap: float = DEFAULT_RATE_CAP,
    delay_model: Optional[DelayModel] = None,
    iteration_limit: int = 64,
) -> Variant:
    """Fault, optimize, and repair ``orig`` into a certified isofunctional variant."""
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    dm = delay_model or DelayModel()
    plan = select_nets(orig, policy, rate, seed, mix, cap=cap, delay_model=dm)
    fixed = repair(orig, optimize(inject(orig, plan)), seed, iteration_limit)
    cur = fixed.netlist
    if stage == "preopt":
        cur = optimize(cur)
    if not check_equivalence(orig, cur).equivalent:
        raise AssertionError("repaired variant failed final equivalence check")
    vid = seed if variant_id is None else variant_id
    return Variant(
        id=vid,
        netlist=cur.replace(name=f"{orig.name}_v{vid}"),
        plan=plan,
        stage=stage,
        repair_iterations=fixed.iterations,
        patch_gate_count=fixed.patch_gate_count,
        gate_count=len(cur.gates),
        critical_delay=analyze(cur, dm).critical_delay,
        seed=seed,
    )


def _one(args):
    orig, seed, vid, kw = args
    try:
        return generate_variant(orig, seed=seed, variant_id=vid, **kw)
    except (ConeTooLarge, IterationLimit) as exc:
        return exc


def generate_variants(orig: Netlist, seeds: Sequence[int], threads: int = 1, **kw):
    """Variants for each seed in order; failed seeds are returned as ``(seed, error)``.

    Successful variants get consecutive ids in seed order, whatever the
    number of worker processes.
    """
    jobs = [(orig, s, None, kw) for s in seeds]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_one, jobs))
    else:
        results = [_one(j) for j in jobs]
    variants, failures = [], []
    for s, r in zip(seeds, results):
        if isinstance(r, Exception):
            log.warning("seed %d aborted: %s", s, r)
            failures.append((s, r))
            continue
        vid = len(variants)
        variants.append(dataclasses.replace(r, id=vid, netlist=r.netlist.replace(name=f"{orig.name}_v{vid}")))
    return variants, failures
