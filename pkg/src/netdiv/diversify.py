"""Net selection, stuck-at fault injection, and post-injection cleanup."""

from __future__ import annotations

import decimal
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import NotEnoughFaultableNets, RateExceedsCap, UnknownNet
from .netlist import CONST_KINDS, Gate, Latch, Netlist, net_census
from .timing import DelayModel, analyze, rank_nets

DEFAULT_RATE_CAP = 0.25
POLICIES = ("random", "critical")
FAULT_MIXES = ("sa0", "sa1", "mixed")
STAGES = ("preopt", "postopt")


def round_half_up(x: float) -> int:
    return int(decimal.Decimal(repr(x)).quantize(decimal.Decimal(1), rounding=decimal.ROUND_HALF_UP))


def fault_count(rate: float, total_nets: int) -> int:
    return round_half_up(rate * total_nets)


@dataclass(frozen=True)
class FaultPlan:
    entries: Tuple[Tuple[str, str], ...]   # (net, "SA0" | "SA1")
    policy: str
    rate: float
    seed: int
    mix: str = "mixed"

    def to_json(self) -> dict:
        return {
            "policy": self.policy,
            "rate": self.rate,
            "seed": self.seed,
            "mix": self.mix,
            "entries": [{"net": n, "fault": k} for n, k in self.entries],
        }

    @classmethod
    def from_json(cls, d: dict) -> "FaultPlan":
        return cls(
            tuple((e["net"], e["fault"]) for e in d["entries"]),
            d["policy"],
            float(d["rate"]),
            int(d["seed"]),
            d.get("mix", "mixed"),
        )


def select_nets(
    n: Netlist,
    policy: str = "critical",
    rate: float = 0.10,
    seed: int = 0,
    mix: str = "mixed",
    cap: float = DEFAULT_RATE_CAP,
    delay_model: Optional[DelayModel] = None,
) -> FaultPlan:
    """Choose ``round_half_up(rate * total_nets)`` faultable nets and a fault kind for each.

    ``random`` draws uniformly without replacement; ``critical`` takes the
    lowest-slack nets first.  The fault kind follows ``mix``; ``mixed``
    flips a seeded fair coin per net.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    if mix not in FAULT_MIXES:
        raise ValueError(f"unknown fault mix {mix!r}")
    if rate < 0:
        raise ValueError("rate must be non-negative")
    if rate > cap:
        raise RateExceedsCap(rate, cap)
    total, _, faultable = net_census(n)
    count = fault_count(rate, total)
    if count > len(faultable):
        raise NotEnoughFaultableNets(f"need {count} nets, only {len(faultable)} faultable")
    rng = np.random.default_rng(seed)
    if policy == "random":
        idx = rng.choice(len(faultable), size=count, replace=False) if count else []
        nets = [faultable[i] for i in idx]
    else:
        report = analyze(n, delay_model or DelayModel())
        nets = rank_nets(report, faultable)[:count]
    if mix == "mixed":
        coins = rng.integers(0, 2, size=count)
        kinds = ["SA1" if c else "SA0" for c in coins]
    else:
        kinds = [mix.upper()] * count
    return FaultPlan(tuple(zip(nets, kinds)), policy, rate, seed, mix)


def _fresh(name: str, taken) -> str:
    if name not in taken:
        return name
    i = 1
    while f"{name}_{i}" in taken:
        i += 1
    return f"{name}_{i}"


def inject(n: Netlist, plan: FaultPlan) -> Netlist:
    """Tie every consumer of each planned net to a constant driver.

    The original drivers stay in place; :func:`optimize` reaps them.
    """
    nets = set(n.nets)
    for net, kind in plan.entries:
        if net not in nets:
            raise UnknownNet(net)
        if kind not in ("SA0", "SA1"):
            raise ValueError(f"bad fault kind {kind!r}")
    if not plan.entries:
        return n
    gates = dict(n.gates)
    consts = {}
    for kind in ("SA0", "SA1"):
        if any(k == kind for _, k in plan.entries):
            cname = _fresh(f"{kind.lower()}_tie", nets)
            gates[cname] = Gate("CONST0" if kind == "SA0" else "CONST1", (), cname)
            consts[kind] = cname
    target = {net: consts[kind] for net, kind in plan.entries}
    for net, g in list(gates.items()):
        if any(s in target for s in g.inputs):
            gates[net] = Gate(g.kind, tuple(target.get(s, s) for s in g.inputs), net)
    latches = {
        net: Latch(net, target.get(lt.data, lt.data), lt.init) for net, lt in n.latches.items()
    }
    return n.replace(gates=gates, latches=latches)


# --- optimization ------------------------------------------------------------


def _simplify(g: Gate, const: Dict[str, int]) -> Gate:
    """One local rewrite of ``g`` given known constant nets; returns ``g`` if none applies."""
    kind, ins, out = g.kind, list(g.inputs), g.output
    if kind in CONST_KINDS:
        return g
    vals = [const.get(s) for s in ins]
    if kind in ("BUF", "NOT"):
        if vals[0] is not None:
            v = vals[0] if kind == "BUF" else 1 - vals[0]
            return Gate(f"CONST{v}", (), out)
        return g
    if kind in ("AND", "NAND", "OR", "NOR"):
        absorb = 0 if kind in ("AND", "NAND") else 1
        invert = kind in ("NAND", "NOR")
        if absorb in vals:
            return Gate(f"CONST{absorb ^ invert}", (), out)
        keep = list(dict.fromkeys(s for s, v in zip(ins, vals) if v is None))
        if len(keep) == len(ins):
            return g
        if not keep:
            return Gate(f"CONST{(1 - absorb) ^ invert}", (), out)
        if len(keep) == 1:
            return Gate("NOT" if invert else "BUF", (keep[0],), out)
        return Gate(kind, tuple(keep), out)
    if kind in ("XOR", "XNOR"):
        parity = int(kind == "XNOR")
        keep = []
        for s, v in zip(ins, vals):
            if v is None:
                keep.append(s)
            else:
                parity ^= v
        # x ^ x cancels
        counts: Dict[str, int] = {}
        for s in keep:
            counts[s] = counts.get(s, 0) + 1
        keep = [s for s in dict.fromkeys(keep) if counts[s] % 2]
        if len(keep) == len(ins) and parity == int(kind == "XNOR"):
            return g
        if not keep:
            return Gate(f"CONST{parity}", (), out)
        if len(keep) == 1:
            return Gate("NOT" if parity else "BUF", (keep[0],), out)
        return Gate("XNOR" if parity else "XOR", tuple(keep), out)
    if kind == "MUX":
        s, a, b = ins
        vs, va, vb = vals
        if vs is not None:
            return Gate("BUF", (b if vs else a,), out)
        if a == b:
            return Gate("BUF", (a,), out)
        if va is not None and vb is not None:
            if va == vb:
                return Gate(f"CONST{va}", (), out)
            return Gate("BUF" if vb else "NOT", (s,), out)
        if va == 0:
            return Gate("AND", (s, b), out)
        if vb == 1:
            return Gate("OR", (s, a), out)
        return g
    raise ValueError(kind)


def remove_dead(n: Netlist) -> Netlist:
    """Drop gates whose outputs reach no primary output or latch."""
    live = set()
    stack = list(n.outputs) + [lt.data for lt in n.latches.values()]
    while stack:
        net = stack.pop()
        if net in live:
            continue
        live.add(net)
        g = n.gates.get(net)
        if g is not None:
            stack.extend(g.inputs)
    gates = {net: g for net, g in n.gates.items() if net in live}
    if len(gates) == len(n.gates):
        return n
    return n.replace(gates=gates)


def optimize(n: Netlist) -> Netlist:
    """Constant propagation, BUF collapse, and dead-logic removal to a fixpoint.

    The primary input and output lists are left untouched.
    """
    outs = set(n.outputs)
    gates = dict(n.gates)
    latches = dict(n.latches)
    changed = True
    while changed:
        changed = False
        const = {net: int(g.kind == "CONST1") for net, g in gates.items() if g.kind in CONST_KINDS}
        for net in list(gates):
            g = gates[net]
            new = _simplify(g, const)
            if new != g:
                gates[net] = new
                if new.kind in CONST_KINDS:
                    const[net] = int(new.kind == "CONST1")
                changed = True
        # consumers of a BUF read its source directly
        alias = {net: g.inputs[0] for net, g in gates.items() if g.kind == "BUF"}

        def resolve(s):
            seen = set()
            while s in alias and s not in seen:
                seen.add(s)
                s = alias[s]
            return s

        if alias:
            for net, g in list(gates.items()):
                if g.kind == "BUF" and net in outs:
                    src = resolve(g.inputs[0])
                    if src != g.inputs[0]:
                        gates[net] = Gate("BUF", (src,), net)
                        changed = True
                    continue
                new_ins = tuple(resolve(s) for s in g.inputs)
                if new_ins != g.inputs:
                    gates[net] = Gate(g.kind, new_ins, net)
                    changed = True
            for net, lt in list(latches.items()):
                src = resolve(lt.data)
                if src != lt.data:
                    latches[net] = Latch(net, src, lt.init)
                    changed = True
        before = len(gates)
        trimmed = remove_dead(Netlist(n.name, n.inputs, n.outputs, gates, latches))
        gates = dict(trimmed.gates)
        changed = changed or len(gates) != before
    return Netlist(n.name, n.inputs, n.outputs, gates, latches)
