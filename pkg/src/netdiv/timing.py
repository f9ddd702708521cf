"""Static timing analysis over gate netlists.

Arrival times are longest weighted paths from sources (primary inputs at
t=0, latch outputs at the clock-to-output delay) to every net.  Endpoints
are primary outputs and latch data inputs.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from .errors import TooFewVariants
from .netlist import Netlist

DEFAULT_BASE_DELAYS = {
    "BUF": 1.0,
    "NOT": 1.0,
    "AND": 2.0,
    "OR": 2.0,
    "NAND": 2.0,
    "NOR": 2.0,
    "XOR": 3.0,
    "XNOR": 3.0,
    "MUX": 3.0,
    "CONST0": 0.0,
    "CONST1": 0.0,
}


@dataclass(frozen=True)
class DelayModel:
    base: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_BASE_DELAYS))
    fanout_increment: float = 0.2
    clk_to_q: float = 1.0

    def __post_init__(self):
        if any(v < 0 for v in self.base.values()) or self.fanout_increment < 0 or self.clk_to_q < 0:
            raise ValueError("delays must be non-negative")
        if self.base.get("CONST0", 0) or self.base.get("CONST1", 0):
            raise ValueError("constant drivers have zero delay")


def gate_delays(n: Netlist, m: DelayModel) -> Dict[str, float]:
    """Delay of each gate: base delay plus the fanout increment per load beyond the first."""
    loads = {net: 0 for net in n.gates}
    for g in n.gates.values():
        for s in g.inputs:
            if s in loads:
                loads[s] += 1
    for lt in n.latches.values():
        if lt.data in loads:
            loads[lt.data] += 1
    for o in n.outputs:
        if o in loads:
            loads[o] += 1
    out = {}
    for net, g in n.gates.items():
        base = m.base[g.kind]
        out[net] = 0.0 if base == 0 else base + m.fanout_increment * max(0, loads[net] - 1)
    return out


@dataclass(frozen=True)
class TimingReport:
    arrival: Mapping[str, float]
    slack: Mapping[str, float]
    critical_path: Tuple[str, ...]
    critical_delay: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["net", "arrival", "slack"])
        for net in self.arrival:
            w.writerow([net, f"{self.arrival[net]:.6g}", f"{self.slack[net]:.6g}"])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "critical_delay": self.critical_delay,
            "critical_path": list(self.critical_path),
            "nets": len(self.arrival),
            "zero_slack_nets": sum(1 for s in self.slack.values() if s <= 1e-9),
        }


def endpoints(n: Netlist) -> List[str]:
    eps = list(dict.fromkeys(list(n.outputs) + [lt.data for lt in n.latches.values()]))
    return eps


def analyze(n: Netlist, m: DelayModel = DelayModel()) -> TimingReport:
    delay = gate_delays(n, m)
    arrival: Dict[str, float] = {x: 0.0 for x in n.inputs}
    for net in n.latches:
        arrival[net] = m.clk_to_q
    for net in n.topo_order:
        g = n.gates[net]
        start = max((arrival[s] for s in g.inputs), default=0.0)
        arrival[net] = start + delay[net]

    eps = endpoints(n)
    crit = max((arrival[e] for e in eps), default=0.0)

    # longest remaining path from each net to any endpoint
    tail: Dict[str, float] = {}
    eps_set = set(eps)
    for net in n.nets:
        tail[net] = 0.0 if net in eps_set else float("-inf")
    for net in reversed(n.topo_order):
        g = n.gates[net]
        if tail[net] == float("-inf"):
            continue
        for s in g.inputs:
            tail[s] = max(tail[s], tail[net] + delay[net])
    slack = {}
    for net in n.nets:
        reach = arrival[net] + (tail[net] if tail[net] != float("-inf") else 0.0)
        slack[net] = max(0.0, crit - reach)
        if abs(slack[net]) < 1e-9:
            slack[net] = 0.0

    path: List[str] = []
    if eps:
        net = min((e for e in eps if abs(arrival[e] - crit) < 1e-9))
        while True:
            path.append(net)
            g = n.gates.get(net)
            if g is None or not g.inputs:
                break
            want = arrival[net] - delay[net]
            net = min(s for s in g.inputs if abs(arrival[s] - want) < 1e-9)
        path.reverse()
    ordered_arrival = {net: arrival[net] for net in n.nets}
    ordered_slack = {net: slack[net] for net in n.nets}
    return TimingReport(ordered_arrival, ordered_slack, tuple(path), crit)


def brute_force_critical_delay(n: Netlist, m: DelayModel = DelayModel()) -> float:
    """Enumerate every source-to-endpoint path; exponential, for small netlists only."""
    delay = gate_delays(n, m)
    best = 0.0

    def walk(net: str) -> List[float]:
        g = n.gates.get(net)
        if g is None:
            return [m.clk_to_q if net in n.latches else 0.0]
        if not g.inputs:
            return [delay[net]]
        lengths = []
        for s in g.inputs:
            lengths += [t + delay[net] for t in walk(s)]
        return lengths

    for e in endpoints(n):
        best = max([best] + walk(e))
    return best


def rank_nets(report: TimingReport, faultable: Sequence[str]) -> List[str]:
    """Most critical first: ascending slack, ties broken by net name."""
    return sorted(faultable, key=lambda net: (report.slack[net], net))


@dataclass(frozen=True)
class DelayStats:
    delays: Tuple[float, ...]
    mean: float
    std: float
    bin_edges: Tuple[float, ...]
    counts: Tuple[int, ...]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_low", "bin_high", "count"])
        for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
            w.writerow([f"{lo:.6g}", f"{hi:.6g}", c])
        return buf.getvalue()


def delay_distribution(variants: Sequence[Netlist], m: DelayModel = DelayModel(), bins: int = 16) -> DelayStats:
    if len(variants) < 2:
        raise TooFewVariants("delay distribution needs at least two variants")
    delays = np.array(sorted(analyze(v, m).critical_delay for v in variants))
    lo, hi = float(delays.min()), float(delays.max())
    if hi - lo < 1e-12:
        edges = np.array([lo - 0.5, hi + 0.5])
    else:
        edges = np.linspace(lo, hi, bins + 1)
    counts, edges = np.histogram(delays, bins=edges)
    return DelayStats(
        tuple(float(d) for d in delays),
        float(delays.mean()),
        float(delays.std()),
        tuple(float(e) for e in edges),
        tuple(int(c) for c in counts),
    )
