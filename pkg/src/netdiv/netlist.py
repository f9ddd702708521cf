"""Gate-level netlist IR, GNL text format, and logic simulation.

A GNL file holds one statement per line::

    # comment
    INPUT(a)
    OUTPUT(y)
    n1 = AND(a, b)
    q = DFF(n1)

Every net has exactly one driver.  Latches are D flip-flops that power up
at 0; their outputs act as sources of the combinational graph.
"""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    ArityMismatch,
    CombinationalCycle,
    DimensionMismatch,
    GnlSyntaxError,
    MultipleDriver,
    UndrivenNet,
)

GATE_KINDS = ("BUF", "NOT", "AND", "OR", "NAND", "NOR", "XOR", "XNOR", "MUX", "CONST0", "CONST1")
CONST_KINDS = frozenset({"CONST0", "CONST1"})
_ARITY = {
    "BUF": (1, 1),
    "NOT": (1, 1),
    "AND": (2, 8),
    "OR": (2, 8),
    "NAND": (2, 8),
    "NOR": (2, 8),
    "XOR": (2, 8),
    "XNOR": (2, 8),
    "MUX": (3, 3),
    "CONST0": (0, 0),
    "CONST1": (0, 0),
}

IDENT = r"[A-Za-z_][A-Za-z0-9_.]*"
_IDENT_RE = re.compile(rf"^{IDENT}$")


@dataclass(frozen=True)
class Gate:
    kind: str
    inputs: Tuple[str, ...]
    output: str


@dataclass(frozen=True)
class Latch:
    output: str
    data: str
    init: int = 0


@dataclass(frozen=True, eq=False)
class Netlist:
    """Immutable, validated gate-level circuit.

    ``gates`` and ``latches`` map the driven net name to its driver.
    Construction validates every structural invariant and raises the
    matching :mod:`netdiv.errors` exception on violation.
    """

    name: str
    inputs: Tuple[str, ...]
    outputs: Tuple[str, ...]
    gates: Mapping[str, Gate]
    latches: Mapping[str, Latch] = field(default_factory=dict)
    _order: Tuple[str, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        object.__setattr__(self, "gates", dict(self.gates))
        object.__setattr__(self, "latches", dict(self.latches))
        _validate(self)
        object.__setattr__(self, "_order", _topo_order(self))

    @property
    def topo_order(self) -> Tuple[str, ...]:
        """Gate output nets in topological order, ties broken by name."""
        return self._order

    @property
    def nets(self) -> List[str]:
        return list(self.inputs) + list(self.latches) + list(self._order)

    def driver_kind(self, net: str) -> str:
        if net in self.gates:
            return self.gates[net].kind
        if net in self.latches:
            return "DFF"
        return "INPUT"

    def fanout(self) -> Dict[str, List[str]]:
        """Map each net to the nets whose drivers read it (gates and latches)."""
        loads: Dict[str, List[str]] = {n: [] for n in self.nets}
        for g in self.gates.values():
            for src in g.inputs:
                loads[src].append(g.output)
        for lt in self.latches.values():
            loads[lt.data].append(lt.output)
        return loads

    def is_combinational(self) -> bool:
        return not self.latches

    def structure(self):
        """Hashable structural key; two netlists are identical iff keys match."""
        return (
            self.inputs,
            self.outputs,
            tuple(sorted((g.output, g.kind, g.inputs) for g in self.gates.values())),
            tuple(sorted((l.output, l.data, l.init) for l in self.latches.values())),
        )

    def same_structure(self, other: "Netlist") -> bool:
        return self.structure() == other.structure()

    def __eq__(self, other):
        if not isinstance(other, Netlist):
            return NotImplemented
        return self.name == other.name and self.same_structure(other)

    def __hash__(self):
        return hash((self.name, self.structure()))

    def replace(self, *, name=None, inputs=None, outputs=None, gates=None, latches=None) -> "Netlist":
        return Netlist(
            name=self.name if name is None else name,
            inputs=self.inputs if inputs is None else inputs,
            outputs=self.outputs if outputs is None else outputs,
            gates=self.gates if gates is None else gates,
            latches=self.latches if latches is None else latches,
        )


def _validate(n: Netlist) -> None:
    driven = set()

    def claim(net):
        if net in driven:
            raise MultipleDriver(net)
        driven.add(net)

    for net in n.inputs:
        claim(net)
    for net, g in n.gates.items():
        if g.output != net:
            raise ValueError(f"gate keyed {net!r} drives {g.output!r}")
        if g.kind not in _ARITY:
            raise ArityMismatch(net, g.kind, len(g.inputs))
        lo, hi = _ARITY[g.kind]
        if not lo <= len(g.inputs) <= hi:
            raise ArityMismatch(net, g.kind, len(g.inputs))
        claim(net)
    for net, lt in n.latches.items():
        if lt.output != net:
            raise ValueError(f"latch keyed {net!r} drives {lt.output!r}")
        claim(net)
    for g in n.gates.values():
        for src in g.inputs:
            if src not in driven:
                raise UndrivenNet(src)
    for lt in n.latches.values():
        if lt.data not in driven:
            raise UndrivenNet(lt.data)
    for net in n.outputs:
        if net not in driven:
            raise UndrivenNet(net)
    if len(set(n.outputs)) != len(n.outputs):
        raise MultipleDriver(next(o for o in n.outputs if n.outputs.count(o) > 1))


def _topo_order(n: Netlist) -> Tuple[str, ...]:
    gates = n.gates
    indeg = {}
    users: Dict[str, List[str]] = {}
    for net, g in gates.items():
        deps = {s for s in g.inputs if s in gates}
        indeg[net] = len(deps)
        for s in deps:
            users.setdefault(s, []).append(net)
    ready = [net for net, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        net = heapq.heappop(ready)
        order.append(net)
        for u in users.get(net, ()):
            indeg[u] -= 1
            if indeg[u] == 0:
                heapq.heappush(ready, u)
    if len(order) != len(gates):
        raise CombinationalCycle(_find_cycle(n, {k for k, d in indeg.items() if d > 0}))
    return tuple(order)


def _find_cycle(n: Netlist, stuck: set) -> List[str]:
    # walk backwards inside the stuck set until a net repeats
    start = min(stuck)
    path, seen = [], {}
    net = start
    while net not in seen:
        seen[net] = len(path)
        path.append(net)
        net = min(s for s in n.gates[net].inputs if s in stuck)
    cycle = path[seen[net]:]
    cycle.reverse()
    return cycle


# --- GNL text format ---------------------------------------------------------

_DECL_RE = re.compile(rf"^(INPUT|OUTPUT)\s*\(\s*({IDENT})\s*\)$")
_ASSIGN_RE = re.compile(rf"^({IDENT})\s*=\s*([A-Za-z0-9_]+)\s*\((.*)\)$")
_NAME_RE = re.compile(rf"^#\s*netlist:\s*({IDENT})\s*$")


def parse_netlist(text: str, name: str = "top") -> Netlist:
    """Parse GNL text into a validated :class:`Netlist`.

    A leading ``# netlist: <name>`` comment (as emitted by
    :func:`write_netlist`) sets the netlist name.
    """
    inputs: List[str] = []
    outputs: List[str] = []
    gates: Dict[str, Gate] = {}
    latches: Dict[str, Latch] = {}
    drivers = set()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _NAME_RE.match(line)
            if m:
                name = m.group(1)
            continue
        col = raw.index(line[0]) + 1
        m = _DECL_RE.match(line)
        if m:
            kw, net = m.groups()
            if kw == "INPUT":
                if net in drivers:
                    raise MultipleDriver(net)
                drivers.add(net)
                inputs.append(net)
            else:
                outputs.append(net)
            continue
        m = _ASSIGN_RE.match(line)
        if not m:
            raise GnlSyntaxError(f"cannot parse statement {line!r}", lineno, col)
        net, kind, argtext = m.groups()
        kind = kind.upper()
        args = [a.strip() for a in argtext.split(",")] if argtext.strip() else []
        for a in args:
            if not _IDENT_RE.match(a):
                pos = raw.find(a, raw.index("(")) + 1 if a else raw.index("(") + 2
                raise GnlSyntaxError(f"bad identifier {a!r}", lineno, max(pos, 1))
        if net in drivers:
            raise MultipleDriver(net)
        drivers.add(net)
        if kind == "DFF":
            if len(args) != 1:
                raise ArityMismatch(net, "DFF", len(args))
            latches[net] = Latch(net, args[0], 0)
        elif kind in _ARITY:
            gates[net] = Gate(kind, tuple(args), net)
        else:
            raise GnlSyntaxError(f"unknown gate kind {kind!r}", lineno, raw.index("=") + 2)
    return Netlist(name, tuple(inputs), tuple(outputs), gates, latches)


def write_netlist(n: Netlist) -> str:
    """Emit canonical GNL: inputs, outputs, gates in topological order, then latches.

    GNL has no syntax for a latch initial value, so only all-zero initial
    states can be written; anything else raises ``ValueError``.
    """
    nonzero = sorted(net for net, lt in n.latches.items() if lt.init)
    if nonzero:
        raise ValueError(f"GNL cannot express nonzero latch init: {', '.join(nonzero)}")
    lines = [f"# netlist: {n.name}"]
    lines += [f"INPUT({x})" for x in n.inputs]
    lines += [f"OUTPUT({x})" for x in n.outputs]
    for net in n.topo_order:
        g = n.gates[net]
        lines.append(f"{net} = {g.kind}({', '.join(g.inputs)})")
    for net in sorted(n.latches):
        lines.append(f"{net} = DFF({n.latches[net].data})")
    return "\n".join(lines) + "\n"


# --- simulation --------------------------------------------------------------


@dataclass(frozen=True)
class SimState:
    """Latch contents plus the last combinational valuation (for toggle counting)."""

    latches: Mapping[str, int]
    valuation: Optional[Mapping[str, int]] = None


def initial_state(n: Netlist) -> SimState:
    return SimState({net: lt.init for net, lt in n.latches.items()}, None)


def _gate_value(kind: str, vals: Sequence[int]) -> int:
    if kind == "BUF":
        return vals[0]
    if kind == "NOT":
        return 1 - vals[0]
    if kind in ("AND", "NAND"):
        v = int(all(vals))
        return v if kind == "AND" else 1 - v
    if kind in ("OR", "NOR"):
        v = int(any(vals))
        return v if kind == "OR" else 1 - v
    if kind in ("XOR", "XNOR"):
        v = sum(vals) & 1
        return v if kind == "XOR" else 1 - v
    if kind == "MUX":
        return vals[2] if vals[0] else vals[1]
    if kind == "CONST0":
        return 0
    if kind == "CONST1":
        return 1
    raise ValueError(kind)


def evaluate(n: Netlist, inputs: Sequence[int], state: Optional[SimState] = None):
    """One clock cycle.  Returns ``(outputs, next_state, valuation)``.

    Combinational values settle from the current latch contents and the
    primary inputs; latches then capture their data nets.
    """
    if len(inputs) != len(n.inputs):
        raise DimensionMismatch(f"expected {len(n.inputs)} input bits, got {len(inputs)}")
    if state is None:
        state = initial_state(n)
    val: Dict[str, int] = {}
    for net, b in zip(n.inputs, inputs):
        val[net] = int(b) & 1
    for net in n.latches:
        val[net] = int(state.latches[net]) & 1
    for net in n.topo_order:
        g = n.gates[net]
        val[net] = _gate_value(g.kind, [val[s] for s in g.inputs])
    nxt = SimState({net: val[lt.data] for net, lt in n.latches.items()}, val)
    return [val[o] for o in n.outputs], nxt, val


def evaluate_naive(n: Netlist, inputs: Sequence[int], latch_values: Optional[Mapping[str, int]] = None):
    """Order-free fixpoint evaluation; used as an oracle for :func:`evaluate`."""
    latch_values = latch_values or {net: lt.init for net, lt in n.latches.items()}
    val: Dict[str, int] = dict(zip(n.inputs, (int(b) & 1 for b in inputs)))
    val.update(latch_values)
    pending = set(n.gates)
    while pending:
        progressed = False
        for net in sorted(pending):
            g = n.gates[net]
            if all(s in val for s in g.inputs):
                val[net] = _gate_value(g.kind, [val[s] for s in g.inputs])
                pending.discard(net)
                progressed = True
        if not progressed:
            raise CombinationalCycle(sorted(pending))
    return [val[o] for o in n.outputs], val


def _gate_value_vec(kind: str, cols: List[np.ndarray], size: int) -> np.ndarray:
    if kind == "BUF":
        return cols[0]
    if kind == "NOT":
        return ~cols[0]
    if kind == "AND":
        return np.logical_and.reduce(cols)
    if kind == "NAND":
        return ~np.logical_and.reduce(cols)
    if kind == "OR":
        return np.logical_or.reduce(cols)
    if kind == "NOR":
        return ~np.logical_or.reduce(cols)
    if kind == "XOR":
        return np.logical_xor.reduce(cols)
    if kind == "XNOR":
        return ~np.logical_xor.reduce(cols)
    if kind == "MUX":
        return np.where(cols[0], cols[2], cols[1])
    if kind == "CONST0":
        return np.zeros(size, dtype=bool)
    if kind == "CONST1":
        return np.ones(size, dtype=bool)
    raise ValueError(kind)


def simulate_batch(
    n: Netlist,
    input_matrix: np.ndarray,
    latch_values: Optional[Mapping[str, np.ndarray]] = None,
) -> Dict[str, np.ndarray]:
    """Bit-parallel combinational evaluation of many vectors at once.

    ``input_matrix`` has shape ``(vectors, len(n.inputs))``.  Returns a
    boolean column per net.  Latch outputs default to their init value.
    """
    m = np.asarray(input_matrix, dtype=bool)
    if m.ndim != 2 or m.shape[1] != len(n.inputs):
        raise DimensionMismatch(f"input matrix must have {len(n.inputs)} columns")
    size = m.shape[0]
    val: Dict[str, np.ndarray] = {net: m[:, i] for i, net in enumerate(n.inputs)}
    for net, lt in n.latches.items():
        if latch_values is not None and net in latch_values:
            val[net] = np.asarray(latch_values[net], dtype=bool)
        else:
            val[net] = np.full(size, bool(lt.init))
    for net in n.topo_order:
        g = n.gates[net]
        val[net] = _gate_value_vec(g.kind, [val[s] for s in g.inputs], size)
    return val


def all_input_vectors(k: int) -> np.ndarray:
    """Every k-bit vector, row r holding the bits of r (input 0 = LSB)."""
    idx = np.arange(1 << k, dtype=np.int64)
    return ((idx[:, None] >> np.arange(k)) & 1).astype(bool)


def output_table(n: Netlist) -> np.ndarray:
    """Exhaustive truth table, shape ``(2**inputs, outputs)``."""
    val = simulate_batch(n, all_input_vectors(len(n.inputs)))
    return np.stack([val[o] for o in n.outputs], axis=1)


def net_census(n: Netlist):
    """``(total nets, gate count, faultable nets)``.

    Faultable nets are internal gate outputs: primary outputs and constant
    drivers are excluded.
    """
    total = len(n.inputs) + len(n.gates) + len(n.latches)
    outs = set(n.outputs)
    faultable = [
        net for net in n.topo_order if net not in outs and n.gates[net].kind not in CONST_KINDS
    ]
    return total, len(n.gates), faultable


def bits_of(value: int, width: int) -> List[int]:
    """LSB-first bit list."""
    return [(value >> i) & 1 for i in range(width)]


def value_of(bits: Iterable[int]) -> int:
    return sum(int(b) << i for i, b in enumerate(bits))
