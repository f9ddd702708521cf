"""Tseitin encoding of gate netlists and a small DPLL solver.

Used for equivalence checks on interfaces too wide for exhaustive
simulation.  Literals are non-zero ints in the DIMACS convention.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence

from .netlist import Netlist


class Cnf:
    def __init__(self):
        self.nvars = 0
        self.clauses: List[List[int]] = []

    def var(self) -> int:
        self.nvars += 1
        return self.nvars

    def add(self, *lits: int) -> None:
        self.clauses.append(list(lits))

    def xor2(self, a: int, b: int) -> int:
        z = self.var()
        self.add(-z, a, b)
        self.add(-z, -a, -b)
        self.add(z, -a, b)
        self.add(z, a, -b)
        return z

    def and_n(self, ins: Sequence[int]) -> int:
        z = self.var()
        for a in ins:
            self.add(-z, a)
        self.add(z, *[-a for a in ins])
        return z


def encode(n: Netlist, cnf: Cnf, shared: Optional[Dict[str, int]] = None) -> Dict[str, int]:
    """Add clauses for the combinational part of ``n``; returns net -> variable.

    ``shared`` pre-binds nets (typically primary inputs) to existing
    variables.  Latch outputs become free variables.
    """
    var: Dict[str, int] = dict(shared or {})
    for net in list(n.inputs) + list(n.latches):
        if net not in var:
            var[net] = cnf.var()
    for net in n.topo_order:
        g = n.gates[net]
        ins = [var[s] for s in g.inputs]
        k = g.kind
        if k == "CONST0" or k == "CONST1":
            z = cnf.var()
            cnf.add(z if k == "CONST1" else -z)
        elif k == "BUF":
            z = ins[0]
        elif k == "NOT":
            z = -ins[0]
        elif k in ("AND", "NAND"):
            z = cnf.and_n(ins)
            z = z if k == "AND" else -z
        elif k in ("OR", "NOR"):
            z = -cnf.and_n([-a for a in ins])
            z = z if k == "OR" else -z
        elif k in ("XOR", "XNOR"):
            z = ins[0]
            for a in ins[1:]:
                z = cnf.xor2(z, a)
            z = z if k == "XOR" else -z
        elif k == "MUX":
            s, a, b = ins
            z = cnf.var()
            cnf.add(s, -a, z)
            cnf.add(s, a, -z)
            cnf.add(-s, -b, z)
            cnf.add(-s, b, -z)
        else:
            raise ValueError(k)
        var[net] = z
    return var


def solve(cnf: Cnf, order: Sequence[int] = ()) -> Optional[Dict[int, bool]]:
    """DPLL with two watched literals and chronological backtracking.

    Variables in ``order`` are decided first.  Returns a satisfying
    assignment or None.
    """
    nv = cnf.nvars
    clauses = [list(dict.fromkeys(c)) for c in cnf.clauses]
    assign: List[Optional[bool]] = [None] * (nv + 1)
    trail: List[int] = []
    watches: Dict[int, List[int]] = {}
    units = []
    for ci, c in enumerate(clauses):
        if not c:
            return None
        if len(c) == 1:
            units.append(c[0])
            continue
        watches.setdefault(c[0], []).append(ci)
        watches.setdefault(c[1], []).append(ci)

    def value(lit: int) -> Optional[bool]:
        v = assign[abs(lit)]
        return None if v is None else (v if lit > 0 else not v)

    def enqueue(lit: int) -> bool:
        v = value(lit)
        if v is not None:
            return v
        assign[abs(lit)] = lit > 0
        trail.append(lit)
        return True

    def propagate(start: int) -> bool:
        i = start
        while i < len(trail):
            false_lit = -trail[i]
            i += 1
            ws = watches.get(false_lit, [])
            j = 0
            while j < len(ws):
                ci = ws[j]
                c = clauses[ci]
                if c[0] == false_lit:
                    c[0], c[1] = c[1], c[0]
                if value(c[0]) is True:
                    j += 1
                    continue
                for k in range(2, len(c)):
                    if value(c[k]) is not False:
                        c[1], c[k] = c[k], c[1]
                        watches.setdefault(c[1], []).append(ci)
                        ws[j] = ws[-1]
                        ws.pop()
                        break
                else:
                    if not enqueue(c[0]):
                        return False
                    j += 1
        return True

    for u in units:
        if not enqueue(u):
            return None
    if not propagate(0):
        return None

    seq = list(dict.fromkeys(list(order) + list(range(1, nv + 1))))
    # decision stack entries: (trail length before decision, literal, flipped)
    stack: List[tuple] = []
    while True:
        lit = None
        for v in seq:
            if assign[v] is None:
                lit = -v
                break
        if lit is None:
            return {v: bool(assign[v]) for v in range(1, nv + 1)}
        stack.append((len(trail), lit, False))
        enqueue(lit)
        ok = propagate(len(trail) - 1)
        while not ok:
            while stack and stack[-1][2]:
                mark, _, _ = stack.pop()
                for l in trail[mark:]:
                    assign[abs(l)] = None
                del trail[mark:]
            if not stack:
                return None
            mark, dlit, _ = stack.pop()
            for l in trail[mark:]:
                assign[abs(l)] = None
            del trail[mark:]
            stack.append((mark, -dlit, True))
            enqueue(-dlit)
            ok = propagate(len(trail) - 1)
