"""GNLB binary serialization of netlists and structural delta scripts.

A full GNLB image stands in for a complete configuration; a delta script
holds only the gate records that differ between two variants, keyed by
output net.  All integers are little-endian and strings are UTF-8 with a
u16 length prefix.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .errors import InterfaceMismatch, NetlistError
from .netlist import GATE_KINDS, Gate, Latch, Netlist

GNLB_MAGIC = b"GNLB"
GNLD_MAGIC = b"GNLD"
VERSION = 1
KIND_CODES = {k: i for i, k in enumerate(GATE_KINDS)}
CODE_KINDS = {i: k for k, i in KIND_CODES.items()}


class FormatError(NetlistError):
    pass


def _str(buf: io.BytesIO, s: str) -> None:
    b = s.encode("utf-8")
    if len(b) > 0xFFFF:
        raise FormatError(f"string too long: {s[:20]}...")
    buf.write(struct.pack("<H", len(b)))
    buf.write(b)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("truncated data")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def str(self) -> str:
        (n,) = self.unpack("<H")
        return self.take(n).decode("utf-8")

    def done(self) -> None:
        if self.pos != len(self.data):
            raise FormatError("trailing bytes")


def _gate_record(buf: io.BytesIO, g: Gate) -> None:
    _str(buf, g.output)
    buf.write(struct.pack("<BB", KIND_CODES[g.kind], len(g.inputs)))
    for s in g.inputs:
        _str(buf, s)


def _read_gate(r: _Reader) -> Gate:
    out = r.str()
    code, k = r.unpack("<BB")
    if code not in CODE_KINDS:
        raise FormatError(f"bad gate kind code {code}")
    return Gate(CODE_KINDS[code], tuple(r.str() for _ in range(k)), out)


def _latch_record(buf: io.BytesIO, lt: Latch) -> None:
    _str(buf, lt.output)
    _str(buf, lt.data)
    buf.write(struct.pack("<B", lt.init))


def _read_latch(r: _Reader) -> Latch:
    out, data = r.str(), r.str()
    (init,) = r.unpack("<B")
    return Latch(out, data, init)


def serialize(n) -> bytes:
    """Canonical GNLB image of a netlist (or of a variant's netlist)."""
    n = getattr(n, "netlist", n)
    buf = io.BytesIO()
    buf.write(GNLB_MAGIC)
    buf.write(struct.pack("<B", VERSION))
    _str(buf, n.name)
    for names in (n.inputs, n.outputs):
        buf.write(struct.pack("<H", len(names)))
        for s in names:
            _str(buf, s)
    buf.write(struct.pack("<I", len(n.gates)))
    for net in n.topo_order:
        _gate_record(buf, n.gates[net])
    buf.write(struct.pack("<I", len(n.latches)))
    for net in sorted(n.latches):
        _latch_record(buf, n.latches[net])
    return buf.getvalue()


def deserialize(data: bytes) -> Netlist:
    r = _Reader(data)
    if r.take(4) != GNLB_MAGIC:
        raise FormatError("not a GNLB image")
    (version,) = r.unpack("<B")
    if version != VERSION:
        raise FormatError(f"unsupported GNLB version {version}")
    name = r.str()
    ios = []
    for _ in range(2):
        (k,) = r.unpack("<H")
        ios.append(tuple(r.str() for _ in range(k)))
    (ng,) = r.unpack("<I")
    gates = [_read_gate(r) for _ in range(ng)]
    (nl,) = r.unpack("<I")
    latches = [_read_latch(r) for _ in range(nl)]
    r.done()
    return Netlist(name, ios[0], ios[1], {g.output: g for g in gates}, {l.output: l for l in latches})


# --- deltas ------------------------------------------------------------------


@dataclass(frozen=True)
class DeltaScript:
    base_id: int
    target_id: int
    target_name: str
    removed: Tuple[str, ...]                       # gate outputs dropped from the base
    added: Tuple[Gate, ...]                        # new or re-kinded gate records
    rewired: Tuple[Tuple[str, int, str], ...]      # (consumer, pin, new driver)
    removed_latches: Tuple[str, ...] = ()
    added_latches: Tuple[Latch, ...] = ()

    @property
    def empty(self) -> bool:
        return not (self.removed or self.added or self.rewired or self.removed_latches or self.added_latches)

    def encode(self) -> bytes:
        buf = io.BytesIO()
        buf.write(GNLD_MAGIC)
        buf.write(struct.pack("<BII", VERSION, self.base_id, self.target_id))
        _str(buf, self.target_name)
        buf.write(struct.pack("<I", len(self.removed)))
        for s in self.removed:
            _str(buf, s)
        buf.write(struct.pack("<I", len(self.added)))
        for g in self.added:
            _gate_record(buf, g)
        buf.write(struct.pack("<I", len(self.rewired)))
        for net, pin, src in self.rewired:
            _str(buf, net)
            buf.write(struct.pack("<B", pin))
            _str(buf, src)
        buf.write(struct.pack("<I", len(self.removed_latches)))
        for s in self.removed_latches:
            _str(buf, s)
        buf.write(struct.pack("<I", len(self.added_latches)))
        for lt in self.added_latches:
            _latch_record(buf, lt)
        return buf.getvalue()

    @property
    def size(self) -> int:
        return len(self.encode())

    @classmethod
    def decode(cls, data: bytes) -> "DeltaScript":
        r = _Reader(data)
        if r.take(4) != GNLD_MAGIC:
            raise FormatError("not a GNLD delta")
        version, base_id, target_id = r.unpack("<BII")
        if version != VERSION:
            raise FormatError(f"unsupported GNLD version {version}")
        name = r.str()
        (k,) = r.unpack("<I")
        removed = tuple(r.str() for _ in range(k))
        (k,) = r.unpack("<I")
        added = tuple(_read_gate(r) for _ in range(k))
        (k,) = r.unpack("<I")
        rewired = []
        for _ in range(k):
            net = r.str()
            (pin,) = r.unpack("<B")
            rewired.append((net, pin, r.str()))
        (k,) = r.unpack("<I")
        rl = tuple(r.str() for _ in range(k))
        (k,) = r.unpack("<I")
        al = tuple(_read_latch(r) for _ in range(k))
        r.done()
        return cls(base_id, target_id, name, removed, added, tuple(rewired), rl, al)


def _ids(base, target) -> Tuple[int, int]:
    return int(getattr(base, "id", 0)), int(getattr(target, "id", 0))


def diff(base, target, base_id: Optional[int] = None, target_id: Optional[int] = None) -> DeltaScript:
    """Edit script turning ``base`` into ``target`` (variants or netlists).

    Gates present in both with the same kind and arity are rewired pin by
    pin; anything else is a removal plus an addition.
    """
    bid, tid = _ids(base, target)
    bid = bid if base_id is None else base_id
    tid = tid if target_id is None else target_id
    a, b = getattr(base, "netlist", base), getattr(target, "netlist", target)
    if a.inputs != b.inputs or a.outputs != b.outputs:
        raise InterfaceMismatch("diff needs identical primary inputs and outputs")
    removed, added, rewired = [], [], []
    for net in sorted(a.gates):
        if net not in b.gates:
            removed.append(net)
    for net in b.topo_order:
        gb = b.gates[net]
        ga = a.gates.get(net)
        if ga is None:
            added.append(gb)
        elif ga.kind != gb.kind or len(ga.inputs) != len(gb.inputs):
            removed.append(net)
            added.append(gb)
        else:
            rewired.extend((net, i, s) for i, (r, s) in enumerate(zip(ga.inputs, gb.inputs)) if r != s)
    rl = [net for net in sorted(a.latches) if a.latches[net] != b.latches.get(net)]
    al = [b.latches[net] for net in sorted(b.latches) if b.latches[net] != a.latches.get(net)]
    return DeltaScript(bid, tid, b.name, tuple(sorted(removed)), tuple(added), tuple(rewired), tuple(rl), tuple(al))


def apply(base, script: DeltaScript) -> Netlist:
    n = getattr(base, "netlist", base)
    gates = dict(n.gates)
    for net in script.removed:
        if net not in gates:
            raise FormatError(f"delta removes unknown gate {net!r}")
        del gates[net]
    for g in script.added:
        gates[g.output] = g
    for net, pin, src in script.rewired:
        g = gates.get(net)
        if g is None or pin >= len(g.inputs):
            raise FormatError(f"delta rewires unknown pin {net!r}[{pin}]")
        ins = list(g.inputs)
        ins[pin] = src
        gates[net] = Gate(g.kind, tuple(ins), net)
    latches = dict(n.latches)
    for net in script.removed_latches:
        latches.pop(net, None)
    for lt in script.added_latches:
        latches[lt.output] = lt
    return Netlist(script.target_name, n.inputs, n.outputs, gates, latches)


@dataclass(frozen=True)
class StorageReport:
    full_total: int        # every variant stored as a full image
    delta_total: int       # per-PRR base image plus its cyclic delta chain
    base_total: int
    chain_total: int
    n_variants: int
    mean_full: float
    mean_delta: float

    @property
    def ratio(self) -> float:
        return self.delta_total / self.full_total if self.full_total else 1.0

    def to_json(self) -> dict:
        return {
            "full_total": self.full_total,
            "delta_total": self.delta_total,
            "base_total": self.base_total,
            "chain_total": self.chain_total,
            "n_variants": self.n_variants,
            "mean_full": self.mean_full,
            "mean_delta": self.mean_delta,
            "ratio": self.ratio,
        }


def chain_deltas(variants, plan) -> List[DeltaScript]:
    """Deltas along each PRR's cyclic variant order, wrap-around included."""
    by_id = {int(getattr(v, "id", i)): v for i, v in enumerate(variants)}
    out = []
    for cat in plan.categories:
        if len(cat) < 2:
            continue
        for j, vid in enumerate(cat):
            nxt = cat[(j + 1) % len(cat)]
            out.append(diff(by_id[vid], by_id[nxt], vid, nxt))
    return out


def load_sizes(variants, plan) -> Dict[int, int]:
    """Bytes sent to load each variant: its chain delta, or the full image if smaller."""
    by_id = {int(getattr(v, "id", i)): v for i, v in enumerate(variants)}
    return {d.target_id: min(d.size, len(serialize(by_id[d.target_id]))) for d in chain_deltas(variants, plan)}


def storage_report(variants, plan) -> StorageReport:
    """Full-image storage versus per-PRR base images plus cyclic delta chains.

    A chain entry is stored as a full image whenever that is smaller than
    the delta (a loader can always fall back to a full configuration).
    """
    by_id = {int(getattr(v, "id", i)): v for i, v in enumerate(variants)}
    sizes = {vid: len(serialize(v)) for vid, v in by_id.items()}
    full_total = sum(sizes.values())
    base = sum(sizes[cat[0]] for cat in plan.categories)
    deltas = [min(d.size, sizes[d.target_id]) for d in chain_deltas(variants, plan)]
    chain = sum(deltas)
    n = len(by_id)
    return StorageReport(
        full_total,
        base + chain,
        base,
        chain,
        n,
        full_total / n if n else 0.0,
        chain / len(deltas) if deltas else 0.0,
    )
