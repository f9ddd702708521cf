import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netdiv.diffstore import (
    DeltaScript,
    FormatError,
    apply,
    chain_deltas,
    deserialize,
    diff,
    serialize,
    storage_report,
)
from netdiv.errors import InterfaceMismatch
from netdiv.netlist import Gate, Latch, parse_netlist
from netdiv.rotate import make_plan

from conftest import random_netlist


def shaped(seed, n_gates):
    """Random netlist with a fixed 4-in / 3-out interface, so any two can be diffed.

    Latches start at 0, the only initial state GNL text can carry.
    """
    rng = random.Random(seed)
    n = random_netlist(seed, 4, n_gates, 1, rng.randint(0, 2))
    gates = dict(n.gates)
    pool = list(gates)
    for k in range(3):
        gates[f"o{k}"] = Gate(rng.choice(("BUF", "NOT")), (rng.choice(pool),), f"o{k}")
    latches = {q: Latch(q, rng.choice(pool), 0) for q in n.latches}
    return n.replace(outputs=("o0", "o1", "o2"), gates=gates, latches=latches)


def test_serialize_deterministic(sbox):
    assert serialize(sbox) == serialize(sbox)
    assert serialize(sbox)[:4] == b"GNLB"


def test_serialize_roundtrip(sbox, variants):
    assert deserialize(serialize(sbox)) == sbox
    for v in variants:
        assert deserialize(serialize(v)) == v.netlist


def test_distinct_variants_distinct_bytes(variants):
    images = {}
    for v in variants:
        images.setdefault(serialize(v), []).append(v.netlist.structure())
    for structs in images.values():
        assert len(set(structs)) == 1
    assert len(images) == len({v.netlist.structure() for v in variants})


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 10**9), st.integers(1, 25), st.integers(0, 10**9), st.integers(1, 25))
def test_random_roundtrips(s1, n1, s2, n2):
    a, b = shaped(s1, n1), shaped(s2, n2)
    assert deserialize(serialize(a)) == a
    d = diff(a, b, 1, 2)
    assert DeltaScript.decode(d.encode()) == d
    assert apply(a, d) == b
    assert diff(a, a).empty


def test_binary_keeps_latch_init():
    zero = parse_netlist("INPUT(a)\nOUTPUT(y)\ny = XOR(a, q)\nq = DFF(y)")
    one = zero.replace(latches={"q": Latch("q", "y", 1)})
    assert deserialize(serialize(one)) == one
    assert not diff(zero, one).empty
    assert apply(zero, diff(zero, one)) == one


def test_self_diff_header_only(sbox):
    d = diff(sbox, sbox)
    assert d.empty
    assert d.size == len(DeltaScript(0, 0, sbox.name, (), (), ()).encode())


def test_chain_apply(variants):
    plan = make_plan([v.id for v in variants], 2, seed=0)
    by_id = {v.id: v.netlist for v in variants}
    for d in chain_deltas(variants, plan):
        assert apply(by_id[d.base_id], d) == by_id[d.target_id]


def test_diff_interface_mismatch(sbox):
    other = parse_netlist("INPUT(a)\nOUTPUT(y)\ny = NOT(a)")
    with pytest.raises(InterfaceMismatch):
        diff(sbox, other)


def test_format_errors(sbox):
    data = serialize(sbox)
    with pytest.raises(FormatError):
        deserialize(b"XXXX" + data[4:])
    with pytest.raises(FormatError):
        deserialize(data[:-3])
    with pytest.raises(FormatError):
        deserialize(data + b"\0")
    with pytest.raises(FormatError):
        DeltaScript.decode(b"GNLB")
    bad = DeltaScript(0, 1, "x", ("nope",), (), ())
    with pytest.raises(FormatError):
        apply(sbox, bad)


def test_small_edit_small_delta(sbox):
    net = sbox.topo_order[40]
    g = sbox.gates[net]
    kind = "XNOR" if g.kind == "XOR" else "XOR"
    edited = sbox.replace(gates={**sbox.gates, net: Gate(kind, g.inputs[:2], net)})
    d = diff(sbox, edited)
    assert len(d.added) == 1 and d.removed == (net,)
    assert d.size < 0.02 * len(serialize(edited))
    assert apply(sbox, d) == edited


def test_capped_entries(variants):
    # a chain entry never costs more than the full image it replaces
    plan = make_plan([v.id for v in variants], 1, seed=0)
    rep = storage_report(variants, plan)
    assert rep.chain_total <= rep.full_total


def test_single_variant_ratio_one(variants):
    plan = make_plan([variants[0].id], 1)
    rep = storage_report(variants[:1], plan)
    assert rep.ratio == 1.0
    assert rep.chain_total == 0


def test_identical_variants(sbox):
    plan = make_plan(list(range(128)), 1, seed=0)
    rep = storage_report([sbox] * 128, plan)
    empty = DeltaScript(0, 0, sbox.name, (), (), ()).size
    assert rep.base_total == len(serialize(sbox))
    # ids are single digits to three digits but the header width is fixed
    assert rep.chain_total == 128 * empty
    assert rep.ratio < 0.05


def test_report_json(variants):
    rep = storage_report(variants, make_plan([v.id for v in variants], 4))
    j = rep.to_json()
    assert j["ratio"] == pytest.approx(rep.delta_total / rep.full_total)
    assert rep.delta_total == rep.base_total + rep.chain_total
