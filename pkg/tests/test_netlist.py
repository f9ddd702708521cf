import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netdiv.errors import (
    ArityMismatch,
    CombinationalCycle,
    DimensionMismatch,
    GnlSyntaxError,
    MultipleDriver,
    UndrivenNet,
)
from netdiv.netlist import (
    Gate,
    Latch,
    Netlist,
    all_input_vectors,
    bits_of,
    evaluate,
    evaluate_naive,
    initial_state,
    net_census,
    output_table,
    parse_netlist,
    simulate_batch,
    value_of,
    write_netlist,
)

from conftest import random_netlist

AND_TEXT = "INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = AND(a, b)"

# Frozen from the deterministic generator: 202 nets, 194 gates, 186 faultable.
SBOX_CENSUS = (202, 194, 186)


def test_parse_minimal():
    n = parse_netlist(AND_TEXT)
    assert n.inputs == ("a", "b")
    assert n.outputs == ("y",)
    assert len(n.gates) == 1
    assert n.gates["y"] == Gate("AND", ("a", "b"), "y")


def test_parse_comments_and_name():
    n = parse_netlist("# netlist: foo\n# a comment\n\n" + AND_TEXT)
    assert n.name == "foo"


def test_multiple_driver():
    with pytest.raises(MultipleDriver):
        parse_netlist(AND_TEXT + "\ny = OR(a, b)")
    with pytest.raises(MultipleDriver):
        parse_netlist("INPUT(a)\nINPUT(a)\nOUTPUT(a)")


def test_self_loop_is_cycle():
    with pytest.raises(CombinationalCycle) as exc:
        parse_netlist("INPUT(a)\nOUTPUT(y)\ny = AND(y, a)")
    assert exc.value.nets == ["y"]


def test_longer_cycle_reported():
    text = "INPUT(a)\nOUTPUT(z)\nx = AND(a, z)\nz = NOT(x)"
    with pytest.raises(CombinationalCycle) as exc:
        parse_netlist(text)
    assert sorted(exc.value.nets) == ["x", "z"]


def test_cycle_through_latch_is_fine():
    n = parse_netlist("INPUT(a)\nOUTPUT(y)\ny = XOR(a, q)\nq = DFF(y)")
    assert not n.is_combinational()


def test_undriven_and_arity():
    with pytest.raises(UndrivenNet):
        parse_netlist("INPUT(a)\nOUTPUT(y)\ny = AND(a, b)")
    with pytest.raises(UndrivenNet):
        parse_netlist("INPUT(a)\nOUTPUT(y)")
    with pytest.raises(ArityMismatch):
        parse_netlist("INPUT(a)\nOUTPUT(y)\ny = NOT(a, a)")
    with pytest.raises(ArityMismatch):
        parse_netlist("INPUT(a)\nOUTPUT(y)\ny = DFF(a, a)")


def test_syntax_error_position():
    with pytest.raises(GnlSyntaxError) as exc:
        parse_netlist("INPUT(a)\n  y = FROB(a)")
    assert exc.value.line == 2
    with pytest.raises(GnlSyntaxError) as exc:
        parse_netlist("INPUT(a)\nOUTPUT(y)\ny == AND(a)")
    assert exc.value.line == 3
    with pytest.raises(GnlSyntaxError):
        parse_netlist("INPUT(a)\ny = AND(a, 1b)")


def test_write_topological_order():
    text = "INPUT(a)\nOUTPUT(z)\nz = NOT(m)\nm = BUF(a)"
    out = write_netlist(parse_netlist(text))
    assert out.index("m = BUF(a)") < out.index("z = NOT(m)")


def test_write_fixpoint():
    t = write_netlist(parse_netlist(AND_TEXT))
    assert write_netlist(parse_netlist(t)) == t


def test_write_rejects_nonzero_init():
    n = parse_netlist("INPUT(a)\nOUTPUT(q)\nq = DFF(a)")
    with pytest.raises(ValueError):
        write_netlist(n.replace(latches={"q": Latch("q", "a", 1)}))


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 10**9), st.integers(1, 6), st.integers(1, 20), st.integers(0, 2))
def test_roundtrip_random(seed, n_in, n_gates, n_latch):
    n = random_netlist(seed, n_in, n_gates, 3, n_latch)
    text = write_netlist(n)
    back = parse_netlist(text)
    assert back == n
    assert write_netlist(back) == text


def test_evaluate_and():
    n = parse_netlist(AND_TEXT)
    for a in (0, 1):
        for b in (0, 1):
            out, _, _ = evaluate(n, [a, b])
            assert out == [a & b]


def test_dff_semantics():
    n = parse_netlist("INPUT(d)\nOUTPUT(q)\nq = DFF(d)")
    out, nxt, _ = evaluate(n, [1], initial_state(n))
    assert out == [0]
    assert nxt.latches["q"] == 1
    out, _, _ = evaluate(n, [0], nxt)
    assert out == [1]


def test_evaluate_pure(sbox):
    s = initial_state(sbox)
    first = evaluate(sbox, bits_of(0x5A, 8), s)
    second = evaluate(sbox, bits_of(0x5A, 8), s)
    assert first[0] == second[0] and first[2] == second[2]


def test_evaluate_dimension():
    n = parse_netlist(AND_TEXT)
    with pytest.raises(DimensionMismatch):
        evaluate(n, [1])
    with pytest.raises(DimensionMismatch):
        simulate_batch(n, np.zeros((4, 3), dtype=bool))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**9))
def test_evaluate_matches_naive_and_batch(seed):
    n = random_netlist(seed, 4, 15, 3, 1)
    vecs = all_input_vectors(4)
    batch = simulate_batch(n, vecs)
    for row in range(16):
        bits = [int(b) for b in vecs[row]]
        out, _, val = evaluate(n, bits)
        ref, ref_val = evaluate_naive(n, bits)
        assert out == ref
        assert all(val[k] == ref_val[k] for k in ref_val)
        assert out == [int(batch[o][row]) for o in n.outputs]


def test_sbox_zero(sbox):
    out, _, _ = evaluate(sbox, bits_of(0, 8))
    assert value_of(out) == 0x63


def test_census_and():
    total, gates, faultable = net_census(parse_netlist(AND_TEXT))
    assert (total, gates, faultable) == (3, 1, [])


def test_census_constants_only():
    n = Netlist("c", (), ("y", "z"), {"y": Gate("CONST0", (), "y"), "z": Gate("CONST1", (), "z"),
                                      "w": Gate("CONST1", (), "w")}, {})
    assert net_census(n)[2] == []


def test_census_sbox_frozen(sbox):
    total, gates, faultable = net_census(sbox)
    assert (total, gates, len(faultable)) == SBOX_CENSUS


def test_output_table_shape(sbox):
    t = output_table(sbox)
    assert t.shape == (256, 8)


def test_bits_roundtrip():
    for v in (0, 1, 0x80, 0xB9, 0xFF):
        assert value_of(bits_of(v, 8)) == v
