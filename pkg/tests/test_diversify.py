import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netdiv.diversify import (
    FaultPlan,
    fault_count,
    inject,
    optimize,
    round_half_up,
    select_nets,
)
from netdiv.errors import NotEnoughFaultableNets, RateExceedsCap, UnknownNet
from netdiv.netlist import Gate, Netlist, net_census, output_table, parse_netlist
from netdiv.timing import analyze, rank_nets

from conftest import random_netlist


def chain_module(total):
    """4 inputs feeding a chain of total - 4 gates; the last drives the only output."""
    gates = {}
    prev = "i0"
    for k in range(total - 4):
        name = f"g{k}"
        gates[name] = Gate("XOR", (prev, f"i{1 + k % 3}"), name)
        prev = name
    return Netlist("chain", ("i0", "i1", "i2", "i3"), (prev,), gates, {})


def test_round_half_up():
    assert round_half_up(2.5) == 3
    assert round_half_up(0.5) == 1
    assert round_half_up(2.4999) == 2
    assert fault_count(0.10, 202) == 20
    assert fault_count(0.05, 10) == 1


def test_rate_zero_empty(sbox):
    plan = select_nets(sbox, "random", 0.0, seed=3)
    assert plan.entries == ()
    assert inject(sbox, plan).same_structure(sbox)


def test_rate_ten_percent_of_120():
    n = chain_module(120)
    assert net_census(n)[0] == 120
    for policy in ("random", "critical"):
        assert len(select_nets(n, policy, 0.10, seed=1).entries) == 12


def test_plan_invariants(sbox):
    _, _, faultable = net_census(sbox)
    for policy in ("random", "critical"):
        plan = select_nets(sbox, policy, 0.10, seed=7)
        nets = [n for n, _ in plan.entries]
        assert len(set(nets)) == len(nets) == fault_count(0.10, net_census(sbox)[0])
        assert set(nets) <= set(faultable)
        assert plan == select_nets(sbox, policy, 0.10, seed=7)


def test_critical_takes_rank_prefix(sbox):
    plan = select_nets(sbox, "critical", 0.10, seed=0)
    ranked = rank_nets(analyze(sbox), net_census(sbox)[2])
    assert [n for n, _ in plan.entries] == ranked[: len(plan.entries)]


def test_fault_mixes(sbox):
    assert {k for _, k in select_nets(sbox, "random", 0.2, 1, "sa0").entries} == {"SA0"}
    assert {k for _, k in select_nets(sbox, "random", 0.2, 1, "sa1").entries} == {"SA1"}
    assert {k for _, k in select_nets(sbox, "random", 0.2, 1, "mixed").entries} == {"SA0", "SA1"}


def test_rate_cap(sbox):
    with pytest.raises(RateExceedsCap):
        select_nets(sbox, "random", 0.30)
    select_nets(sbox, "random", 0.30, cap=0.5)


def test_not_enough_faultable():
    n = parse_netlist("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = AND(a, b)")
    with pytest.raises(NotEnoughFaultableNets):
        select_nets(n, "random", 0.25)


def test_plan_json_roundtrip(sbox):
    plan = select_nets(sbox, "random", 0.1, seed=5)
    assert FaultPlan.from_json(plan.to_json()) == plan


def test_inject_rewires_consumers():
    n = parse_netlist("INPUT(a)\nINPUT(b)\nINPUT(c)\nOUTPUT(y)\nx = AND(a, b)\ny = XOR(x, c)")
    f = inject(n, FaultPlan((("x", "SA0"),), "random", 0.1, 0))
    assert f.gates["y"] == Gate("XOR", ("sa0_tie", "c"), "y")
    assert f.gates["sa0_tie"].kind == "CONST0"
    assert "x" in f.gates  # driver stays until optimize
    o = optimize(f)
    assert o.gates["y"] == Gate("BUF", ("c",), "y")


def test_inject_unknown_net(sbox):
    with pytest.raises(UnknownNet):
        inject(sbox, FaultPlan((("nope", "SA0"),), "random", 0.1, 0))


def test_single_fault_observable_or_harmless(sbox):
    ref = output_table(sbox)
    for net in net_census(sbox)[2][::9]:
        f = optimize(inject(sbox, FaultPlan(((net, "SA0"),), "random", 0.0, 0)))
        from netdiv.repair import check_equivalence, repair

        if (output_table(f) != ref).any():
            assert not check_equivalence(sbox, f).equivalent
        else:
            assert repair(sbox, f).patch_gate_count == 0


def test_optimize_rules():
    n = parse_netlist("INPUT(a)\nOUTPUT(y)\nc = CONST0()\ny = AND(a, c)")
    assert optimize(n).gates == {"y": Gate("CONST0", (), "y")}
    n = parse_netlist("INPUT(a)\nOUTPUT(y)\nc = CONST0()\ny = XOR(a, c)")
    assert optimize(n).gates == {"y": Gate("BUF", ("a",), "y")}
    n = parse_netlist("INPUT(a)\nINPUT(s)\nOUTPUT(y)\nc = CONST1()\ny = MUX(c, a, s)")
    assert optimize(n).gates == {"y": Gate("BUF", ("s",), "y")}


def test_optimize_keeps_interface(sbox):
    f = optimize(inject(sbox, select_nets(sbox, "critical", 0.2, 0)))
    assert f.inputs == sbox.inputs and f.outputs == sbox.outputs


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**9))
def test_optimize_preserves_behaviour_and_is_fixpoint(seed):
    n = random_netlist(seed, 5, 18, 3)
    o = optimize(n)
    assert (output_table(o) == output_table(n)).all()
    assert optimize(o).same_structure(o)


def test_optimize_sbox_idempotent(sbox):
    f = optimize(inject(sbox, select_nets(sbox, "random", 0.1, 2)))
    assert optimize(f).same_structure(f)
