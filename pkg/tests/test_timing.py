import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netdiv.netlist import parse_netlist
from netdiv.timing import (
    DelayModel,
    TimingReport,
    analyze,
    brute_force_critical_delay,
    delay_distribution,
    rank_nets,
)

from conftest import random_netlist


def test_single_and():
    n = parse_netlist("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = AND(a, b)")
    r = analyze(n)
    assert r.critical_delay == pytest.approx(2.0)
    assert r.critical_path == ("a", "y")


def test_not_chain():
    n = parse_netlist("INPUT(a)\nOUTPUT(z)\nx = NOT(a)\ny = NOT(x)\nz = NOT(y)")
    assert analyze(n).critical_delay == pytest.approx(3.0)


def test_fanout_increment():
    # x drives y and z: one extra load costs 0.2
    n = parse_netlist("INPUT(a)\nOUTPUT(y)\nOUTPUT(z)\nx = NOT(a)\ny = BUF(x)\nz = BUF(x)")
    assert analyze(n).critical_delay == pytest.approx(1.2 + 1.0)


def test_constants_have_zero_delay():
    n = parse_netlist("INPUT(a)\nOUTPUT(y)\nc = CONST1()\ny = AND(a, c)")
    assert analyze(n).critical_delay == pytest.approx(2.0)


def test_latch_launch_uses_clk_to_q():
    n = parse_netlist("INPUT(a)\nOUTPUT(y)\ny = NOT(q)\nq = DFF(a)")
    assert analyze(n).critical_delay == pytest.approx(2.0)


def test_negative_delay_rejected():
    with pytest.raises(ValueError):
        DelayModel(fanout_increment=-1)


def test_sbox_matches_brute_force(sbox):
    assert analyze(sbox).critical_delay == pytest.approx(brute_force_critical_delay(sbox))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**9), st.integers(1, 20))
def test_analyze_matches_brute_force(seed, n_gates):
    n = random_netlist(seed, 4, n_gates, 3, seed % 2)
    r = analyze(n)
    assert r.critical_delay == pytest.approx(brute_force_critical_delay(n))
    assert min(r.slack.values()) == 0.0
    assert all(s >= 0 for s in r.slack.values())


def test_critical_path_zero_slack(sbox):
    r = analyze(sbox)
    assert all(r.slack[net] == 0.0 for net in r.critical_path)


def test_rank_zero_slack_first(sbox):
    r = analyze(sbox)
    nets = [n for n in sbox.topo_order if n not in sbox.outputs]
    ranked = rank_nets(r, nets)
    seen_positive = False
    for net in ranked:
        if r.slack[net] > 0:
            seen_positive = True
        else:
            assert not seen_positive
    assert ranked == rank_nets(r, list(reversed(nets)))


def test_rank_ties_lexicographic():
    r = TimingReport({"b": 0, "a": 0, "c": 0}, {"b": 0.0, "a": 0.0, "c": 1.0}, (), 0.0)
    assert rank_nets(r, ["c", "b", "a"]) == ["a", "b", "c"]


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**9), st.floats(0.0, 5.0))
def test_rank_monotone_in_slack(seed, bump):
    rng = random.Random(seed)
    nets = [f"n{i}" for i in range(12)]
    slack = {n: float(rng.randint(0, 4)) for n in nets}
    target = rng.choice(nets)
    before = rank_nets(TimingReport({}, slack, (), 0.0), nets).index(target)
    slack[target] += bump
    after = rank_nets(TimingReport({}, slack, (), 0.0), nets).index(target)
    assert after >= before


def test_distribution_identical(sbox):
    stats = delay_distribution([sbox] * 128)
    assert stats.std == 0.0
    assert sum(stats.counts) == 128


def test_distribution_counts(variants):
    stats = delay_distribution([v.netlist for v in variants], bins=5)
    assert sum(stats.counts) == len(variants)
