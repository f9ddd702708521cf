import random

import pytest

from netdiv.aes import gen_sbox_netlist
from netdiv.netlist import Gate, Latch, Netlist

KINDS = ("BUF", "NOT", "AND", "OR", "NAND", "NOR", "XOR", "XNOR", "MUX")


def random_netlist(seed, n_inputs=4, n_gates=12, n_outputs=3, n_latches=0, consts=True):
    """Random well-formed netlist; gates only read nets declared before them."""
    rng = random.Random(seed)
    inputs = [f"i{k}" for k in range(n_inputs)]
    latch_nets = [f"q{k}" for k in range(n_latches)]
    pool = inputs + latch_nets
    gates = {}
    for k in range(n_gates):
        name = f"g{k}"
        if consts and rng.random() < 0.05:
            kind = rng.choice(("CONST0", "CONST1"))
            ins = ()
        else:
            kind = rng.choice(KINDS)
            arity = {"BUF": 1, "NOT": 1, "MUX": 3}.get(kind, rng.randint(2, 3))
            ins = tuple(rng.choice(pool) for _ in range(arity))
        gates[name] = Gate(kind, ins, name)
        pool.append(name)
    gate_nets = list(gates)
    outputs = rng.sample(gate_nets, min(n_outputs, len(gate_nets)))
    latches = {q: Latch(q, rng.choice(gate_nets), 0) for q in latch_nets}
    return Netlist(f"rnd{seed}", tuple(inputs), tuple(outputs), gates, latches)


@pytest.fixture(scope="session")
def sbox():
    return gen_sbox_netlist()


@pytest.fixture(scope="session")
def variants(sbox):
    """A small deterministic batch of rate-0.10 PostOpt variants."""
    from netdiv.repair import generate_variants

    vs, failures = generate_variants(sbox, range(16))
    assert not failures
    return vs


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
