import pytest

from netdiv.aes import (
    AesKey,
    SerialSubBytesDevice,
    first_round_operands,
    gen_sbox_netlist,
    gf256_mul,
    inv_sbox,
    sbox_ref,
    sbox_table,
)
from netdiv.campaign import DEFAULT_KEY
from netdiv.netlist import output_table, value_of
from netdiv.timing import analyze

# A few rows of the FIPS-197 S-box, typed in independently of the generator.
FIPS_ROW0 = [0x63, 0x7C, 0x77, 0x7B, 0xF2, 0x6B, 0x6F, 0xC5, 0x30, 0x01, 0x67, 0x2B, 0xFE, 0xD7, 0xAB, 0x76]
FIPS_SPOT = {0x53: 0xED, 0x10: 0xCA, 0xFF: 0x16, 0xB9: 0x56, 0x9A: 0xB8, 0xC9: 0xDD}


def test_reference_values():
    assert sbox_ref(0x00) == 0x63
    assert sbox_ref(0x53) == 0xED
    assert [sbox_ref(b) for b in range(16)] == FIPS_ROW0
    for x, y in FIPS_SPOT.items():
        assert sbox_ref(x) == y


def test_inverse():
    assert sorted(sbox_table()) == list(range(256))
    for b in range(256):
        assert inv_sbox(sbox_ref(b)) == b


def test_gf_mul():
    # worked example from FIPS-197: {57} * {83} = {c1}
    assert gf256_mul(0x57, 0x83) == 0xC1
    assert gf256_mul(0x57, 0x13) == 0xFE


def test_netlist_matches_reference(sbox):
    table = output_table(sbox)
    got = [value_of(int(b) for b in row) for row in table]
    assert got == list(sbox_table())


def test_netlist_deterministic(sbox):
    assert gen_sbox_netlist().same_structure(sbox)


def test_netlist_shape(sbox):
    assert len(sbox.inputs) == 8 and len(sbox.outputs) == 8
    assert sbox.is_combinational()
    assert len(sbox.gates) == 194
    assert analyze(sbox).critical_delay == pytest.approx(64.0)


def test_first_round_operands():
    ops = first_round_operands([0] * 16, bytes(16))
    assert ops == [(0x00, 0x63)] * 16
    key = bytes(range(16))
    assert all(x == 0 for x, _ in first_round_operands(list(key), key))


def test_default_key_byte0():
    key = bytes.fromhex(DEFAULT_KEY)
    assert key[0] == 0xB9 == 185


def test_aes_key_length():
    with pytest.raises(ValueError):
        AesKey(bytes(15))
    assert AesKey(bytes(16))[3] == 0


def test_device_register_contents(sbox):
    dev = SerialSubBytesDevice.wrap(sbox)
    xs = list(range(0, 160, 10))
    cycles, regs = dev.run(xs)
    assert len(cycles) == 17
    assert regs == [sbox_ref(x) for x in xs]


def test_device_prev_input(sbox):
    dev = SerialSubBytesDevice.wrap(sbox)
    cycles, _ = dev.run([1] * 16, prev_input=0xA5)
    before = cycles[0][0]
    assert value_of(before.latches[f"ireg{i}"] for i in range(8)) == 0xA5
    assert value_of(before.latches[f"oreg{i}"] for i in range(8)) == 0
