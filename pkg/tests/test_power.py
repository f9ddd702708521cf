import numpy as np
import pytest

from netdiv.aes import SerialSubBytesDevice, sbox_table
from netdiv.cpa import mtd_byte, pearson_two_pass
from netdiv.errors import CalibrationFailed, PlanInvalid, TraceFormatError
from netdiv.netlist import Gate, Netlist
from netdiv.power import (
    DEFAULT_WEIGHTS,
    PowerModel,
    TraceSet,
    calibrate_sigma,
    default_model,
    gen_campaign,
    hamming_weight,
    read_traces,
    simulate_trace,
    tdc_quantize,
    write_traces,
)
from netdiv.rotate import make_plan, next_active, usage_counts

KEY = bytes.fromhex("b97e151628aed2a6abf7158809cf4f3c")
SBOX = np.array(sbox_table())


def only(**w):
    weights = {k: 0.0 for k in DEFAULT_WEIGHTS}
    weights.update(w)
    return weights


def test_quantizer():
    m = PowerModel(lsb=1.0, taps=128)
    assert tdc_quantize(0, m) == 0
    assert tdc_quantize(2.4, m) == 2
    assert tdc_quantize(2.5, m) == 3
    assert tdc_quantize(-3.0, m) == 0
    assert tdc_quantize(129.0 * m.lsb + 1, m) == 128
    assert list(tdc_quantize(np.array([0.49, 7.5, 1e9]), m)) == [0, 8, 128]
    assert tdc_quantize(10.0, PowerModel(lsb=4.0)) == 3


def test_model_validation():
    with pytest.raises(ValueError):
        PowerModel(lsb=0)
    with pytest.raises(ValueError):
        PowerModel(sigma=-1)
    with pytest.raises(ValueError):
        PowerModel(weights=only(AND=-1.0))
    m = PowerModel(sigma=2.0, lsb=3.0)
    assert PowerModel.from_json(m.to_json()) == m


def test_single_and_toggle():
    # x0 & x1 feeds output bit 0; the other output bits are plain buffers
    ins = tuple(f"x{i}" for i in range(8))
    gates = {"y0": Gate("AND", ("x0", "x1"), "y0")}
    for i in range(1, 8):
        gates[f"y{i}"] = Gate("BUF", (f"x{i}",), f"y{i}")
    n = Netlist("one", ins, tuple(f"y{i}" for i in range(8)), gates, {})
    m = PowerModel(weights=only(AND=1.0), offset=0.0, lsb=1.0)
    trace = simulate_trace(n, [0x03] + [0x03] * 15, bytes(16), m)
    assert trace[0] == 1
    assert list(trace[1:]) == [0] * 15


def test_trace_deterministic(sbox):
    m = default_model(sbox)
    p = list(range(16))
    assert (simulate_trace(sbox, p, KEY, m) == simulate_trace(sbox, p, KEY, m)).all()
    noisy = m.with_sigma(5.0)
    a = simulate_trace(sbox, p, KEY, noisy, noise_seed=3)
    assert (a == simulate_trace(sbox, p, KEY, noisy, noise_seed=3)).all()
    assert ((0 <= a) & (a <= m.taps)).all()


def test_fast_path_matches_cycle_accurate(sbox, variants):
    nets = [sbox] + [v.netlist for v in variants[:3]]
    m = default_model(*nets)
    ids = list(range(len(nets)))
    plan = make_plan(ids, 2, seed=1)
    ts = gen_campaign(nets, plan, 12, m, 9, KEY)
    xs = ts.plaintexts.astype(int) ^ np.frombuffer(KEY, dtype=np.uint8)
    for i in range(12):
        dev = SerialSubBytesDevice.wrap(nets[ts.schedule[i]])
        prev = 0 if i == 0 else int(xs[i - 1, 15])
        ref = simulate_trace(dev, list(ts.plaintexts[i]), KEY, m, prev_input=prev)
        assert (ts.traces[i] == ref).all()


def test_register_only_leakage_tracks_hd(sbox):
    # with only the output-register mux path weighted, samples are HD exactly
    m = PowerModel(weights=only(MUX=1.0), offset=0.0, lsb=1.0)
    ts = gen_campaign([sbox], make_plan([0], 1), 1000, m, 0, bytes(16))
    y = SBOX[ts.plaintexts.astype(int)]
    prev = np.concatenate([np.zeros((1000, 1), dtype=int), y[:, :-1]], axis=1)
    hd = hamming_weight(prev ^ y)
    assert (ts.traces == hd).all()
    assert pearson_two_pass(ts.traces[:, 3], hd[:, 3]) > 0.9


def test_default_weights_correlate_with_hd(sbox):
    m = default_model(sbox)
    ts = gen_campaign([sbox], make_plan([0], 1), 1000, m, 0, bytes(16))
    y = SBOX[ts.plaintexts.astype(int)]
    prev = np.concatenate([np.zeros((1000, 1), dtype=int), y[:, :-1]], axis=1)
    hd = hamming_weight(prev ^ y)
    rhos = [pearson_two_pass(ts.traces[:, i], hd[:, i]) for i in range(16)]
    # the S-box's own switching dominates; see the decisions ledger
    assert min(rhos) > 0.2


def test_default_model_does_not_saturate(sbox, variants):
    nets = [sbox] + [v.netlist for v in variants]
    m = default_model(*nets)
    ts = gen_campaign(nets, make_plan(list(range(len(nets))), 1), 2000, m, 1, KEY)
    assert ts.traces.max() < m.taps
    assert ts.traces.min() > 0


def test_campaign_schedule(sbox, variants):
    plan = make_plan([v.id for v in variants], 8, seed=0)
    ts = gen_campaign(variants, plan, 64, default_model(sbox), 0, KEY)
    assert list(ts.schedule) == [next_active(plan, i)[1] for i in range(64)]


def test_one_variant_equals_unprotected(sbox):
    m = default_model(sbox, sigma=3.0)
    a = gen_campaign([sbox], make_plan([0], 1), 100, m, 5, KEY)
    b = gen_campaign([sbox], make_plan([0], 1, seed=9), 100, m, 5, KEY)
    assert (a.traces == b.traces).all()


def test_campaign_start_offset(sbox, variants):
    plan = make_plan([v.id for v in variants], 4, seed=2)
    m = default_model(sbox, sigma=2.0)
    whole = gen_campaign(variants, plan, 50, m, 3, KEY)
    tail = gen_campaign(variants, plan, 20, m, 3, KEY, start=30)
    assert (whole.traces[30:] == tail.traces).all()
    assert (whole.plaintexts[30:] == tail.plaintexts).all()


def test_unknown_variant_in_plan(sbox):
    with pytest.raises(PlanInvalid):
        gen_campaign([sbox], make_plan([0, 1], 2), 10, default_model(sbox), 0, KEY)


def test_shuffle_keeps_usage(sbox, variants):
    plan = make_plan([v.id for v in variants], 8, seed=0)
    ts = gen_campaign(variants, plan, 160, default_model(sbox), 0, KEY)
    perm = np.random.default_rng(0).permutation(160)
    shuffled = ts.permuted(perm)
    count = lambda t: np.bincount(t.schedule, minlength=16)  # noqa: E731
    assert (count(ts) == count(shuffled)).all()
    assert dict(enumerate(count(ts))) == usage_counts(plan, 160)


def test_trcb_roundtrip(tmp_path, sbox):
    ts = gen_campaign([sbox], make_plan([0], 1), 37, default_model(sbox, sigma=4.0), 2, KEY)
    path = tmp_path / "t.trcb"
    write_traces(ts, path)
    back = read_traces(path)
    assert (back.traces == ts.traces).all()
    assert (back.plaintexts == ts.plaintexts).all()
    assert (back.schedule == ts.schedule).all()
    assert back.key == KEY and back.model == ts.model
    write_traces(ts, path, redact_key=True)
    assert read_traces(path).key is None


def test_trcb_errors(tmp_path):
    bad = tmp_path / "bad.trcb"
    bad.write_bytes(b"NOPE")
    with pytest.raises(TraceFormatError):
        read_traces(bad)
    ts = TraceSet(np.full((1, 16), 70000), np.zeros((1, 16), dtype=np.uint8), None, np.zeros(1, dtype=int))
    with pytest.raises(TraceFormatError):
        write_traces(ts, tmp_path / "big.trcb")


def test_traceset_alignment():
    with pytest.raises(ValueError):
        TraceSet(np.zeros((2, 16)), np.zeros((3, 16)), None, np.zeros(2))


def test_sigma_zero_mtd_below_range(sbox):
    m = default_model(sbox)
    ts = gen_campaign([sbox], make_plan([0], 1), 2000, m, 0, KEY)
    assert mtd_byte(ts, 0, KEY, 100) < 500


def test_large_sigma_not_detected(sbox):
    m = default_model(sbox, sigma=500.0)
    ts = gen_campaign([sbox], make_plan([0], 1), 3000, m, 0, KEY)
    assert mtd_byte(ts, 0, KEY, 100) is None


def test_calibration_impossible_target(sbox):
    m = default_model(sbox)
    with pytest.raises(CalibrationFailed):
        calibrate_sigma(sbox, KEY, m, target=(1, 2), budget=300, sigma_bounds=(200.0, 400.0))
