import numpy as np
import pytest
from hypothesis import given, strategies as st

from nesta import engine, ppgen
from nesta.engine import EngineConfig, consume_batch, finalize, partial_value, reset


def test_config_accumulator_widths():
    assert EngineConfig(8).accumulator_width == 20
    assert EngineConfig(16).accumulator_width == 36
    with pytest.raises(ValueError):
        EngineConfig(8, accumulator_width=36)
    with pytest.raises(ValueError):
        EngineConfig(12)
    with pytest.raises(ValueError):
        EngineConfig(8, cel_variant="wallace")


def test_reset_examples():
    cfg = EngineConfig(8)
    assert reset(cfg, 0).s_bits == 0
    assert reset(cfg, 5).s_bits == 0b101
    assert reset(cfg, -1).s_bits == (1 << 20) - 1
    assert reset(cfg, -1).cb_bits == 0
    with pytest.raises(engine.EngineOverflowError):
        reset(cfg, 1 << 19)


def test_consume_examples():
    cfg = EngineConfig(8)
    st0 = reset(cfg)
    st1 = consume_batch(st0, [(1, 1)] * 9)
    assert partial_value(st1) == 9 and st1.cycle == 1
    assert partial_value(consume_batch(st0, [(0, 0)] * 9)) == 0
    assert partial_value(consume_batch(st1, [(1, 1)] * 9)) == 18
    assert partial_value(reset(cfg, 7)) == 7


def test_finalize_examples():
    cfg = EngineConfig(8)
    res = finalize(reset(cfg))
    assert res.sum == 0 and res.extra_cycles == 1 and res.state.finalized
    with pytest.raises(engine.EngineStateError):
        finalize(res.state)
    with pytest.raises(engine.EngineStateError):
        consume_batch(res.state, [(0, 0)] * 9)


def test_eleven_by_eleven_by_ten_all_ones():
    cfg = EngineConfig(8)
    sched = engine.batch_schedule(11, 10, [(1, 1)] * 1210)
    assert len(sched) == 135
    st_ = reset(cfg)
    for b in sched.batches:
        st_ = consume_batch(st_, b)
    res = finalize(st_)
    assert res.sum == 1210
    assert st_.cycle + res.extra_cycles == 136
    assert res.state.cb_bits == 0


def test_batch_schedule():
    assert len(engine.batch_schedule(3, 1, [(1, 1)] * 9)) == 1
    assert engine.batch_schedule(3, 1, [(1, 1)] * 9).pad_count == 0
    s = engine.batch_schedule(5, 1, [(2, 3)] * 25)
    assert len(s) == 3 and s.pad_count == 2
    flat = [p for b in s.batches for p in b]
    assert flat[:25] == [ppgen.OperandPair(2, 3)] * 25
    assert engine.batch_count(11, 10) == 135
    with pytest.raises(ValueError):
        engine.batch_schedule(3, 2, [(1, 1)] * 9)
    # FC layers: 1x1 across channels, 9 channels per batch
    assert len(engine.batch_schedule(1, 9, [(1, 1)] * 9)) == 1


def test_overflow_guard():
    cfg = EngineConfig(8)
    st_ = reset(cfg)
    with pytest.raises(engine.EngineOverflowError):
        for _ in range(40):
            st_ = consume_batch(st_, [(-128, -128)] * 9)


def test_operand_range_checked():
    with pytest.raises(ValueError):
        consume_batch(reset(EngineConfig(8)), [(200, 1)] + [(0, 0)] * 8)
    with pytest.raises(ValueError):
        consume_batch(reset(EngineConfig(8, signed_mode=False)), [(-1, 1)] + [(0, 0)] * 8)


@pytest.mark.parametrize("width", [8, 16])
@pytest.mark.parametrize("signed", [True, False])
@pytest.mark.parametrize("variant", ["standard", "star"])
def test_bank_per_cycle_invariant(width, signed, variant):
    rng = np.random.default_rng(width + signed)
    cfg = EngineConfig(width, cel_variant=variant, signed_mode=signed)
    lo, hi = ppgen.operand_range(width, signed)
    T, B = 64, 12
    # shrink magnitudes so twelve batches stay inside the accumulator
    shift = width // 2 - 1
    w = rng.integers(lo, hi + 1, (T, 9 * B)) >> shift
    x = rng.integers(lo, hi + 1, (T, 9 * B)) >> 1
    bias = rng.integers(-50 if signed else 0, 50, T)
    bank = engine.EngineBank(cfg, T)
    bank.reset(bias)
    running = bias.copy()
    for k in range(B):
        sl = slice(9 * k, 9 * k + 9)
        bank.consume(w[:, sl], x[:, sl])
        running = running + (w[:, sl] * x[:, sl]).sum(axis=1)
        assert (bank.values() == running).all()
    assert (bank.finalize() == running).all()
    assert not bank.cb.any()


def test_active_mask_holds_state():
    cfg = EngineConfig(8)
    bank = engine.EngineBank(cfg, 2)
    bank.reset([1, 2])
    bank.consume(np.ones((2, 9), int), np.ones((2, 9), int), active=[True, False])
    assert list(bank.values()) == [10, 2]


@given(st.lists(st.tuples(st.integers(-128, 127), st.integers(-128, 127)), min_size=9, max_size=9),
       st.integers(-1000, 1000))
def test_finalize_equals_partial_value(pairs, bias):
    cfg = EngineConfig(8)
    s = consume_batch(reset(cfg, bias), pairs)
    assert finalize(s).sum == partial_value(s) == bias + sum(w * i for w, i in pairs)


@given(st.integers(0, (1 << 20) - 1), st.integers(0, (1 << 20) - 1))
def test_pcpa_is_modular_addition(a, b):
    bits = lambda v: ((np.array([v]) >> np.arange(20)) & 1).astype(np.uint8)[None, :]
    out = engine.pcpa(bits(a), bits(b))[0]
    assert int(sum(int(v) << k for k, v in enumerate(out))) == (a + b) % (1 << 20)


def test_run_stream_zero_padding_neutral(rng):
    cfg = EngineConfig(8)
    w = rng.integers(-128, 128, (10, 25))
    x = rng.integers(-128, 128, (10, 25))
    got = engine.run_stream(cfg, engine.pad_stream(w), engine.pad_stream(x), 3)
    assert list(got) == list((w * x).sum(axis=1) + 3)


def test_engine_network_has_feedback_slots():
    c = engine.compiled(EngineConfig(8))
    assert all(f >= 2 for f in c.net.feedback_slots)
