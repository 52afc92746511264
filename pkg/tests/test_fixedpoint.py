from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lagmpc import nn
from lagmpc.fixedpoint import (FixedFormat, QuantizationRangeError, bench_latency, dequantize,
                               fold_network, forward_fixed, forward_folded, quantize,
                               quantize_net, round_shift)
from lagmpc.sampling import halton_sample_states
from lagmpc.training import HEAD_LAG, Batch, TrainConfig, train


@pytest.fixture(scope="module")
def trained(cfg, plant, head):
    """Briefly trained Laguerre network so batch-norm statistics are non-trivial."""
    rng = np.random.default_rng(0)
    x = cfg.X.lower + rng.random((200, 2)) * (cfg.X.upper - cfg.X.lower)
    eta = np.column_stack([0.2 * np.tanh(x[:, 1] / 10 + 1), 0.05 * x[:, 0], x[:, 0] * 0, x[:, 0] * 0])
    tc = TrainConfig(head=HEAD_LAG, epochs=30, lr=3e-3, batch_size=32)
    params, _ = train(Batch(x=x, eta_star=eta), tc, plant, cfg.X, head)
    return params


@pytest.fixture(scope="module")
def states(cfg):
    return np.array(halton_sample_states(cfg.X, 1000))


def test_format_properties():
    f = FixedFormat()
    assert f.scale == 65536 and f.quantum == 2.0 ** -16
    assert f.max_value == pytest.approx(32767.99998, abs=1e-5) and f.min_value == -32768
    for bad in (0, 31):
        with pytest.raises(ValueError):
            FixedFormat(frac_bits=bad)
    with pytest.raises(ValueError):
        FixedFormat(word_length=16)


def test_quantize_examples():
    f = FixedFormat()
    assert quantize(0.5, f) == 32768
    assert quantize(-0.5, f) == -32768
    # ties round to even
    assert quantize(1.5 / 65536, f) == 2 and quantize(2.5 / 65536, f) == 2
    with pytest.raises(QuantizationRangeError, match="W0"):
        quantize(70000.0, f, "W0")
    with pytest.raises(QuantizationRangeError):
        quantize(np.inf, f)


@given(st.floats(-32000, 32000), st.integers(8, 24))
def test_quantize_within_half_quantum(v, F):
    f = FixedFormat(frac_bits=F)
    if abs(v) < f.max_value:
        assert abs(dequantize(quantize(v, f), f) - v) <= 0.5 * f.quantum


@given(st.integers(-(2**62), 2**62), st.integers(1, 30))
def test_round_shift_matches_exact_rounding(acc, F):
    exact = Fraction(acc, 2**F)
    assert int(round_shift(np.int64(acc), F)) == round(exact)
    assert round_shift(acc, F) == round(exact)


def test_zero_network():
    p = nn.init_params(seed=0)
    for arr in p.W + p.b:
        arr[:] = 0.0
    q = quantize_net(p)
    assert all(not np.any(w) for w in q.W) and all(not np.any(b) for b in q.b)
    # 0.1 is not representable; the bound sits at most one quantum inside
    assert forward_fixed(q, [1.0, -5.0]) == q.u_min == pytest.approx(0.1, abs=q.fmt.quantum)


def test_out_of_range_weight_named():
    p = nn.init_params(seed=0)
    p.W[1][0, 0] = 70000.0
    with pytest.raises(QuantizationRangeError, match="W1"):
        quantize_net(p)


def test_clamp_bounds_tightened_inward():
    q = quantize_net(nn.init_params(seed=0))
    assert q.u_min >= 0.1 and q.u_max <= 0.9
    assert q.u_min - 0.1 < q.fmt.quantum and 0.9 - q.u_max < q.fmt.quantum


def test_folding_matches_float_inference(trained, head, states):
    ref = nn.forward_lagnmpc_first(trained, head, states)
    folded = forward_folded(fold_network(trained), states, head)
    np.testing.assert_allclose(folded, ref, atol=1e-12)


def test_fidelity_on_trained_network(trained, head, states):
    q = quantize_net(trained, head)
    ref = nn.forward_lagnmpc_first(trained, head, states)
    fx = np.array([forward_fixed(q, x) for x in states])
    assert np.max(np.abs(fx - ref)) <= 1e-3


def test_precision_improves_with_fraction_bits(trained, head, states):
    ref = nn.forward_lagnmpc_first(trained, head, states[:300])
    err = {}
    for F in (12, 20):
        q = quantize_net(trained, head, FixedFormat(frac_bits=F))
        err[F] = np.max(np.abs([forward_fixed(q, x) - r for x, r in zip(states[:300], ref)]))
    assert err[20] <= err[12]


def test_nmpc_head_fidelity(cfg, states):
    p = nn.init_params(seed=2, input_box=cfg.X)
    p.b[-1][:] = 0.5
    q = quantize_net(p)
    ref = nn.forward_nmpc(p, states[:200])
    fx = np.array([forward_fixed(q, x) for x in states[:200]])
    assert np.max(np.abs(fx - ref)) <= 1e-3


def test_no_overflow_at_box_corners(trained, head, cfg):
    q = quantize_net(trained, head)
    for x1 in (cfg.X.lower[0], cfg.X.upper[0]):
        for x2 in (cfg.X.lower[1], cfg.X.upper[1]):
            _, flag = forward_fixed(q, [x1, x2], return_flag=True)
            assert not flag


def test_saturation_sets_flag_without_wrapping():
    p = nn.init_params(hidden=(3,), seed=0)
    p.W[0][:] = 30000.0
    p.W[1][:] = 30000.0
    q = quantize_net(p)
    assert q.unsafe
    u, flag = forward_fixed(q, [30000.0, 30000.0], return_flag=True)
    assert flag and u == q.u_max
    p.W[1][:] = -30000.0
    u, flag = forward_fixed(quantize_net(p), [30000.0, 30000.0], return_flag=True)
    assert flag and u == quantize_net(p).u_min


@given(st.integers(0, 2**16), st.floats(0.5, 30.0),
       st.lists(st.floats(-1e4, 1e4), min_size=2, max_size=2))
def test_fixed_output_always_in_box(seed, gain, x):
    from lagmpc.laguerre import laguerre_basis
    head = nn.LaguerreHead.from_basis(laguerre_basis(0.9, 4, 20), 0.4)
    p = nn.init_params(n_out=4, hidden=(6, 6), seed=seed)
    for w in p.W:
        w *= gain
    try:
        q = quantize_net(p, head)
    except QuantizationRangeError:
        return
    assert 0.1 <= forward_fixed(q, x) <= 0.9


def test_bitwise_reproducible(trained, head, states):
    a = [forward_fixed(quantize_net(trained, head), x) for x in states[:50]]
    b = [forward_fixed(quantize_net(trained, head), x) for x in states[:50]]
    assert a == b


def test_quantized_net_is_immutable(trained, head):
    q = quantize_net(trained, head)
    with pytest.raises(AttributeError):
        q.u_min_q = 0


def test_bench_latency(trained, head, states):
    q = quantize_net(trained, head)
    with pytest.raises(ValueError):
        bench_latency(q, states, 99)
    short = bench_latency(q, states[:100], 100)
    long = bench_latency(q, states[:100], 10000)
    assert short["median_ns"] > 0 and long["repetitions"] == 10000
    assert short["min_ns"] <= short["median_ns"] <= short["p99_ns"]
    ratio = short["median_ns"] / long["median_ns"]
    assert 1 / 3 <= ratio <= 3
