import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from swarmsca.combine import (
    CombineWeights,
    SecondOrderFeature,
    coherent_combine,
    mrc_weights,
    preprocess,
    preprocess_rows,
    second_order_product,
    second_order_rows,
    second_order_rows_trace_mean,
    snr_weighted,
)
from swarmsca.dataset import SyntheticSpec, generate_synthetic, raised_cosine_pulse
from swarmsca.errors import ConstantTraceError, EmptyPOIError, LengthMismatchError, NonPositiveError
from swarmsca.types import AES_SBOX, HW_TABLE


def test_preprocess_examples():
    np.testing.assert_allclose(preprocess([1, 2, 3]), [-1.2247449, 0, 1.2247449], atol=1e-6)
    z = preprocess(np.random.default_rng(0).standard_normal(50))
    np.testing.assert_allclose(preprocess(z), z, atol=1e-12)
    with pytest.raises(ConstantTraceError):
        preprocess([4, 4, 4])
    with pytest.raises(ConstantTraceError):
        preprocess_rows(np.array([[1.0, 2.0], [3.0, 3.0]]))


def test_mrc_weights_examples():
    np.testing.assert_allclose(mrc_weights([1, 1, 1]).weights, [1 / 3] * 3)
    np.testing.assert_allclose(mrc_weights([2, 1, 1]).weights, [0.5, 0.25, 0.25])
    assert mrc_weights([7.0]).weights.tolist() == [1.0]
    with pytest.raises(NonPositiveError):
        mrc_weights([1.0, 0.0])
    with pytest.raises(ValueError):
        CombineWeights([0.6, 0.6])


def test_combine_examples():
    x = np.arange(6.0)
    np.testing.assert_allclose(coherent_combine([x, x, x], mrc_weights([3, 1, 2])), x)
    y = -x
    assert np.array_equal(coherent_combine([x, y], CombineWeights([1.0, 0.0])), x)
    with pytest.raises(LengthMismatchError):
        coherent_combine([x, x[:3]], CombineWeights.equal(2))
    with pytest.raises(LengthMismatchError):
        coherent_combine([x], CombineWeights.equal(2))


@pytest.mark.parametrize("n,gain", [(2, 10 * math.log10(2)), (3, 10 * math.log10(3))])
def test_coherent_gain_monte_carlo(n, gain):
    rng = np.random.default_rng(n)
    m = 200_000
    s = np.sin(2 * np.pi * np.arange(m) / 97.0)
    noisy = [s + rng.standard_normal(m) for _ in range(n)]
    out = coherent_combine(noisy, CombineWeights.equal(n))
    measured = 10 * math.log10(1.0 / np.var(out - s))
    assert measured == pytest.approx(gain, abs=0.3)


@settings(max_examples=30, deadline=None)
@given(
    arrays(np.float64, (3, 8), elements=st.floats(-1e3, 1e3)),
    arrays(np.float64, (3, 8), elements=st.floats(-1e3, 1e3)),
    st.floats(-10, 10),
    st.floats(-10, 10),
)
def test_combine_linear(X, Y, a, b):
    w = mrc_weights([1.0, 2.0, 3.5])
    lhs = coherent_combine(list(a * X + b * Y), w)
    rhs = a * coherent_combine(list(X), w) + b * coherent_combine(list(Y), w)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-6)


def test_second_order_examples():
    f = second_order_product([1, 3], [2, 6], [2, 2], [4, 4], "elementwise")
    assert f.values.tolist() == [2.0, 2.0]
    assert f.shape == (2,)
    t = np.array([1.0, 2.0, 3.0, 4.0])
    z = second_order_product(t, t, t, t, "cross_window", [0, 1], [2, 3])
    assert np.all(z.values == 0) and z.grid().shape == (2, 2)


def test_second_order_cross_window_row_major():
    tb = np.array([1.0, 2.0, 0.0, 0.0])
    tc = np.array([0.0, 0.0, 3.0, 5.0])
    f = second_order_product(tb, tc, np.zeros(4), np.zeros(4), "cross_window", [0, 1], [2, 3])
    assert f.values.tolist() == [3.0, 5.0, 6.0, 10.0]


def test_second_order_errors():
    z = np.zeros(4)
    with pytest.raises(EmptyPOIError):
        second_order_product(z, z, z, z, "cross_window", [], [2])
    with pytest.raises(ValueError):
        second_order_product(z, z, z, z, "cross_window", [2], [3])
    with pytest.raises(LengthMismatchError):
        second_order_product(z, z[:3], z, z, "elementwise")
    with pytest.raises(ValueError):
        SecondOrderFeature(np.zeros(3), "other")


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (2, 10), elements=st.floats(-100, 100)))
def test_second_order_symmetry(x):
    rng = np.random.default_rng(0)
    mb, mc = rng.standard_normal(10), rng.standard_normal(10)
    pb, pc = [0, 2, 3], [1, 4]
    fwd = second_order_product(x[0], x[1], mb, mc, "cross_window", pb, pc, check_halves=False).grid()
    rev = second_order_product(x[1], x[0], mc, mb, "cross_window", pc, pb, check_halves=False).grid()
    np.testing.assert_allclose(fwd, rev.T)
    e1 = second_order_product(x[0], x[1], mb, mc, "elementwise").values
    e2 = second_order_product(x[1], x[0], mc, mb, "elementwise").values
    np.testing.assert_allclose(e1, e2)


def test_rows_match_single():
    rng = np.random.default_rng(5)
    tb, tc = rng.standard_normal((2, 6, 20))
    mb, mc = rng.standard_normal((2, 20))
    rows = second_order_rows(tb, tc, mb, mc, "cross_window", [1, 4], [12, 15, 19])
    for i in range(6):
        np.testing.assert_array_equal(rows[i], second_order_product(tb[i], tc[i], mb, mc, "cross_window", [1, 4], [12, 15, 19]).values)


def test_trace_mean_variant():
    tb = np.array([[1.0, 3.0, 2.0, 2.0]])
    tc = np.array([[0.0, 0.0, 4.0, 8.0]])
    out = second_order_rows_trace_mean(tb, tc, [0, 1], [2, 3])
    # trace means 2 and 3
    assert out[0].tolist() == [-1.0, -5.0, 1.0, 5.0]


def test_snr_weighted():
    x = np.ones((2, 3))
    out = snr_weighted(x, np.array([0.5, np.nan, 2.0]))
    assert out[0].tolist() == [0.5, 0.0, 2.0]
    with pytest.raises(LengthMismatchError):
        snr_weighted(x, np.ones(2))


def _exact_traces(z: int, spec: SyntheticSpec) -> np.ndarray:
    """Noiseless masked traces for one unmasked value z and all 256 masks."""
    r = np.arange(256)
    mp = raised_cosine_pulse(spec.sample_count, spec.mask_window_center, spec.pulse_width)
    cp = raised_cosine_pulse(spec.sample_count, spec.cipher_window_center, spec.pulse_width)
    return spec.leak_amplitude * (HW_TABLE[r][:, None] * mp + HW_TABLE[z ^ r][:, None] * cp)


def test_mask_cancellation_closed_form():
    spec = SyntheticSpec()
    mp = raised_cosine_pulse(spec.sample_count, spec.mask_window_center, spec.pulse_width)
    cp = raised_cosine_pulse(spec.sample_count, spec.cipher_window_center, spec.pulse_width)
    means = 4.0 * (mp + cp)  # exact population mean with uniform mask and value
    pb = [spec.mask_window_center - 2, spec.mask_window_center]
    pc = [spec.cipher_window_center, spec.cipher_window_center + 3]
    for z in (0x00, 0x01, 0x5A, 0xFF):
        feat = second_order_rows(_exact_traces(z, spec), _exact_traces(z, spec), means, means, "cross_window", pb, pc).mean(axis=0)
        # Cov(HW(r), HW(r ^ z)) = 2 - HW(z)/2 for uniform r
        expect = (2.0 - HW_TABLE[z] / 2.0) * np.outer(mp[pb], cp[pc]).ravel()
        np.testing.assert_allclose(feat, expect, rtol=1e-12, atol=1e-12)


def test_second_order_correlates_while_first_order_does_not():
    spec = SyntheticSpec(n_profiling=20_000, n_attack=10, seed=9)
    prof, _ = generate_synthetic(spec)
    hw = HW_TABLE[prof.unmasked_labels()].astype(float)
    x = prof.samples.astype(float)
    first = np.corrcoef(x[:, spec.cipher_window_center], hw)[0, 1]
    means = x.mean(axis=0)
    so = second_order_rows(x, x, means, means, "cross_window", [spec.mask_window_center], [spec.cipher_window_center])[:, 0]
    second = np.corrcoef(so, hw)[0, 1]
    assert abs(first) < 0.03
    # the product falls with HW(z): negative correlation with the weight, positive with (8 - HW)
    assert np.corrcoef(so, 8 - hw)[0, 1] > 0.1
    assert second < 0
