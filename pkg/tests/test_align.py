import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmsca.align import (
    AlignmentResult,
    SyncEstimate,
    align_profiling,
    coarse_shift_samples,
    coarse_timestamp_shift,
    fine_pilot_sync,
    fractional_shift,
    integer_shift,
    two_stage_sync,
)
from swarmsca.dataset import SyntheticSpec, generate_synthetic
from swarmsca.errors import DegenerateReferenceError, ExcessiveShiftError, PilotAbsentError

FS = 25e6


def pilot(n, f=1e3, delay=0.0, phase=0.3, fs=FS):
    """Continuous-time pilot sampled at n - delay (delay in samples)."""
    t = np.arange(n) - delay
    return np.cos(2 * np.pi * f / fs * t + phase)


@pytest.fixture(scope="module")
def noiseless_desync():
    spec = SyntheticSpec(n_profiling=300, n_attack=10, noise_sigma=0.0, desync_max=100, seed=4)
    prof, _ = generate_synthetic(spec)
    ref, _ = generate_synthetic(spec.with_(desync_max=0))
    return prof, ref


def test_align_recovers_corpus_desync(noiseless_desync):
    prof, ref = noiseless_desync
    out, res = align_profiling(prof, ref.samples.mean(axis=0, dtype=np.float64), s_max=100)
    assert np.array_equal(res.shifts, prof.desync)
    np.testing.assert_allclose(out.samples, ref.samples)


@settings(max_examples=50, deadline=None)
@given(st.integers(-100, 100))
def test_shift_then_align_roundtrip(s):
    rng = np.random.default_rng(0)
    base = rng.standard_normal(700)
    from swarmsca.types import TraceSet

    ts = TraceSet(np.roll(base, s)[None], np.zeros((1, 16)), np.zeros((1, 16)), np.zeros((1, 1)), np.zeros(1))
    _, res = align_profiling(ts, base, s_max=100)
    assert res.shifts[0] == s


def test_align_rejects_flat_reference(noiseless_desync):
    prof, _ = noiseless_desync
    with pytest.raises(DegenerateReferenceError):
        align_profiling(prof, np.ones(prof.sample_count))
    with pytest.raises(ValueError):
        align_profiling(prof, s_max=400)


def test_alignment_result_csv(tmp_path):
    res = AlignmentResult(np.array([3, -2]), 5, np.zeros(4))
    res.to_csv(tmp_path / "a.csv")
    assert (tmp_path / "a.csv").read_text() == "trace,shift\n0,3\n1,-2\n"
    with pytest.raises(ValueError):
        AlignmentResult(np.array([6]), 5, np.zeros(4))


def test_coarse_shift_examples():
    assert coarse_shift_samples([0.0, 0.0]) == [0, 0]
    assert coarse_shift_samples([0.0, 1e-6]) == [0, 25]
    assert coarse_shift_samples([0.0, 20e-9]) == [0, 0]
    x = np.arange(10.0)
    y = coarse_timestamp_shift([x, x], [0.0, 2 / FS])
    assert y[1].tolist() == [0, 0, 0, 1, 2, 3, 4, 5, 6, 7]


def test_integer_shift_both_directions():
    x = np.arange(5.0)
    assert np.array_equal(integer_shift(x, 2, 0.0), [0, 0, 0, 1, 2])
    assert np.array_equal(integer_shift(x, -2, 0.0), [2, 3, 4, 0, 0])
    assert np.isnan(integer_shift(x, 1)[0])


def test_fractional_shift_identity_and_integer():
    x = np.random.default_rng(1).standard_normal(400)
    np.testing.assert_allclose(fractional_shift(x, 0.0), x, atol=1e-15)
    y = fractional_shift(x, 2 / FS)
    np.testing.assert_array_equal(y[2:], x[:-2])
    assert np.all(np.isnan(y[:2]))


def test_fractional_shift_sinusoid_phase():
    f_norm = 0.01
    n = 4000
    x = np.cos(2 * np.pi * f_norm * np.arange(n))
    y = fractional_shift(x, 0.5 / FS)
    ok = np.isfinite(y)
    idx = np.arange(n)[ok]
    A = np.column_stack([np.cos(2 * np.pi * f_norm * idx), np.sin(2 * np.pi * f_norm * idx)])
    a, b = np.linalg.lstsq(A, y[ok], rcond=None)[0]
    phase = math.atan2(b, a)  # y = cos(w n - phase)
    expected = 0.5 * 2 * np.pi * f_norm
    assert phase == pytest.approx(expected, rel=0.01)


def test_fractional_shift_edges_and_limit():
    x = np.ones(256)
    y = fractional_shift(x, 0.3 / FS)
    assert np.isnan(y[0]) and np.isnan(y[-1])
    assert np.isfinite(y[100])
    with pytest.raises(ExcessiveShiftError):
        fractional_shift(x, 64 / FS)


def test_pilot_zero_offset():
    b = pilot(100_000)
    est = fine_pilot_sync([b, b.copy()])
    assert est[0].tau_hat == 0.0
    assert abs(est[1].tau_hat) < 1e-9
    assert not est[1].flagged


def test_pilot_fractional_delay_25ns():
    est = fine_pilot_sync([pilot(100_000), pilot(100_000, delay=0.625)])
    assert est[1].tau_hat == pytest.approx(25e-9, abs=2e-9)


def test_pilot_150ns_flagged():
    est = fine_pilot_sync([pilot(100_000), pilot(100_000, delay=150e-9 * FS)])
    assert est[1].flagged
    assert est[1].tau_hat == pytest.approx(150e-9, abs=2e-9)


def test_pilot_absent():
    rng = np.random.default_rng(2)
    with pytest.raises(PilotAbsentError):
        fine_pilot_sync([pilot(50_000), rng.standard_normal(50_000)])


def test_sync_estimate_flag_invariant():
    with pytest.raises(ValueError):
        SyncEstimate(200e-9, 0, False)
    assert SyncEstimate(100e-9, 0, True).flagged


def test_pilot_recovery_at_20db_snr():
    # fast pilot so that the 2 ns target lies well above the estimator's noise floor
    rng = np.random.default_rng(7)
    f = 500e3
    n = 20_000
    sigma = math.sqrt(0.5 / 100.0)  # pilot power 0.5, SNR 20 dB
    base = pilot(n, f)
    errs = []
    for tau_samples in rng.uniform(-1, 1, 100):
        a = base + sigma * rng.standard_normal(n)
        b = fractional_shift(base, tau_samples / FS) + sigma * rng.standard_normal(n)
        est = fine_pilot_sync([a, b], pilot_freq=f)
        errs.append(est[1].tau_hat - tau_samples / FS)
    assert np.max(np.abs(errs)) < 2e-9


def test_two_stage_sync_residual():
    rng = np.random.default_rng(3)
    n = 120_000
    true = pilot(n + 100, delay=-50)  # extra margin for the capture offsets
    for off in rng.uniform(0, 1e-6, 10):
        shift = off * FS
        anchor = true[:n]
        other = pilot(n + 100, delay=-50 - shift)[:n]  # captured 'off' seconds later
        aligned, est = two_stage_sync([anchor, other], [0.0, off])
        r = shift - round(shift)
        assert abs(est[1].tau_hat + r / FS) < 10e-9
        again = fine_pilot_sync(aligned)
        assert abs(again[1].tau_hat) < 10e-9
