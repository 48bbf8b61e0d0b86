import math

import h5py
import numpy as np
import pytest

from swarmsca.dataset import SyntheticSpec, empirical_snr_db, export_ascad, generate_synthetic, load_ascad, raised_cosine_pulse
from swarmsca.errors import DegenerateClassesError, InvalidSpecError, LayoutError, ShapeMismatchError
from swarmsca.types import AES_SBOX


def test_calibrated_noise_value():
    # sqrt(2 / 10^(8.4/10)), frozen
    assert SyntheticSpec.calibrated(8.4).noise_sigma == pytest.approx(0.53769, abs=1e-4)


def test_spec_validation():
    with pytest.raises(InvalidSpecError):
        SyntheticSpec(mask_window_center=400)
    with pytest.raises(InvalidSpecError):
        SyntheticSpec(desync_max=400)
    with pytest.raises(InvalidSpecError):
        SyntheticSpec(k_true=300)


def test_pulse_shape():
    p = raised_cosine_pulse(100, 50, 24)
    assert p[50] == 1.0
    assert p.argmax() == 50
    assert np.count_nonzero(p) == 23


def test_generation_is_deterministic():
    spec = SyntheticSpec(n_profiling=50, n_attack=20, seed=5)
    a = generate_synthetic(spec)
    b = generate_synthetic(spec)
    for x, y in zip(a, b):
        assert np.array_equal(x.samples, y.samples)
        assert np.array_equal(x.labels, y.labels)


def test_labels_follow_masked_convention(small_masked):
    spec, prof, _ = small_masked
    s = AES_SBOX[prof.target_plaintext ^ spec.k_true]
    assert np.array_equal(prof.labels, s ^ prof.target_mask)
    assert np.array_equal(prof.unmasked_labels(), s)
    assert prof.label_convention == "masked"


def test_noiseless_unmasked_leakage_exact():
    spec = SyntheticSpec(n_profiling=30, n_attack=10, masked=False, noise_sigma=0.0, seed=1)
    prof, _ = generate_synthetic(spec)
    hw = np.array([bin(v).count("1") for v in prof.labels])
    np.testing.assert_allclose(prof.samples[:, spec.cipher_window_center], hw)
    assert np.all(prof.masks == 0)


def test_empirical_snr_matches_calibration(small_unmasked):
    _, prof, _ = small_unmasked
    assert empirical_snr_db(prof) == pytest.approx(8.4, abs=0.5)


def test_empirical_snr_noiseless_masked_first_order_is_zero():
    prof, _ = generate_synthetic(SyntheticSpec(n_profiling=3000, n_attack=10, noise_sigma=1e-9, seed=2))
    # masked leakage carries no first-order information about the unmasked label,
    # so the estimate sits at the finite-sample floor 10*log10(256 / n) plus the
    # lift from taking the maximum over samples
    floor = 10 * math.log10(256 / len(prof))
    assert empirical_snr_db(prof) < floor + 3.0


def test_empirical_snr_degenerate():
    spec = SyntheticSpec(n_profiling=5, n_attack=5)
    prof, _ = generate_synthetic(spec)
    one = prof.subset([0])
    with pytest.raises(DegenerateClassesError):
        empirical_snr_db(one)


def test_desync_shifts_recorded():
    prof, _ = generate_synthetic(SyntheticSpec(n_profiling=40, n_attack=10, desync_max=30, noise_sigma=0.0))
    assert prof.desync is not None and np.abs(prof.desync).max() <= 30
    ref, _ = generate_synthetic(SyntheticSpec(n_profiling=40, n_attack=10, noise_sigma=0.0))
    for i in range(5):
        assert np.allclose(prof.samples[i], np.roll(ref.samples[i], prof.desync[i]))


def test_hdf5_roundtrip(tmp_path, small_masked):
    _, prof, att = small_masked
    path = tmp_path / "mini.h5"
    export_ascad(path, prof.subset(slice(0, 200)), att.subset(slice(0, 50)))
    p2 = load_ascad(path, "profiling")
    a2 = load_ascad(path, "attack")
    assert np.array_equal(p2.samples, prof.samples[:200])
    assert np.array_equal(p2.labels, prof.labels[:200])
    assert p2.target_byte_index == 3 and p2.label_convention == "masked"
    assert len(a2) == 50


def test_hdf5_infers_unmasked_labels(tmp_path, small_masked):
    _, prof, att = small_masked
    path = tmp_path / "u.h5"
    export_ascad(path, prof.subset(slice(0, 100)), att.subset(slice(0, 20)))
    with h5py.File(path, "r+") as f:
        lab = f["Profiling_traces/labels"][...]
        masks = f["Profiling_traces/metadata"]["masks"][:, 0]
        del f["Profiling_traces/labels"]
        f["Profiling_traces"].create_dataset("labels", data=lab ^ masks)
    ts = load_ascad(path, "profiling")
    assert ts.label_convention == "unmasked"
    assert np.array_equal(ts.unmasked_labels(), prof.unmasked_labels()[:100])


def test_hdf5_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_ascad(tmp_path / "none.h5", "profiling")
    bad = tmp_path / "bad.h5"
    with h5py.File(bad, "w") as f:
        f.create_group("Profiling_traces")
    with pytest.raises(LayoutError):
        load_ascad(bad, "profiling")
    ragged = tmp_path / "ragged.h5"
    with h5py.File(ragged, "w") as f:
        for g in ("Profiling_traces", "Attack_traces"):
            grp = f.create_group(g)
            grp.create_dataset("traces", data=np.zeros(5))
            meta = np.zeros(5, dtype=[("plaintext", np.uint8, (16,)), ("key", np.uint8, (16,)), ("masks", np.uint8, (1,))])
            grp.create_dataset("metadata", data=meta)
    with pytest.raises(ShapeMismatchError):
        load_ascad(ragged, "profiling")
