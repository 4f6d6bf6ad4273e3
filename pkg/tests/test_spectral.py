import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stimrwa.evolution import Trajectory
from stimrwa.spectral import (
    NoPeriodicityError,
    decompose,
    detect_fundamental,
    dominant_wavenumber,
    read_spectrum_csv,
    reconstruct,
    reconstruction_error,
    refine_period,
    residual_table,
    top_multiples,
)


def harmonic_signal(q1, coeffs, mean, r):
    """Hermitian H(r) = mean + sum_k C_k e^{ikq1 r} + h.c."""
    h = np.broadcast_to(mean, (len(r),) + mean.shape).astype(complex).copy()
    for k, c in coeffs.items():
        e = np.exp(1j * k * q1 * r)[:, None, None]
        h += c * e + np.conj(c.T) * np.conj(e)
    return Trajectory(r, h, "hamiltonian")


def random_coeffs(rng, ks, n=2, scale=1.0):
    return {k: scale / k * (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) for k in ks}


def _mean(rng, n=2):
    m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (m + np.conj(m.T))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.3, 3.0), st.integers(400, 1500))
def test_round_trip_off_grid_window(seed, q1, spp):
    # sampling deliberately not commensurate with the period
    rng = np.random.default_rng(seed)
    coeffs = random_coeffs(rng, [1, 2, 5])
    mean = _mean(rng)
    dr = 2 * np.pi / q1 / (spp + 0.37)
    r = np.arange(4 * spp) * dr
    spec = decompose(harmonic_signal(q1, coeffs, mean, r), q1, 8)
    assert np.allclose(spec.mean, mean, atol=1e-6)
    for k in range(1, 9):
        assert np.allclose(spec.coefficient(k), coeffs.get(k, 0), atol=1e-6)


def test_exact_period_window_is_exact():
    rng = np.random.default_rng(4)
    q1 = 1.3
    coeffs = random_coeffs(rng, [1, 3])
    r = np.arange(1024 * 3) * (2 * np.pi / q1 / 1024)
    spec = decompose(harmonic_signal(q1, coeffs, np.zeros((2, 2)), r), q1, 10)
    assert np.allclose(spec.coefficient(3), coeffs[3], atol=1e-12)
    assert np.all(spec.coefficient(2) == 0)  # cleaned to exact zero
    assert reconstruction_error(spec, harmonic_signal(q1, coeffs, np.zeros((2, 2)), r)) < 1e-12


def test_parseval():
    rng = np.random.default_rng(9)
    q1 = 0.8
    coeffs = random_coeffs(rng, [1, 2, 4, 7])
    r = np.arange(512 * 2) * (2 * np.pi / q1 / 512)
    traj = harmonic_signal(q1, coeffs, np.zeros((2, 2)), r)
    spec = decompose(traj, q1, 16, n_periods=1)
    power_time = np.mean(np.sum(np.abs(traj.payload[:512]) ** 2, axis=(1, 2)))
    # each C_k appears twice (C e^{ikqr} and its adjoint)
    power_freq = 2 * np.sum(np.abs(spec.coeffs) ** 2)
    assert power_freq == pytest.approx(power_time, rel=1e-10)


def test_mean_is_hermitian_and_routed_separately():
    rng = np.random.default_rng(1)
    mean = _mean(rng)
    q1 = 1.0
    r = np.arange(2000) * 0.01
    spec = decompose(harmonic_signal(q1, random_coeffs(rng, [1]), mean, r), q1, 4)
    assert np.allclose(spec.mean, np.conj(spec.mean.T))
    assert 0 not in spec.ks


def test_detect_fundamental_with_missing_fundamental_line():
    # only harmonics 2 and 3 present: the fundamental is still 1.1
    rng = np.random.default_rng(3)
    coeffs = random_coeffs(rng, [2, 3])
    r = np.arange(20000) * 0.0123
    q = detect_fundamental(harmonic_signal(1.1, coeffs, np.zeros((2, 2)), r))
    assert q == pytest.approx(1.1, rel=1e-9)


def test_detect_fundamental_unrefined_is_close():
    rng = np.random.default_rng(8)
    traj = harmonic_signal(0.77, random_coeffs(rng, [1, 2]), np.zeros((2, 2)), np.arange(30000) * 0.011)
    assert detect_fundamental(traj, refine=False) == pytest.approx(0.77, rel=1e-3)
    assert 2 * np.pi / refine_period(traj, 2 * np.pi / 0.7702) == pytest.approx(0.77, rel=1e-10)


def test_noise_has_no_periodicity():
    rng = np.random.default_rng(0)
    n = 4096
    h = rng.normal(size=(n, 2, 2)) + 1j * rng.normal(size=(n, 2, 2))
    h = h + np.conj(np.swapaxes(h, 1, 2))
    with pytest.raises(NoPeriodicityError):
        detect_fundamental(Trajectory(np.arange(n) * 1.0, h, "hamiltonian"))


def test_dominant_wavenumber():
    r = np.linspace(0, 100, 10001)
    assert dominant_wavenumber(r, np.sin(2.5 * r) + 0.1 * np.sin(7 * r)) == pytest.approx(2.5, rel=1e-3)


def test_coarse_sampling_flagged():
    from stimrwa.spectral import WindowingWarning

    rng = np.random.default_rng(2)
    r = np.arange(400) * (2 * np.pi / 40.3)
    with pytest.warns(WindowingWarning):
        spec = decompose(harmonic_signal(1.0, random_coeffs(rng, [1]), np.zeros((2, 2)), r), 1.0, 3)
    assert spec.flagged


def test_nyquist_and_window_errors():
    rng = np.random.default_rng(2)
    r = np.arange(100) * 0.5
    traj = harmonic_signal(1.0, random_coeffs(rng, [1]), np.zeros((2, 2)), r)
    with pytest.raises(ValueError):
        decompose(traj, 1.0, 10)
    with pytest.raises(ValueError):
        decompose(traj, 1.0, 2, n_periods=50)


def test_top_multiples_and_subset_order():
    rng = np.random.default_rng(6)
    coeffs = {1: 0.1 * np.eye(2), 3: 2.0 * np.eye(2), 4: 1.0 * np.eye(2), 7: 0.5 * np.eye(2)}
    coeffs = {k: v.astype(complex) + 0 * rng.normal() for k, v in coeffs.items()}
    q1 = 1.0
    r = np.arange(400 * 2) * (2 * np.pi / 400)
    spec = decompose(harmonic_signal(q1, coeffs, np.zeros((2, 2)), r), q1, 10)
    assert top_multiples(spec, 3) == [3, 4, 7]
    sub = spec.subset([4, 3])
    assert list(sub.ks) == [4, 3]
    assert [m.q for m in sub.modes()] == pytest.approx([4.0, 3.0])


def test_residual_table_decreases():
    rng = np.random.default_rng(5)
    q1 = 1.0
    coeffs = random_coeffs(rng, range(1, 8))
    r = np.arange(300 * 2) * (2 * np.pi / 300)
    traj = harmonic_signal(q1, coeffs, np.zeros((2, 2)), r)
    spec = decompose(traj, q1, 12)
    table = residual_table(spec, traj, 7)
    errs = [e for _, e in table]
    assert all(a >= b for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-10
    h = reconstruct(spec, r)
    assert np.allclose(h, traj.payload, atol=1e-10)


def test_spectrum_csv_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    q1 = 0.5
    r = np.arange(500 * 2) * (2 * np.pi / q1 / 500)
    spec = decompose(harmonic_signal(q1, random_coeffs(rng, [1, 2]), _mean(rng), r), q1, 5)
    spec.to_csv(tmp_path / "s.csv")
    back = read_spectrum_csv(tmp_path / "s.csv")
    assert back.q1 == pytest.approx(q1, rel=1e-15)
    assert np.array_equal(back.ks, spec.ks)
    assert np.array_equal(back.coeffs, spec.coeffs)
    assert np.array_equal(back.mean, spec.mean)
