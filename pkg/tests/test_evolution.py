import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from stimrwa.evolution import (
    IntegrationError,
    SelfInteractionParams,
    Trajectory,
    evolve_linear,
    evolve_modes,
    fit_sin_power,
    integrate_self_interaction,
    probabilities,
    selfint_hamiltonian,
)
from stimrwa.linalg import eig_hermitian, random_hermitian
from stimrwa.perturbation import FourierMode, delta_h_at


def _driven(seed, n=3):
    rng = np.random.default_rng(seed)
    h0 = random_hermitian(n, rng)
    modes = [FourierMode(rng.uniform(0.5, 2), 0.4 * (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))))
             for _ in range(2)]
    return h0, modes


def test_zero_hamiltonian_is_identity():
    r = np.linspace(0, 5, 6)
    traj = evolve_modes(np.zeros((2, 2), dtype=complex), [], r)
    assert np.allclose(traj.payload, np.eye(2))
    assert np.allclose(evolve_linear(lambda t: np.zeros((2, 2)), 0, 5), np.eye(2))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31))
def test_constant_hamiltonian_matches_expm(seed):
    rng = np.random.default_rng(seed)
    h = random_hermitian(3, rng)
    r = np.linspace(0, 4, 9)
    ref = np.array([expm(-1j * h * t) for t in r])
    # all of it in h_const: the interaction picture is then trivial
    traj = evolve_modes(np.zeros((3, 3), dtype=complex), [], r, h_const=h)
    assert np.max(np.abs(traj.payload - ref)) < 1e-8
    traj = evolve_modes(h, [], r)
    assert np.max(np.abs(traj.payload - ref)) < 1e-12
    lin = evolve_linear(lambda t: h, 0.0, 4.0, tol=1e-12, r_eval=r)
    assert np.max(np.abs(lin.payload - ref)) < 1e-9


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 2**31))
def test_dopri_against_dop853(seed):
    h0, modes = _driven(seed)
    r = np.linspace(0, 20, 41)
    a = evolve_modes(h0, modes, r, rtol=1e-11, atol=1e-13)
    b = evolve_linear(lambda t: h0 + delta_h_at(modes, t), 0, 20, tol=1e-11, r_eval=r)
    assert np.max(np.abs(a.payload - b.payload)) < 1e-7
    assert a.info["unitarity"] <= 1e-9
    assert b.info["unitarity"] <= 1e-9


def test_probabilities_doubly_stochastic():
    h0, modes = _driven(11)
    traj = evolve_modes(h0, modes, np.linspace(0, 30, 31), rtol=1e-11, atol=1e-13)
    basis = eig_hermitian(h0)
    for p in (probabilities(traj.payload), probabilities(traj.payload, basis, basis)):
        assert np.max(np.abs(p.sum(axis=-1) - 1)) <= 1e-9
        assert np.max(np.abs(p.sum(axis=-2) - 1)) <= 1e-9


def test_step_limit_raises():
    h0, modes = _driven(2)
    with pytest.raises(IntegrationError):
        evolve_modes(h0, modes, np.linspace(0, 100, 3), max_steps=10)


def test_vacuum_limit_of_self_interaction():
    params = SelfInteractionParams(mu=0.0)
    hv = params.vacuum()
    k = float(np.max(np.linalg.eigvalsh(hv)))
    r = np.linspace(0, 3 * np.pi / k, 301)
    run = integrate_self_interaction(params, r)
    p = np.abs(run.S.payload[:, 1, 0]) ** 2
    expected = np.sin(2 * params.theta) ** 2 * np.sin(k * r) ** 2
    assert np.max(np.abs(p - expected)) < 1e-9
    assert np.allclose(run.H_SI.payload, 0)


@pytest.mark.parametrize("alpha", [1.0, 0.8, 0.3])
def test_self_interaction_invariants(alpha):
    params = SelfInteractionParams(alpha=alpha)
    r = np.linspace(0, 2e6, 401)
    run = integrate_self_interaction(params, r, rtol=1e-11, atol=1e-13)
    assert run.S.info["unitarity"] <= 1e-9
    h = run.H_SI.payload
    mu = params.mu_cm_inv()
    # trace of mu [rho - alpha rhobar^*] is conserved
    assert np.max(np.abs(np.trace(h, axis1=1, axis2=2) - mu * (1 - alpha))) < 1e-9 * mu
    assert np.max(np.abs(h - np.conj(np.swapaxes(h, 1, 2)))) < 1e-15 * mu
    assert np.allclose(selfint_hamiltonian(params, run.S.payload, run.Sbar.payload), h)


def test_symmetric_case_species_coincide():
    run = integrate_self_interaction(SelfInteractionParams(alpha=1.0), np.linspace(0, 1e6, 101))
    assert np.array_equal(run.S.payload, run.Sbar.payload)
    assert np.all(run.H_SI.payload.real == 0)


def test_params_validation():
    with pytest.raises(ValueError):
        SelfInteractionParams(alpha=1.5)
    with pytest.raises(ValueError):
        SelfInteractionParams(rho0=np.diag([1.0, 1.0]))
    with pytest.raises(ValueError):
        SelfInteractionParams(rho0=np.diag([1.5, -0.5]))


@pytest.mark.parametrize("power", [2, 6, 12])
def test_sin_power_fit(power):
    r = np.linspace(0, 40, 4000)
    p = 0.8 * np.sin(0.37 * r) ** power
    fit = fit_sin_power(r, p)
    assert fit.exponent == power
    assert fit.amplitude == pytest.approx(0.8, rel=1e-6)
    assert fit.wavenumber == pytest.approx(0.37, rel=1e-6)


def test_sin_power_flat_input_flagged():
    fit = fit_sin_power(np.linspace(0, 1, 10), np.full(10, 1e-9))
    assert fit.flagged


def test_trajectory_checks_and_csv(tmp_path):
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 0.0]), np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 1.0]), np.zeros((2, 2, 2)), kind="nonsense")
    t = Trajectory(np.array([0.0, 0.5]), np.array([np.eye(2), 1j * np.eye(2)]))
    assert t.spacing == 0.5
    t.to_csv(tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0][:3] == ["r_cm", "re_11", "re_12"]
    assert float(rows[2][rows[0].index("im_11")]) == 1.0
    with pytest.raises(ValueError):
        Trajectory(np.array([0.0, 1.0, 3.0]), np.zeros((3, 2, 2))).spacing
