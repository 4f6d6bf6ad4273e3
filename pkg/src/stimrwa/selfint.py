"""RWA analysis of a recorded self-interaction run.

The recorded ``H_SI`` is decomposed into harmonics, the mean is folded
into the unperturbed Hamiltonian and the strongest harmonics drive a
two-level RWA solution for neutrinos and antineutrinos separately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evolution import SelfInteractionRun, SinPowerFit, fit_sin_power
from .linalg import EigenSystem, dagger, eig_hermitian
from .neutrino import label_states, mixing_matrix_2f
from .perturbation import FourierMode
from .rwa import (
    DrivenSystem,
    IntegerSelection,
    RwaSolution,
    build_solution,
    enumerate_degenerate,
    kappa_pair,
    select_integers,
)
from .spectral import ModeSpectrum, decompose, detect_fundamental, residual_table, top_multiples


def antineutrino_modes(modes) -> list[FourierMode]:
    """Modes of ``-H^*`` given the modes of ``H``: ``C -> -C^T``."""
    return [FourierMode(m.q, -m.C.T) for m in modes]


def flavour_basis(h0: np.ndarray, theta: float) -> EigenSystem:
    """Eigenbasis of ``h0`` labelled against the vacuum mixing matrix."""
    return label_states(eig_hermitian(h0), mixing_matrix_2f(theta))


def flavour_probability(solution: RwaSolution, r, i: int = 1, j: int = 0) -> np.ndarray:
    """``|(U S_u U^H)_{ij}|^2`` from an RWA solution, flavour basis."""
    u = solution.system.basis.vectors
    s = u @ solution.S_unperturbed_basis(r) @ dagger(u)
    return np.abs(s[..., i, j]) ** 2


@dataclass
class SpeciesResult:
    name: str
    system: DrivenSystem
    selection: IntegerSelection
    solution: RwaSolution
    degenerate: list[IntegerSelection]
    solution_degenerate: RwaSolution | None
    kappa_contributions: np.ndarray
    numeric_amplitude: float
    fit: SinPowerFit

    @property
    def rwa_amplitude(self) -> float:
        return self.solution.pair_summary(0, 1)["amplitude"]

    @property
    def rwa_wavenumber(self) -> float:
        return self.solution.pair_summary(0, 1)["Q"]


@dataclass
class SelfIntAnalysis:
    q1: float
    spectrum: ModeSpectrum
    multiples: list[int]
    residuals: list[tuple[int, float]]
    neutrino: SpeciesResult
    antineutrino: SpeciesResult


def _species(name, basis, modes, run_S, r, radius, degenerate, multiples) -> SpeciesResult:
    system = DrivenSystem.build(basis, modes)
    sel = select_integers(system, "exhaustive-scan", radius)
    sol = build_solution(system, sel)
    sets = enumerate_degenerate(sel, system.K, system.q, radius, harmonics=multiples)
    contrib = np.array([kappa_pair(system, s.as_tuple(), 0, 1) for s in sets[1:]], dtype=complex)
    sol_deg = build_solution(system, sel, degenerate={0: [s.as_tuple() for s in sets]}) if degenerate else None
    p = np.abs(run_S[:, 1, 0]) ** 2
    fit = fit_sin_power(r, p)
    return SpeciesResult(name, system, sel, sol, sets[1:], sol_deg, contrib, float(p.max()), fit)


def analyze(
    run: SelfInteractionRun,
    n_modes: int,
    radius: int = 2,
    degenerate: bool = True,
    kmax: int = 128,
    window_periods: int | None = 1,
    max_residual_modes: int = 10,
) -> SelfIntAnalysis:
    """Decompose ``run.H_SI`` and build the RWA solutions for both species.

    ``window_periods`` sets the projection window; one period keeps the
    leakage small when the recorded signal is only approximately periodic.
    """
    h = run.H_SI
    q1 = detect_fundamental(h)
    spec = decompose(h, q1, kmax, n_periods=window_periods)
    multiples = top_multiples(spec, n_modes)
    modes = spec.subset(multiples).modes()
    resid = residual_table(spec, h, max_residual_modes)
    hv = run.params.vacuum()
    theta = run.params.theta
    r = run.S.r
    nu = _species("neutrino", flavour_basis(hv + spec.mean, theta), modes, run.S.payload, r,
                  radius, degenerate, multiples)
    nubar = _species("antineutrino", flavour_basis(hv - np.conj(spec.mean), theta), antineutrino_modes(modes),
                     run.Sbar.payload, r, radius, degenerate, multiples)
    return SelfIntAnalysis(q1, spec, multiples, resid, nu, nubar)
