"""Neutrino scenario builders and unit conversions.

Internally every energy is a wavenumber in cm^-1 (hbar = c = 1). The
builders take the customary units (eV^2, MeV, erg) and convert once.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .linalg import EigenSystem, dagger, eig_hermitian
from .perturbation import FourierMode


@dataclass(frozen=True)
class UnitContext:
    hbar_c: float = 1.97327e-5  # eV cm
    erg_per_eV: float = 1.602177e-12

    @property
    def hbar_c_erg(self) -> float:
        return self.hbar_c * self.erg_per_eV

    def eV_to_cm_inv(self, e):
        return np.asarray(e) / self.hbar_c

    def cm_inv_to_eV(self, k):
        return np.asarray(k) * self.hbar_c

    def erg_to_cm_inv(self, e):
        return np.asarray(e) / self.hbar_c_erg

    def cm_inv_to_erg(self, k):
        return np.asarray(k) * self.hbar_c_erg


UNITS = UnitContext()


class LabelAmbiguityWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# three flavours


@dataclass(frozen=True)
class OscillationParams:
    """Three-flavour vacuum + constant matter + two sinusoids.

    ``dm2_21 = m2^2 - m1^2`` and ``dm2_32 = m3^2 - m2^2`` (eV^2); angles in
    radians; ``E`` in MeV; ``Vstar`` in erg; ``q1``/``q2`` in cm^-1, where
    ``None`` means "on resonance" (``k3 - k1`` and ``k3 - k2`` respectively).
    """

    dm2_21: float = 7.5e-5
    dm2_32: float = 2.32e-3
    theta12: float = np.radians(34.0)
    theta13: float = np.radians(9.0)
    theta23: float = np.radians(45.0)
    E: float = 5.0
    Vstar: float = 6e-25
    A1: float = 0.1
    A2: float = 0.5
    q1: float | None = None
    q2: float | None = None

    def __post_init__(self):
        if not self.E > 0:
            raise ValueError("neutrino energy must be positive")


def build_mixing_matrix(theta12: float, theta13: float, theta23: float) -> np.ndarray:
    """Real three-flavour mixing matrix with every CP phase set to zero."""
    c12, s12 = np.cos(theta12), np.sin(theta12)
    c13, s13 = np.cos(theta13), np.sin(theta13)
    c23, s23 = np.cos(theta23), np.sin(theta23)
    return np.array(
        [
            [c12 * c13, s12 * c13, s13],
            [-s12 * c23 - c12 * s13 * s23, c12 * c23 - s12 * s13 * s23, c13 * s23],
            [s12 * s23 - c12 * s13 * c23, -c12 * s23 - s12 * s13 * c23, c13 * c23],
        ]
    )


def vacuum_hamiltonian_3f(params: OscillationParams, units: UnitContext = UNITS) -> np.ndarray:
    """Flavour-basis vacuum Hamiltonian in cm^-1, middle mass state at zero energy."""
    if params.E == 0:
        raise ValueError("E = 0")
    u = build_mixing_matrix(params.theta12, params.theta13, params.theta23)
    masses = np.diag([-params.dm2_21, 0.0, params.dm2_32])
    h_ev = u @ masses @ u.T / (2.0 * params.E * 1e6)
    return units.eV_to_cm_inv(h_ev).astype(complex)


def electron_projector(n: int = 3) -> np.ndarray:
    p = np.zeros((n, n), dtype=complex)
    p[0, 0] = 1.0
    return p


def matter_perturbation(params: OscillationParams, q1: float, q2: float, units: UnitContext = UNITS):
    """Constant matter term and the two Fourier modes, flavour basis, cm^-1.

    Modes with zero amplitude are dropped.
    """
    v = float(units.erg_to_cm_inv(params.Vstar))
    pe = electron_projector()
    modes = [
        FourierMode(q, 0.5 * v * amp * pe)
        for q, amp in ((q1, params.A1), (q2, params.A2))
        if amp != 0
    ]
    return v * pe, modes


def label_states(eig: EigenSystem, reference: np.ndarray) -> EigenSystem:
    """Reorder eigenpairs so column ``i`` best overlaps ``reference[:, i]``.

    Assignment is greedy, largest overlap first. Near-ties (within 1e-6)
    emit :class:`LabelAmbiguityWarning` and fall back to the lowest index.
    """
    overlap = np.abs(dagger(np.asarray(reference)) @ eig.vectors)  # [ref, eig]
    n = eig.dim
    order = np.full(n, -1)
    free_ref, free_eig = set(range(n)), set(range(n))
    while free_ref:
        sub = [(overlap[r, e], r, e) for r in sorted(free_ref) for e in sorted(free_eig)]
        best = max(s[0] for s in sub)
        ties = [s for s in sub if best - s[0] <= 1e-6]
        _, r, e = min(ties, key=lambda s: (s[1], s[2]))
        if any((s[1] == r) != (s[2] == e) for s in ties):
            warnings.warn(f"ambiguous state labelling (overlap {best:.6f})", LabelAmbiguityWarning)
        order[r] = e
        free_ref.discard(r)
        free_eig.discard(e)
    return eig.permuted(order)


@dataclass(frozen=True)
class TransparencySetup:
    params: OscillationParams
    h_unperturbed: np.ndarray
    basis: EigenSystem
    q1: float
    q2: float
    modes: tuple[FourierMode, ...]
    vacuum_mixing: np.ndarray

    @property
    def splittings(self) -> tuple[float, float]:
        """``(k3 - k1, k3 - k2)`` in cm^-1."""
        k = self.basis.values
        return float(k[2] - k[0]), float(k[2] - k[1])

    def hamiltonian(self, r) -> np.ndarray:
        from .perturbation import delta_h_at

        return self.h_unperturbed + delta_h_at(list(self.modes), r, dim=3)


def transparency_setup(params: OscillationParams = OscillationParams(), units: UnitContext = UNITS) -> TransparencySetup:
    hv = vacuum_hamiltonian_3f(params, units)
    v = float(units.erg_to_cm_inv(params.Vstar))
    h0 = hv + v * electron_projector()
    u_vac = build_mixing_matrix(params.theta12, params.theta13, params.theta23)
    basis = label_states(eig_hermitian(h0), u_vac)
    k = basis.values
    q1 = params.q1 if params.q1 is not None else float(k[2] - k[0])
    q2 = params.q2 if params.q2 is not None else float(k[2] - k[1])
    _, modes = matter_perturbation(params, q1, q2, units)
    return TransparencySetup(params, h0, basis, q1, q2, tuple(modes), u_vac)


# --------------------------------------------------------------------------
# two flavours


def mixing_matrix_2f(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]])


def vacuum_hamiltonian_2f(dm2: float, theta: float, E: float, units: UnitContext = UNITS) -> np.ndarray:
    """Two-flavour vacuum Hamiltonian (cm^-1); ``dm2 = m1^2 - m2^2`` in eV^2, ``E`` in MeV.

    Eigenvalues are ``+-dm2 / 4E`` with the ``+`` state along the first
    column of :func:`mixing_matrix_2f`.
    """
    if not E > 0:
        raise ValueError("neutrino energy must be positive")
    k = float(units.eV_to_cm_inv(dm2 / (4.0 * E * 1e6)))
    c2, s2 = np.cos(2 * theta), np.sin(2 * theta)
    return (k * np.array([[c2, -s2], [-s2, -c2]])).astype(complex)
