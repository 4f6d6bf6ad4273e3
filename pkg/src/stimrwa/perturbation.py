"""Fourier-decomposed perturbations and their per-mode eigenbasis data.

A perturbation is a list of modes ``(q_a, C_a)`` contributing
``C_a exp(i q_a t) + C_a^H exp(-i q_a t)`` to the Hamiltonian. Projected
onto the unperturbed eigenbasis, each mode splits into a diagonal part,
written as ``(f / 2i) exp(i phi)`` per state, and an off-diagonal part ``G``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bessel import jn_range
from .linalg import EigenSystem, dagger


def wrap_phase(phi):
    """Map angles into ``(-pi, pi]``."""
    out = np.mod(np.asarray(phi, dtype=float) + np.pi, 2 * np.pi) - np.pi
    out = np.where(out <= -np.pi, out + 2 * np.pi, out)
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class FourierMode:
    """One Fourier mode of the perturbation.

    ``q`` must be strictly positive: negative frequencies live in the
    conjugate term, and a constant offset belongs in the unperturbed part.
    """

    q: float
    C: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.C, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"mode matrix must be square, got shape {c.shape}")
        if not np.isfinite(self.q) or self.q <= 0:
            raise ValueError(f"mode frequency must be > 0, got {self.q!r}")
        object.__setattr__(self, "q", float(self.q))
        object.__setattr__(self, "C", c)

    @property
    def dim(self) -> int:
        return self.C.shape[0]

    def at(self, t):
        e = np.exp(1j * self.q * np.asarray(t, dtype=float))[..., None, None]
        return self.C * e + dagger(self.C) * np.conj(e)


@dataclass(frozen=True)
class ModeEigenData:
    F: np.ndarray
    Phi: np.ndarray
    G: np.ndarray

    def diagonal(self) -> np.ndarray:
        return self.F / 2j * np.exp(1j * self.Phi)

    def reconstruct(self) -> np.ndarray:
        """``U^H C U`` rebuilt from ``F``, ``Phi`` and ``G``."""
        return self.G + np.diag(self.diagonal())


@dataclass(frozen=True)
class PairMixing:
    x: float
    y: float
    z: float
    psi: float


def mode_eigen_data(mode: FourierMode, basis: EigenSystem) -> ModeEigenData:
    if mode.dim != basis.dim:
        raise ValueError(f"mode dimension {mode.dim} != basis dimension {basis.dim}")
    cu = basis.to_basis(mode.C)
    d = np.diag(cu).copy()
    scale = float(np.max(np.abs(cu))) if cu.size else 0.0
    # (f/2i) e^{i phi} = d  =>  f e^{i phi} = 2i d
    w = 2j * d
    f = np.abs(w)
    zero = np.abs(d) <= 1e-15 * scale
    f[zero] = 0.0
    phi = np.where(zero, 0.0, wrap_phase(np.angle(w)))
    g = cu - np.diag(np.diag(cu))
    return ModeEigenData(F=f, Phi=np.asarray(phi, dtype=float), G=g)


def pair_mixing(data: ModeEigenData, q: float, i: int, j: int) -> PairMixing:
    if i == j:
        raise ValueError("pair_mixing needs two distinct states")
    f, phi = data.F, data.Phi
    x = (f[i] * np.cos(phi[i]) - f[j] * np.cos(phi[j])) / q
    y = (f[i] * np.sin(phi[i]) - f[j] * np.sin(phi[j])) / q
    z = float(np.hypot(x, y))
    psi = 0.0 if z == 0.0 else float(wrap_phase(np.arctan2(y, x)))
    return PairMixing(float(x), float(y), z, psi)


def xi_at(data: ModeEigenData, q: float, t):
    """Diagonal phases ``xi_i(t)`` removing this mode's diagonal perturbation."""
    if q <= 0:
        raise ValueError("q must be positive")
    t = np.asarray(t, dtype=float)[..., None]
    return data.F / q * (np.cos(data.Phi) - np.cos(data.Phi + q * t))


def delta_xi(mixings: Sequence[PairMixing], qs: Sequence[float], t):
    """``xi_i - xi_j`` summed over modes, written through ``x, z, psi``."""
    t = np.asarray(t, dtype=float)
    total = np.zeros_like(t)
    for m, q in zip(mixings, qs):
        total = total + m.x - m.z * np.cos(q * t + m.psi)
    return total


def delta_h_at(modes: Sequence[FourierMode], t, dim: int | None = None) -> np.ndarray:
    """Evaluate the perturbation at time(s) ``t``."""
    if not modes:
        if dim is None:
            raise ValueError("dim is required for an empty mode list")
        return np.zeros(np.shape(t) + (dim, dim), dtype=complex)
    dims = {m.dim for m in modes}
    if len(dims) != 1:
        raise ValueError(f"modes have mismatched dimensions {sorted(dims)}")
    return sum(m.at(t) for m in modes)


def jacobi_anger_partial(mix: PairMixing, q: float, t, mmax: int):
    """Truncated expansion of ``exp(i (x - z cos(q t + psi)))`` over ``|m| <= mmax``."""
    t = np.asarray(t, dtype=float)
    ms = np.arange(-mmax, mmax + 1)
    j = jn_range(-mmax, mmax, mix.z)
    coeff = (-1j) ** ms * j * np.exp(1j * ms * mix.psi)
    series = np.exp(1j * np.multiply.outer(t, ms) * q) @ coeff
    return np.exp(1j * mix.x) * series
