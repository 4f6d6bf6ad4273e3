"""Generalised rotating wave approximation for Fourier-mode perturbations.

In the interaction picture of the unperturbed Hamiltonian, with the diagonal
part of the perturbation removed by the phases ``xi``, the element ``ij`` of
the remaining Hamiltonian expands (Jacobi-Anger) into a sum over integer
tuples ``m`` of terms oscillating at ``dk_ij + sum_a m_a q_a``. The RWA keeps
one tuple per independent state pair, which makes the Hamiltonian
``Y(t) M Y(t)^H`` with constant ``M`` and ``Y = exp(i Lambda t)``, so the
evolution is a single matrix exponential.

Conventions used throughout:

* states are 0-based; the independent pairs are the superdiagonal
  ``(l, l+1)``, and ``n_ij`` for other pairs follows by chaining;
* the retained element is ``H_ij = -i kappa_ij exp(i d_ij t)`` for ``i < j``
  with ``d_ij = k_i - k_j + sum_a n_a;ij q_a``;
* ``Lambda_i = k_i + sum_a n_a;i q_a`` with the last state anchored at 0.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .bessel import jn, jn_range
from .linalg import EigenSystem, dagger, eig_hermitian, expm_hermitian_times
from .perturbation import FourierMode, ModeEigenData, PairMixing, mode_eigen_data, pair_mixing, xi_at

_MINUS_I_POWERS = (1.0 + 0j, -1j, -1.0 + 0j, 1j)


def minus_i_pow(m: int) -> complex:
    """``(-i)**m`` exactly, for any integer ``m``."""
    return _MINUS_I_POWERS[int(m) % 4]


def lambda_coeff(z: float, psi: float, x: float, m: int) -> complex:
    return minus_i_pow(m) * np.exp(1j * x) * jn(m, z) * np.exp(1j * m * psi)


def kappa_coeff(G_ij: complex, G_ji: complex, z: float, psi: float, x: float, m: int) -> complex:
    up = np.conj(G_ji) * jn(m + 1, z) * np.exp(1j * (m + 1) * psi)
    down = G_ij * jn(m - 1, z) * np.exp(1j * (m - 1) * psi)
    return minus_i_pow(m) * np.exp(1j * x) * (up - down)


# --------------------------------------------------------------------------
# integer selections


@dataclass(frozen=True)
class IntegerSelection:
    """RWA integers on the superdiagonal: ``n[a, l] = n_{a; l, l+1}``."""

    n: np.ndarray

    def __post_init__(self):
        n = np.array(self.n, dtype=np.int64)
        if n.ndim != 2 or n.shape[1] < 1:
            raise ValueError(f"selection must have shape (n_modes, N-1), got {n.shape}")
        n.setflags(write=False)
        object.__setattr__(self, "n", n)

    @classmethod
    def two_level(cls, ints: Iterable[int]) -> "IntegerSelection":
        return cls(np.asarray(list(ints), dtype=np.int64).reshape(-1, 1))

    @classmethod
    def from_pairs(cls, pairs: Mapping[tuple[int, int], Sequence[int]], n_states: int) -> "IntegerSelection":
        """Build from integers given on any N-1 pairs that pin down the chain.

        Raises ``ValueError`` if the pairs are inconsistent or underdetermined.
        """
        rows, rhs = [], []
        for (i, j), vals in pairs.items():
            sign = 1
            if i > j:
                i, j, sign = j, i, -1
            if i == j:
                raise ValueError("diagonal pair in selection")
            row = np.zeros(n_states - 1)
            row[i:j] = 1.0
            rows.append(row)
            rhs.append(sign * np.asarray(vals, dtype=float))
        a = np.array(rows)
        b = np.array(rhs)
        if np.linalg.matrix_rank(a) < n_states - 1:
            raise ValueError("pairs do not determine all independent integers")
        sol, *_ = np.linalg.lstsq(a, b, rcond=None)
        n = np.rint(sol).astype(np.int64)
        if not np.allclose(a @ n, b):
            raise ValueError("inconsistent integer pairs: n_ij != n_il + n_lj")
        return cls(n.T)

    @property
    def n_modes(self) -> int:
        return self.n.shape[0]

    @property
    def n_states(self) -> int:
        return self.n.shape[1] + 1

    def pair(self, i: int, j: int) -> np.ndarray:
        """Integers ``n_{a;ij}`` for all modes."""
        if i == j:
            return np.zeros(self.n_modes, dtype=np.int64)
        if i > j:
            return -self.pair(j, i)
        return self.n[:, i:j].sum(axis=1)

    def state_integers(self, shift=None) -> np.ndarray:
        """Per-state integers ``n_{a;i}`` (shape ``(n_modes, N)``), last state 0.

        ``shift`` adds a per-mode constant to every state, which leaves all
        differences, and so all physics, unchanged.
        """
        out = np.zeros((self.n_modes, self.n_states), dtype=np.int64)
        for i in range(self.n_states - 2, -1, -1):
            out[:, i] = self.n[:, i] + out[:, i + 1]
        if shift is not None:
            out = out + np.asarray(shift, dtype=np.int64).reshape(-1, 1)
        return out

    def with_pair(self, l: int, ints: Sequence[int]) -> "IntegerSelection":
        n = self.n.copy()
        n[:, l] = ints
        return IntegerSelection(n)

    def as_tuple(self, l: int = 0) -> tuple[int, ...]:
        return tuple(int(v) for v in self.n[:, l])


# --------------------------------------------------------------------------
# the driven system


@dataclass(frozen=True)
class DrivenSystem:
    """Unperturbed eigenbasis plus the perturbation's per-mode eigen data."""

    basis: EigenSystem
    modes: tuple[FourierMode, ...]
    data: tuple[ModeEigenData, ...] = field(repr=False)

    @classmethod
    def build(cls, h0, modes: Sequence[FourierMode]) -> "DrivenSystem":
        basis = h0 if isinstance(h0, EigenSystem) else eig_hermitian(h0)
        modes = tuple(modes)
        data = tuple(mode_eigen_data(m, basis) for m in modes)
        return cls(basis, modes, data)

    @property
    def K(self) -> np.ndarray:
        return self.basis.values

    @property
    def q(self) -> np.ndarray:
        return np.array([m.q for m in self.modes], dtype=float)

    @property
    def n_states(self) -> int:
        return self.basis.dim

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def mixing(self, a: int, i: int, j: int) -> PairMixing:
        return pair_mixing(self.data[a], self.modes[a].q, i, j)

    def detuning(self, i: int, j: int, ints) -> float:
        return float(self.K[i] - self.K[j] + np.dot(np.asarray(ints, dtype=float), self.q))

    def pair_tables(self, i: int, j: int, mmin: int, mmax: int):
        """``lambda`` and ``kappa`` per mode for ``m = mmin..mmax``.

        Returns two complex arrays of shape ``(n_modes, mmax - mmin + 1)``.
        """
        ms = np.arange(mmin, mmax + 1)
        lam = np.empty((self.n_modes, ms.size), dtype=complex)
        kap = np.empty_like(lam)
        for a in range(self.n_modes):
            mx = self.mixing(a, i, j)
            g_ij = self.data[a].G[i, j]
            g_ji = self.data[a].G[j, i]
            bj = jn_range(mmin - 1, mmax + 1, mx.z)
            phase = np.exp(1j * mx.x) * np.array([minus_i_pow(m) for m in ms])
            lam[a] = phase * bj[1:-1] * np.exp(1j * ms * mx.psi)
            kap[a] = phase * (
                np.conj(g_ji) * bj[2:] * np.exp(1j * (ms + 1) * mx.psi)
                - g_ij * bj[:-2] * np.exp(1j * (ms - 1) * mx.psi)
            )
        return lam, kap

    def phases_xi(self, t) -> np.ndarray:
        """Sum over modes of the diagonal phases ``xi_i(t)``; shape ``t.shape + (N,)``."""
        t = np.asarray(t, dtype=float)
        total = np.zeros(t.shape + (self.n_states,))
        for d, m in zip(self.data, self.modes):
            total = total + xi_at(d, m.q, t)
        return total


def _kappa_from_tables(lam: np.ndarray, kap: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """``sum_a kap[a, idx_a] prod_{b != a} lam[b, idx_b]`` for rows of ``idx``.

    ``idx`` has shape ``(G, n_modes)``; works when some ``lam`` entries vanish.
    """
    n_modes = lam.shape[0]
    cols = np.arange(n_modes)
    lsel = lam[cols, idx]  # (G, M)
    ksel = kap[cols, idx]
    ones = np.ones((idx.shape[0], 1), dtype=complex)
    prefix = np.cumprod(np.hstack([ones, lsel[:, :-1]]), axis=1)
    suffix = np.cumprod(np.hstack([ones, lsel[:, :0:-1]]), axis=1)[:, ::-1]
    return np.sum(ksel * prefix * suffix, axis=1)


def kappa_pair(system: DrivenSystem, ints, i: int, j: int) -> complex:
    """Coupling ``kappa_ij`` for one integer tuple ``ints`` (``n_{a;ij}`` per mode)."""
    ints = np.asarray(ints, dtype=np.int64)
    if system.n_modes == 0:
        return 0j
    lo, hi = int(ints.min()), int(ints.max())
    lam, kap = system.pair_tables(i, j, lo, hi)
    return complex(_kappa_from_tables(lam, kap, (ints - lo)[None, :])[0])


def kappa_degenerate(system: DrivenSystem, sets: Sequence, i: int, j: int) -> complex:
    """Sum of ``kappa_ij`` over several integer tuples sharing one detuning."""
    sets = np.asarray(sets, dtype=np.int64).reshape(len(sets), -1)
    lo, hi = int(sets.min()), int(sets.max())
    lam, kap = system.pair_tables(i, j, lo, hi)
    return complex(np.sum(_kappa_from_tables(lam, kap, sets - lo)))


# --------------------------------------------------------------------------
# the solution


def build_lambda(selection: IntegerSelection, K, q, shift=None) -> np.ndarray:
    """Diagonal of ``Lambda``: ``k_i + sum_a n_{a;i} q_a``."""
    n_state = selection.state_integers(shift)
    return np.asarray(K, dtype=float) + np.asarray(q, dtype=float) @ n_state


@dataclass(frozen=True)
class RwaSolution:
    selection: IntegerSelection
    kappa: np.ndarray  # strictly upper triangular
    detuning: np.ndarray  # d_ij for i < j, antisymmetric
    Lambda: np.ndarray  # diagonal entries
    M: np.ndarray
    system: DrivenSystem | None = field(default=None, repr=False, compare=False)

    @property
    def HOmega(self) -> np.ndarray:
        return self.M + np.diag(self.Lambda)

    @property
    def dim(self) -> int:
        return len(self.Lambda)

    def B(self, t) -> np.ndarray:
        return solve_B(self, t)

    def probabilities(self, t) -> np.ndarray:
        """``|B_yx(t)|^2``; transition from ``x`` to ``y`` at ``[..., y, x]``."""
        return np.abs(self.B(t)) ** 2

    def S_unperturbed_basis(self, t) -> np.ndarray:
        """Full approximate evolution ``exp(-iKt) exp(-i Xi(t)) B(t)`` in the eigenbasis."""
        if self.system is None:
            raise ValueError("solution was built without its system")
        t = np.asarray(t, dtype=float)
        phase = np.exp(-1j * (np.multiply.outer(t, self.system.K) + self.system.phases_xi(t)))
        return phase[..., :, None] * self.B(t)

    def hamiltonian_B(self, t) -> np.ndarray:
        """RWA-truncated ``H^(B)(t)`` assembled element by element."""
        t = np.asarray(t, dtype=float)
        n = self.dim
        h = np.zeros(t.shape + (n, n), dtype=complex)
        for i in range(n):
            for j in range(i + 1, n):
                h[..., i, j] = -1j * self.kappa[i, j] * np.exp(1j * self.detuning[i, j] * t)
                h[..., j, i] = np.conj(h[..., i, j])
        return h

    def upsilon(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.exp(1j * np.multiply.outer(t, self.Lambda))

    def pair_summary(self, i: int, j: int) -> dict:
        """Two-level style numbers for a pair: kappa, 2p, Q and amplitude ``|kappa|^2/Q^2``."""
        k = self.kappa[min(i, j), max(i, j)]
        d = self.detuning[min(i, j), max(i, j)]
        p = 0.5 * d
        qq = np.sqrt(p * p + abs(k) ** 2)
        amp = abs(k) ** 2 / qq**2 if qq > 0 else 0.0
        return {"kappa": complex(k), "detuning": float(d), "Q": float(qq), "amplitude": float(amp)}


def build_solution(
    system: DrivenSystem,
    selection: IntegerSelection,
    degenerate: Mapping[int, Sequence] | None = None,
    shift=None,
) -> RwaSolution:
    """Assemble ``kappa``, ``M`` and ``Lambda`` for an integer selection.

    ``degenerate`` maps a superdiagonal index ``l`` to a list of integer tuples
    for pair ``(l, l+1)`` whose contributions are summed instead of using the
    single selected tuple. The tuples must share the selected detuning.
    """
    n = system.n_states
    if selection.n_states != n or selection.n_modes != system.n_modes:
        raise ValueError(
            f"selection shape {selection.n.shape} does not fit "
            f"{system.n_modes} modes x {n} states"
        )
    degenerate = degenerate or {}
    kappa = np.zeros((n, n), dtype=complex)
    det = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            ints = selection.pair(i, j)
            det[i, j] = system.detuning(i, j, ints)
            det[j, i] = -det[i, j]
            if j == i + 1 and i in degenerate:
                kappa[i, j] = kappa_degenerate(system, degenerate[i], i, j)
            elif system.n_modes:
                kappa[i, j] = kappa_pair(system, ints, i, j)
    m = -1j * kappa
    m = m + dagger(m)
    lam = build_lambda(selection, system.K, system.q, shift)
    return RwaSolution(selection, kappa, det, lam, m, system)


def solve_B(solution: RwaSolution, t) -> np.ndarray:
    """``B(t) = Y(t) exp(-i H_Omega t)`` with ``B(0) = 1``."""
    t = np.asarray(t, dtype=float)
    u = expm_hermitian_times(solution.HOmega, t)
    return solution.upsilon(t)[..., :, None] * u


# --------------------------------------------------------------------------
# closed forms


def two_level_closed_form(kappa: complex, detuning2p: float, t):
    """``P_12 = |kappa|^2 / Q^2 sin^2(Q t)`` with ``Q^2 = p^2 + |kappa|^2``."""
    p = 0.5 * detuning2p
    q = float(np.sqrt(p * p + abs(kappa) ** 2))
    t = np.asarray(t, dtype=float)
    if q == 0:
        return np.zeros_like(t), 0.0
    return abs(kappa) ** 2 / q**2 * np.sin(q * t) ** 2, q


def two_level_B(kappa: complex, detuning2p: float, t) -> np.ndarray:
    p = 0.5 * detuning2p
    q = np.sqrt(p * p + abs(kappa) ** 2)
    t = np.asarray(t, dtype=float)
    c, s = np.cos(q * t), np.sin(q * t)
    sq = s / q if q > 0 else t
    ep = np.exp(1j * p * t)
    b = np.empty(t.shape + (2, 2), dtype=complex)
    b[..., 0, 0] = ep * (c - 1j * p * sq)
    b[..., 0, 1] = -ep * kappa * sq
    b[..., 1, 0] = np.conj(ep) * np.conj(kappa) * sq
    b[..., 1, 1] = np.conj(ep) * (c + 1j * p * sq)
    return b


def three_level_resonant_B(kappa13: complex, kappa23: complex, Lambda, r) -> np.ndarray:
    """Analytic ``B(r)`` for a doubly resonant three-level system with ``kappa_12 = 0``.

    Exact only when ``Lambda_1 = Lambda_2 = Lambda_3``; the ``Lambda - Lambda_3``
    prefactor is kept so slightly off-resonant inputs degrade smoothly.
    """
    k13, k23 = complex(kappa13), complex(kappa23)
    q2 = abs(k13) ** 2 + abs(k23) ** 2
    if q2 == 0:
        raise ValueError("Q = 0: both couplings vanish")
    q = np.sqrt(q2)
    r = np.asarray(r, dtype=float)
    c, s = np.cos(q * r), np.sin(q * r)
    b = np.empty(r.shape + (3, 3), dtype=complex)
    b[..., 0, 0] = (abs(k23) ** 2 + abs(k13) ** 2 * c) / q2
    b[..., 0, 1] = k13 * np.conj(k23) / q2 * (c - 1)
    b[..., 0, 2] = -k13 / q * s
    b[..., 1, 0] = k23 * np.conj(k13) / q2 * (c - 1)
    b[..., 1, 1] = (abs(k13) ** 2 + abs(k23) ** 2 * c) / q2
    b[..., 1, 2] = -k23 / q * s
    b[..., 2, 0] = np.conj(k13) / q * s
    b[..., 2, 1] = np.conj(k23) / q * s
    b[..., 2, 2] = c
    lam = np.asarray(Lambda, dtype=float)
    pre = np.exp(1j * np.multiply.outer(r, lam - lam[2]))
    return pre[..., :, None] * b


# --------------------------------------------------------------------------
# choosing integers


def integer_grid(n_modes: int, radius: int) -> np.ndarray:
    if radius < 0 or n_modes < 1:
        raise ValueError("empty integer grid")
    return np.array(list(itertools.product(range(-radius, radius + 1), repeat=n_modes)), dtype=np.int64)


def _tie_break(candidates: np.ndarray) -> np.ndarray:
    """Smallest ``sum |n|`` first, then lexicographic order."""
    weight = np.abs(candidates).sum(axis=1)
    best = candidates[weight == weight.min()]
    order = np.lexsort(best.T[::-1])
    return best[order[0]]


def scan_amplitudes(system: DrivenSystem, radius: int, pair: int = 0):
    """``|kappa|^2 / Q^2`` over the full integer hypercube for pair ``(pair, pair+1)``.

    Returns ``(grid, kappa, detuning, amplitude)``.
    """
    i, j = pair, pair + 1
    grid = integer_grid(system.n_modes, radius)
    lam, kap = system.pair_tables(i, j, -radius, radius)
    kvals = _kappa_from_tables(lam, kap, grid + radius)
    det = system.K[i] - system.K[j] + grid @ system.q
    p = 0.5 * det
    q2 = p * p + np.abs(kvals) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        amp = np.where(q2 > 0, np.abs(kvals) ** 2 / q2, 0.0)
    return grid, kvals, det, amp


def select_integers(
    system: DrivenSystem,
    strategy: str = "nearest-resonance",
    radius: int = 2,
    manual=None,
    tie_rtol: float = 1e-12,
) -> IntegerSelection:
    """Choose the RWA integer set.

    Strategies: ``manual`` (pass ``manual`` through), ``nearest-resonance``
    (per superdiagonal pair, the grid tuple with smallest ``|detuning|``) and
    ``exhaustive-scan`` (two-level only: maximise ``|kappa|^2/Q^2``).
    """
    if strategy == "manual":
        if manual is None:
            raise ValueError("manual strategy needs explicit integers")
        return manual if isinstance(manual, IntegerSelection) else IntegerSelection(manual)
    if strategy not in ("nearest-resonance", "exhaustive-scan"):
        raise ValueError(f"unknown strategy {strategy!r}")
    if system.n_modes == 0:
        return IntegerSelection(np.zeros((0, system.n_states - 1), dtype=np.int64))
    if strategy == "nearest-resonance":
        grid = integer_grid(system.n_modes, radius)
        cols = []
        for l in range(system.n_states - 1):
            det = np.abs(system.K[l] - system.K[l + 1] + grid @ system.q)
            cand = grid[det <= det.min() + tie_rtol * np.max(system.q)]
            cols.append(_tie_break(cand))
        return IntegerSelection(np.array(cols).T)
    if strategy == "exhaustive-scan":
        if system.n_states != 2:
            raise ValueError("exhaustive-scan is defined for two-level systems only")
        grid, _, _, amp = scan_amplitudes(system, radius)
        top = amp.max()
        cand = grid[amp >= top * (1 - tie_rtol)]
        return IntegerSelection.two_level(_tie_break(cand))
    raise ValueError(f"unknown strategy {strategy!r}")


def enumerate_degenerate(
    base: IntegerSelection,
    K,
    q,
    radius: int,
    tol: float = 1e-9,
    pair: int = 0,
    harmonics: Sequence[int] | None = None,
) -> list[IntegerSelection]:
    """All grid selections sharing ``base``'s detuning on pair ``(pair, pair+1)``.

    The base set comes first, the rest follow in tie-break order. When
    ``harmonics`` gives every frequency as an integer multiple of one
    fundamental, equality is tested exactly in integer arithmetic; otherwise
    detunings must agree within ``tol * max|q|``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    q = np.asarray(q, dtype=float)
    grid = integer_grid(len(q), radius)
    ref = base.n[:, pair]
    if harmonics is not None:
        h = np.asarray(harmonics, dtype=np.int64)
        match = grid @ h == ref @ h
    else:
        match = np.abs(grid @ q - ref @ q) <= tol * np.max(np.abs(q))
    found = grid[match]
    others = [row for row in found if not np.array_equal(row, ref)]
    others.sort(key=lambda r: (int(np.abs(r).sum()), tuple(int(v) for v in r)))
    return [base] + [base.with_pair(pair, row) for row in others]
