"""Reference integrators for the Schrodinger equation ``i dS/dr = H(r) S``.

Two engines are provided:

* a compiled Dormand-Prince 5(4) integrator with Shampine's dense output,
  used for the Fourier-mode and self-interaction systems where the
  right-hand side can be compiled as well;
* :func:`evolve_linear`, which accepts any Python callable ``H(r)`` and
  delegates to ``scipy.integrate.solve_ivp`` (DOP853).

The two share no code, so each serves as a cross-check of the other.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba as nb
import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import least_squares

from .linalg import EigenSystem, dagger, eig_hermitian, unitarity_defect
from .neutrino import UNITS, UnitContext, vacuum_hamiltonian_2f
from .perturbation import FourierMode


class IntegrationError(RuntimeError):
    """The integrator could not reach the requested end point."""


# --------------------------------------------------------------------------
# Dormand-Prince 5(4) tableau and dense-output polynomial

_C = np.array([0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0])
_A = np.zeros((7, 7))
_A[1, :1] = [1 / 5]
_A[2, :2] = [3 / 40, 9 / 40]
_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_A[6, :6] = _B[:6]
_E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
_P = np.array(
    [
        [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_MAXSTEPS = 2


@nb.njit(cache=True)
def _rms(err, y, ynew, rtol, atol):
    acc = 0.0
    e = err.ravel()
    a = y.ravel()
    b = ynew.ravel()
    for i in range(e.size):
        sc = atol + rtol * max(abs(a[i]), abs(b[i]))
        acc += (abs(e[i]) / sc) ** 2
    return np.sqrt(acc / e.size)


@nb.njit(cache=True)
def _dopri_dense(f, y0, r0, r_out, rtol, atol, args, h_min, max_steps):
    """Integrate ``y' = f(r, y, *args)`` and sample ``y`` at sorted ``r_out``.

    Returns ``(samples, n_accepted, n_rejected, status, r_reached)``.
    """
    shape = (r_out.size,) + y0.shape
    out = np.zeros(shape, dtype=np.complex128)
    y = y0.copy()
    r = r0
    r1 = r_out[-1]
    k = np.zeros((7,) + y0.shape, dtype=np.complex128)
    k[0] = f(r, y, *args)

    # initial step from the local scale of y and y'
    d0 = 0.0
    d1 = 0.0
    yr = y.ravel()
    fr = k[0].ravel()
    for i in range(yr.size):
        sc = atol + rtol * abs(yr[i])
        d0 += (abs(yr[i]) / sc) ** 2
        d1 += (abs(fr[i]) / sc) ** 2
    span = r1 - r0
    if d0 > 1e-10 and d1 > 1e-10:
        h = 0.01 * np.sqrt(d0 / d1)
    else:
        h = 1e-6 * span
    h = min(h, span) if span > 0 else 0.0

    nxt = 0
    while nxt < r_out.size and r_out[nxt] <= r0:
        out[nxt] = y
        nxt += 1

    n_acc = 0
    n_rej = 0
    status = 0
    while nxt < r_out.size:
        if n_acc + n_rej >= max_steps:
            status = 2
            break
        if h < h_min:
            status = 1
            break
        last = r + h >= r1
        if last:
            h = r1 - r
        for s in range(1, 7):
            yt = y.copy()
            for m in range(s):
                if _A[s, m] != 0.0:
                    yt += (h * _A[s, m]) * k[m]
            k[s] = f(r + _C[s] * h, yt, *args)
        ynew = y.copy()
        for m in range(6):
            if _B[m] != 0.0:
                ynew += (h * _B[m]) * k[m]
        err = np.zeros_like(y)
        for m in range(7):
            if _E[m] != 0.0:
                err += (h * _E[m]) * k[m]
        en = _rms(err, y, ynew, rtol, atol)
        if en <= 1.0:
            rn = r1 if last else r + h
            while nxt < r_out.size and r_out[nxt] <= rn:
                th = (r_out[nxt] - r) / h
                b0 = th
                b1 = th * th
                b2 = b1 * th
                b3 = b2 * th
                ys = y.copy()
                for m in range(7):
                    w = _P[m, 0] * b0 + _P[m, 1] * b1 + _P[m, 2] * b2 + _P[m, 3] * b3
                    if w != 0.0:
                        ys += (h * w) * k[m]
                out[nxt] = ys
                nxt += 1
            r = rn
            y = ynew
            k[0] = k[6]
            n_acc += 1
            fac = 0.9 * en ** -0.2 if en > 0.0 else 10.0
            h *= min(10.0, max(0.2, fac))
        else:
            n_rej += 1
            h *= max(0.2, 0.9 * en ** -0.2)
    return out, n_acc, n_rej, status, r


# --------------------------------------------------------------------------
# compiled right-hand sides


@nb.njit(cache=True)
def _modes_rhs(r, y, K, Hc, Cs, qs):
    # interaction picture of diag(K): y = exp(iKr) S
    n = K.shape[0]
    H = Hc.copy()
    for a in range(qs.shape[0]):
        e = np.exp(1j * qs[a] * r)
        H += Cs[a] * e + np.conj(Cs[a].T) * np.conj(e)
    ph = np.exp(1j * K * r)
    for i in range(n):
        for j in range(n):
            H[i, j] *= ph[i] * np.conj(ph[j])
    return -1j * (H @ y)


@nb.njit(cache=True)
def _selfint_rhs(r, y, HV, mu, alpha, rho0, rhob0):
    S = y[0]
    Sb = y[1]
    rho = S @ rho0 @ np.conj(S.T)
    rhob = Sb @ rhob0 @ np.conj(Sb.T)
    hsi = mu * (rho - alpha * np.conj(rhob))
    out = np.empty_like(y)
    out[0] = -1j * ((HV + hsi) @ S)
    out[1] = -1j * ((HV - np.conj(hsi)) @ Sb)
    return out


def _run(f, y0, r_out, rtol, atol, args, min_step_rel, max_steps):
    r_out = np.ascontiguousarray(r_out, dtype=float)
    if r_out.ndim != 1 or r_out.size == 0:
        raise ValueError("need a non-empty 1-D array of sample points")
    if np.any(np.diff(r_out) <= 0):
        raise ValueError("sample points must be strictly increasing")
    if not rtol > 0:
        raise ValueError("tolerance must be positive")
    r0 = 0.0
    if r_out[0] < r0:
        raise ValueError("sample points must be >= 0")
    h_min = min_step_rel * (r_out[-1] - r0)
    out, n_acc, n_rej, status, r_end = _dopri_dense(
        f, np.ascontiguousarray(y0, dtype=np.complex128), r0, r_out, rtol, atol, args, h_min, max_steps
    )
    if status == STATUS_UNDERFLOW:
        raise IntegrationError(f"step size underflow at r = {r_end:.6g}")
    if status == STATUS_MAXSTEPS:
        raise IntegrationError(f"step budget of {max_steps} exhausted at r = {r_end:.6g}")
    return out, {"accepted": int(n_acc), "rejected": int(n_rej)}


# --------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class Trajectory:
    """Sampled ``(r, payload)`` records; ``payload[n]`` belongs to ``r[n]``."""

    r: np.ndarray
    payload: np.ndarray
    kind: str = "evolution-matrix"
    info: dict = field(default_factory=dict, compare=False)

    KINDS = ("evolution-matrix", "hamiltonian", "probabilities")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        r = np.asarray(self.r, dtype=float)
        if r.ndim != 1 or len(r) != len(self.payload):
            raise ValueError("r and payload lengths differ")
        if len(r) > 1 and np.any(np.diff(r) <= 0):
            raise ValueError("r must be strictly increasing")
        object.__setattr__(self, "r", r)

    def __len__(self):
        return len(self.r)

    @property
    def spacing(self) -> float:
        """Uniform sample spacing; raises if the grid is not uniform."""
        d = np.diff(self.r)
        if len(d) == 0:
            raise ValueError("need at least two samples")
        if np.max(np.abs(d - d.mean())) > 1e-9 * abs(d.mean()):
            raise ValueError("trajectory is not uniformly sampled")
        return float(d.mean())

    def element(self, i: int, j: int) -> np.ndarray:
        return self.payload[:, i, j]

    def map(self, fn, kind: str | None = None) -> "Trajectory":
        return Trajectory(self.r, fn(self.payload), kind or self.kind, dict(self.info))

    def to_csv(self, path, scale: float = 1.0):
        """Write ``r_cm`` followed by real and imaginary parts of every element."""
        p = np.asarray(self.payload) * scale
        n = p.shape[-1]
        cols = [(i, j) for i in range(n) for j in range(n)]
        header = ["r_cm"] + [f"re_{i + 1}{j + 1}" for i, j in cols] + [f"im_{i + 1}{j + 1}" for i, j in cols]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r, m in zip(self.r, p):
                row = [r] + [m[i, j].real for i, j in cols] + [m[i, j].imag for i, j in cols]
                w.writerow([fmt(v) for v in row])


def fmt(v: float) -> str:
    """Full-precision, locale-free float formatting."""
    return format(float(v), ".17g")


# --------------------------------------------------------------------------
# linear evolution


def evolve_linear(
    H: Callable[[float], np.ndarray],
    r0: float,
    r1: float,
    tol: float = 1e-10,
    r_eval: Sequence[float] | None = None,
    dim: int | None = None,
):
    """Evolution operator ``S(r1, r0)`` for an arbitrary callable ``H(r)``.

    Uses DOP853 with ``rtol = tol`` and ``atol = tol * 1e-2``. If ``r_eval``
    is given a :class:`Trajectory` over those points is returned instead.

    Raises
    ------
    IntegrationError
        If the solver fails, including step-size underflow.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if dim is None:
        dim = np.asarray(H(r0)).shape[0]
    eye = np.eye(dim, dtype=complex).ravel()

    def rhs(r, y):
        return (-1j * (np.asarray(H(r), dtype=complex) @ y.reshape(dim, dim))).ravel()

    if r1 == r0:
        s = np.eye(dim, dtype=complex)
        return s if r_eval is None else Trajectory(np.atleast_1d(r0), s[None])
    t_eval = None if r_eval is None else np.asarray(r_eval, dtype=float)
    sol = solve_ivp(rhs, (r0, r1), eye, method="DOP853", rtol=tol, atol=tol * 1e-2, t_eval=t_eval)
    if not sol.success:
        raise IntegrationError(sol.message)
    if r_eval is None:
        return sol.y[:, -1].reshape(dim, dim)
    mats = sol.y.T.reshape(-1, dim, dim)
    return Trajectory(sol.t, mats, info={"nfev": int(sol.nfev), "unitarity": unitarity_defect(mats)})


def evolve_modes(
    h0: np.ndarray | EigenSystem,
    modes: Sequence[FourierMode],
    r_eval,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    h_const: np.ndarray | None = None,
    min_step_rel: float = 1e-13,
    max_steps: int = 50_000_000,
) -> Trajectory:
    """``S(r, 0)`` for ``H = h0 + sum_a (C_a e^{i q_a r} + h.c.)`` at ``r_eval``.

    The system is integrated in the interaction picture of ``h0``'s
    eigenvalues, which removes the fast unperturbed phases exactly. The
    returned matrices are expressed in the original (input) basis.
    """
    basis = h0 if isinstance(h0, EigenSystem) else eig_hermitian(h0)
    n = basis.dim
    K = np.ascontiguousarray(basis.values, dtype=float)
    if modes:
        Cs = np.ascontiguousarray([basis.to_basis(m.C) for m in modes], dtype=complex)
        qs = np.array([m.q for m in modes], dtype=float)
    else:
        Cs = np.zeros((0, n, n), dtype=complex)
        qs = np.zeros(0)
    hc = np.zeros((n, n), dtype=complex) if h_const is None else basis.to_basis(h_const)
    r_eval = np.asarray(r_eval, dtype=float)
    y, info = _run(_modes_rhs, np.eye(n, dtype=complex), r_eval, rtol, atol, (K, hc, Cs, qs), min_step_rel, max_steps)
    s_u = np.exp(-1j * np.multiply.outer(r_eval, K))[..., :, None] * y
    s = basis.vectors @ s_u @ dagger(basis.vectors)
    info["unitarity"] = unitarity_defect(s)
    return Trajectory(r_eval, s, "evolution-matrix", info)


def probabilities(S, from_basis: EigenSystem | None = None, to_basis: EigenSystem | None = None) -> np.ndarray:
    """Transition probabilities ``|(V_to^H S V_from)_{yx}|^2``.

    ``S`` may carry leading sample axes. ``None`` means the identity basis.
    """
    s = np.asarray(S)
    if from_basis is not None:
        s = s @ from_basis.vectors
    if to_basis is not None:
        s = dagger(to_basis.vectors) @ s
    return np.abs(s) ** 2


# --------------------------------------------------------------------------
# self-interaction


@dataclass(frozen=True)
class SelfInteractionParams:
    """Monoenergetic two-flavour neutrino and antineutrino with self-interaction.

    ``dm2 = m1^2 - m2^2`` (eV^2), ``theta`` in radians, ``E`` in MeV, ``mu`` in erg.
    """

    mu: float = 1.682e-21
    alpha: float = 1.0
    dm2: float = 2.43e-3
    theta: float = np.radians(1.0)
    E: float = 20.0
    rho0: np.ndarray = field(default_factory=lambda: np.diag([1.0, 0.0]).astype(complex))
    rhob0: np.ndarray = field(default_factory=lambda: np.diag([1.0, 0.0]).astype(complex))

    def __post_init__(self):
        for name in ("rho0", "rhob0"):
            rho = np.asarray(getattr(self, name), dtype=complex)
            if rho.shape != (2, 2):
                raise ValueError(f"{name} must be 2x2")
            if abs(np.trace(rho) - 1.0) > 1e-12:
                raise ValueError(f"{name} must have unit trace, got {np.trace(rho)}")
            if np.max(np.abs(rho - dagger(rho))) > 1e-12:
                raise ValueError(f"{name} must be Hermitian")
            if np.min(np.linalg.eigvalsh(rho)) < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")
            object.__setattr__(self, name, rho)
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")

    def mu_cm_inv(self, units: UnitContext = UNITS) -> float:
        return float(units.erg_to_cm_inv(self.mu))

    def vacuum(self, units: UnitContext = UNITS) -> np.ndarray:
        return vacuum_hamiltonian_2f(self.dm2, self.theta, self.E, units)


@dataclass(frozen=True)
class SelfInteractionRun:
    S: Trajectory
    Sbar: Trajectory
    H_SI: Trajectory
    params: SelfInteractionParams
    period: float | None = None


def selfint_hamiltonian(params: SelfInteractionParams, S, Sbar, units: UnitContext = UNITS) -> np.ndarray:
    """``mu [S rho S^H - alpha (Sbar rhob Sbar^H)^*]`` in cm^-1 (broadcasts)."""
    mu = params.mu_cm_inv(units)
    rho = S @ params.rho0 @ dagger(S)
    rhob = Sbar @ params.rhob0 @ dagger(Sbar)
    return mu * (rho - params.alpha * np.conj(rhob))


def integrate_self_interaction(
    params: SelfInteractionParams,
    r_eval,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    units: UnitContext = UNITS,
    min_step_rel: float = 1e-13,
    max_steps: int = 200_000_000,
) -> SelfInteractionRun:
    """Jointly integrate ``S`` and ``Sbar`` and sample both at ``r_eval``."""
    hv = np.ascontiguousarray(params.vacuum(units))
    y0 = np.stack([np.eye(2, dtype=complex), np.eye(2, dtype=complex)])
    args = (hv, params.mu_cm_inv(units), float(params.alpha), params.rho0, params.rhob0)
    r_eval = np.asarray(r_eval, dtype=float)
    y, info = _run(_selfint_rhs, y0, r_eval, rtol, atol, args, min_step_rel, max_steps)
    S, Sb = y[:, 0], y[:, 1]
    h = selfint_hamiltonian(params, S, Sb, units)
    info["unitarity"] = max(unitarity_defect(S), unitarity_defect(Sb))
    return SelfInteractionRun(
        Trajectory(r_eval, S, "evolution-matrix", info),
        Trajectory(r_eval, Sb, "evolution-matrix", info),
        Trajectory(r_eval, h, "hamiltonian", info),
        params,
    )


def evolve_self_interaction(
    params: SelfInteractionParams,
    n_periods: int = 8,
    samples_per_period: int = 4096,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    pilot_range: float | None = None,
    pilot_samples: int = 1 << 15,
    units: UnitContext = UNITS,
) -> SelfInteractionRun:
    """Self-consistent evolution sampled uniformly at a fixed rate per period.

    A pilot run estimates the fundamental period of ``H_SI``; the production
    run then spans ``n_periods`` of it with ``samples_per_period`` samples
    each. ``pilot_range`` defaults to 200 vacuum oscillation lengths.
    """
    from .spectral import detect_fundamental

    if pilot_range is None:
        hv = params.vacuum(units)
        k1 = float(np.max(np.abs(np.linalg.eigvalsh(hv))))
        if k1 == 0:
            raise ValueError("vacuum splitting is zero; pass pilot_range explicitly")
        pilot_range = 200.0 / k1
    r_pilot = np.linspace(0.0, pilot_range, pilot_samples + 1)[1:]
    pilot = integrate_self_interaction(params, r_pilot, rtol, atol, units)
    q1 = detect_fundamental(pilot.H_SI)
    period = 2 * np.pi / q1
    # a little margin so the refined period still fits n_periods times
    n = n_periods * samples_per_period + samples_per_period // 16
    r = np.arange(n) * (period / samples_per_period)
    run = integrate_self_interaction(params, r, rtol, atol, units)
    return SelfInteractionRun(run.S, run.Sbar, run.H_SI, params, period)


# --------------------------------------------------------------------------
# sin^n fits


@dataclass(frozen=True)
class SinPowerFit:
    amplitude: float
    wavenumber: float
    exponent: int
    residual: float
    flagged: bool = False


def _initial_wavenumber(r, p):
    # P ~ sin^2k(Q r) repeats every pi / Q
    from .spectral import dominant_wavenumber

    return 0.5 * dominant_wavenumber(r, p)


def fit_sin_power(r, p, kmax: int = 12, q_guess: float | None = None) -> SinPowerFit:
    """Least-squares fit of ``A sin^(2k)(Q r)`` for ``k = 1 .. kmax``.

    The best ``(A, Q, 2k)`` by residual is returned. Inputs whose peak-to-peak
    amplitude is below 1e-6 are returned with ``flagged=True`` and no fit.
    """
    r = np.asarray(r, dtype=float)
    p = np.asarray(p, dtype=float)
    span = float(np.ptp(p))
    if span < 1e-6:
        return SinPowerFit(span, 0.0, 0, 0.0, True)
    if q_guess is not None:
        guesses = [q_guess]
    else:
        # spectral guess, plus the first maximum at Q r = pi/2, which is the
        # better one when the record holds only a period or two
        guesses = [_initial_wavenumber(r, p)]
        first = int(np.argmax(p >= 0.9 * p.max()))
        top = first + int(np.argmax(p[first:first + max(2, len(p) // 8)]))
        if r[top] > r[0]:
            guesses.append(0.5 * np.pi / (r[top] - r[0]))
    best = None
    for q0 in guesses:
        for k in range(1, kmax + 1):
            def resid(v, k=k):
                return v[0] * np.sin(v[1] * r) ** (2 * k) - p

            sol = least_squares(resid, [float(p.max()), q0], x_scale=[1.0, q0], xtol=1e-14, ftol=1e-14, gtol=1e-14)
            cost = float(np.sqrt(np.mean(sol.fun**2)))
            if best is None or cost < best.residual:
                best = SinPowerFit(float(sol.x[0]), abs(float(sol.x[1])), 2 * k, cost)
    return best
