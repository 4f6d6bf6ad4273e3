"""Harmonic analysis of sampled, periodic Hamiltonian trajectories.

The recorded self-interaction Hamiltonians are line spectra at exact
multiples of a fundamental wavenumber, so coefficients are obtained by
direct projection over an integer number of periods instead of a
windowed FFT; leakage is the dominant error otherwise.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .evolution import Trajectory, fmt
from .linalg import dagger
from .perturbation import FourierMode


class NoPeriodicityError(ValueError):
    pass


class WindowingWarning(UserWarning):
    pass


def _channels(traj: Trajectory) -> np.ndarray:
    p = np.asarray(traj.payload)
    flat = p.reshape(len(p), -1)
    x = np.concatenate([flat.real, flat.imag], axis=1)
    return x - x.mean(axis=0)


def _parabolic(y_m, y_0, y_p) -> float:
    den = y_m - 2 * y_0 + y_p
    return 0.0 if den == 0 else 0.5 * (y_m - y_p) / den


def _peak_bin(power: np.ndarray) -> float:
    """Fractional index of the strongest non-DC bin, refined on log power."""
    b = int(np.argmax(power[1:]) + 1)
    if 1 <= b < len(power) - 1 and np.all(power[b - 1 : b + 2] > 0):
        lp = np.log(power[b - 1 : b + 2])
        return b + _parabolic(*lp)
    return float(b)


def dominant_wavenumber(r, signal) -> float:
    """Angular wavenumber of the strongest spectral line of a real signal."""
    r = np.asarray(r, dtype=float)
    x = np.asarray(signal, dtype=float)
    x = x - x.mean()
    dr = float(np.mean(np.diff(r)))
    power = np.abs(np.fft.rfft(x * np.hanning(len(x)))) ** 2
    return 2 * np.pi * _peak_bin(power) / (len(x) * dr)


def refine_period(traj: Trajectory, period: float, rel: float = 1e-3) -> float:
    """Period minimising the recurrence mismatch ``mean |H(r + T) - H(r)|^2``.

    ``H(r + T)`` comes from a cubic spline through the samples, and the
    stationary point is found as a root of the derivative, which is far
    better conditioned than minimising the mismatch itself. The search is
    confined to ``period * (1 +- rel)``; when no stationary point lies in
    that bracket the input is returned unchanged.
    """
    from scipy.interpolate import CubicSpline
    from scipy.optimize import brentq

    r = traj.r
    x = _channels(traj)
    lo, hi = period * (1 - rel), period * (1 + rel)
    mask = r + hi <= r[-1]
    if np.count_nonzero(mask) < 16:
        return period
    spline = CubicSpline(r, x, axis=0)
    deriv = spline.derivative()
    base, xb = r[mask], x[mask]

    def slope(t):
        return float(np.sum((spline(base + t) - xb) * deriv(base + t)))

    a, b = slope(lo), slope(hi)
    if not (a < 0 < b):
        return period
    return brentq(slope, lo, hi, xtol=1e-15 * period, rtol=4 * np.finfo(float).eps)


def detect_fundamental(traj: Trajectory, min_correlation: float = 0.5, recurrence_tol: float = 2e-3,
                       refine: bool = True) -> float:
    """Fundamental wavenumber (cm^-1) of a uniformly sampled periodic trajectory.

    The period is located at the first strong autocorrelation maximum and
    then refined through the strongest harmonic of the Hann-windowed
    spectrum: ``q1 = q_peak / round(q_peak / q_autocorr)``. With ``refine``
    the result is polished by :func:`refine_period`.

    Raises
    ------
    NoPeriodicityError
        If the spectral peak is below three times the noise floor or no
        autocorrelation maximum reaches ``min_correlation``.
    """
    dr = traj.spacing
    x = _channels(traj)
    n = len(x)
    if n < 16:
        raise NoPeriodicityError("too few samples")

    win = np.hanning(n)[:, None]
    power = np.sum(np.abs(np.fft.rfft(x * win, axis=0)) ** 2, axis=1)
    noise = float(np.median(power[1:]))
    peak = float(np.max(power[1:]))
    if not peak > 3.0 * noise or peak == 0.0:
        raise NoPeriodicityError(f"spectral peak {peak:.3e} below 3x noise floor {noise:.3e}")

    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    fx = np.fft.rfft(x, nfft, axis=0)
    ac = np.fft.irfft(np.sum(np.abs(fx) ** 2, axis=1), nfft)[:n]
    ac = ac / ac[0] * n / (n - np.arange(n))  # unbiased
    limit = n // 3  # at least three repeats inside the record
    neg = np.nonzero(ac[:limit] < 0)[0]
    start = int(neg[0]) if len(neg) else 1
    seg = ac[start:limit]
    if len(seg) < 3:
        raise NoPeriodicityError("record shorter than three periods")
    loc = np.nonzero((seg[1:-1] >= seg[:-2]) & (seg[1:-1] >= seg[2:]))[0] + 1
    if len(loc) == 0:
        raise NoPeriodicityError("no autocorrelation maximum")
    top = float(np.max(seg[loc]))
    if top < min_correlation:
        raise NoPeriodicityError(f"autocorrelation maximum {top:.3f} < {min_correlation}")
    # shortest lag that recurs essentially as well as the best one; this
    # avoids both multiples of the period and near-recurrences of
    # quasi-periodic signals
    pick = int(loc[np.nonzero(seg[loc] >= top - recurrence_tol)[0][0]])
    lag = start + pick + _parabolic(seg[pick - 1], seg[pick], seg[pick + 1])
    q_ac = 2 * np.pi / (lag * dr)

    q_peak = 2 * np.pi * _peak_bin(power) / (n * dr)
    mult = max(1, int(round(q_peak / q_ac)))
    q1 = q_peak / mult
    if refine:
        q1 = 2 * np.pi / refine_period(traj, 2 * np.pi / q1)
    return q1


@dataclass(frozen=True)
class ModeSpectrum:
    """``H(r) ~ mean + sum_k (C_k e^{i k q1 r} + h.c.)``, ``k = 1 .. kmax``."""

    q1: float
    ks: np.ndarray
    coeffs: np.ndarray
    mean: np.ndarray
    n_periods: int
    window: tuple[int, int]
    window_error: float = 0.0
    flagged: bool = False

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def coefficient(self, k: int) -> np.ndarray:
        if k == 0:
            return self.mean
        idx = np.nonzero(self.ks == k)[0]
        if len(idx) == 0:
            raise KeyError(f"harmonic {k} not extracted")
        return self.coeffs[idx[0]]

    def amplitudes(self) -> np.ndarray:
        """Ranking amplitude per harmonic: ``max_ij |C_k,ij|``."""
        return np.max(np.abs(self.coeffs), axis=(1, 2))

    def element_amplitudes(self, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Cosine amplitudes of ``Re H_ij`` and ``Im H_ij`` at every harmonic."""
        # H_ji = conj(H_ij), so the e^{ikqr} part of Re H_ij is (C_ij + C_ji) / 2
        cij = self.coeffs[:, i, j]
        cji = self.coeffs[:, j, i]
        return np.abs(cij + cji), np.abs(cij - cji)

    def normalized(self) -> np.ndarray:
        """Element-wise ``|C_k,ij|`` divided by that element's largest mode."""
        a = np.abs(self.coeffs)
        top = a.max(axis=0)
        return np.divide(a, top, out=np.zeros_like(a), where=top > 0)

    def subset(self, ks) -> "ModeSpectrum":
        """Keep only the harmonics ``ks``, in the order given."""
        ks = np.asarray([int(k) for k in ks], dtype=np.int64)
        idx = [int(np.nonzero(self.ks == k)[0][0]) for k in ks]
        return ModeSpectrum(self.q1, ks, self.coeffs[idx], self.mean, self.n_periods, self.window,
                            self.window_error, self.flagged)

    def modes(self) -> list[FourierMode]:
        return [FourierMode(k * self.q1, c) for k, c in zip(self.ks, self.coeffs)]

    def to_csv(self, path, scale: float = 1.0):
        n = self.dim
        cols = [(i, j) for i in range(n) for j in range(n)]
        header = ["k", "q_cm_inv"] + [f"re_C_{i + 1}{j + 1}" for i, j in cols] + [f"im_C_{i + 1}{j + 1}" for i, j in cols]
        rows = [(0, self.mean)] + list(zip(self.ks, self.coeffs))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for k, c in rows:
                c = c * scale
                w.writerow([str(int(k)), fmt(k * self.q1)] + [fmt(c[i, j].real) for i, j in cols]
                           + [fmt(c[i, j].imag) for i, j in cols])


def _window(traj: Trajectory, q1: float, n_periods: int | None):
    """``(n_periods, n_full, frac)`` with window length ``(n_full + frac) * dr``."""
    dr = traj.spacing
    period = 2 * np.pi / q1
    # the last partial interval needs one sample beyond the window end
    avail = int(np.floor(((len(traj) - 1) * dr) / period * (1 - 1e-12)))
    if n_periods is None:
        n_periods = avail
    if n_periods < 1 or n_periods > avail:
        raise ValueError(f"need 1..{avail} full periods, got {n_periods}")
    steps = n_periods * period / dr
    n_full = int(np.floor(steps))
    frac = steps - n_full
    if frac > 1 - 1e-9:  # the window already ends on a sample
        n_full, frac = n_full + 1, 0.0
    elif frac < 1e-9:
        frac = 0.0
    if n_full + 1 >= len(traj):
        n_full, frac = len(traj) - 2, 1.0
    return n_periods, n_full, frac


def decompose(traj: Trajectory, q1: float, kmax: int, n_periods: int | None = None,
              min_samples_per_period: int = 64, clean_rtol: float = 1e-9) -> ModeSpectrum:
    """Project the samples onto ``exp(i k q1 r)`` for ``k = 0 .. kmax``.

    The window starts at the first sample and spans exactly the largest
    integer number of periods available (or ``n_periods``). The projection
    is a trapezoid sum; the window end generally falls between samples, and
    the last partial interval is interpolated linearly. ``window_error`` is
    the share of the window covered by that interpolated piece. The error
    of the interpolated end falls off as ``dr^3``; fewer than
    ``min_samples_per_period`` samples per period trigger
    :class:`WindowingWarning` and set ``flagged``.

    Real and imaginary parts smaller than ``clean_rtol * max|H|`` are set to
    exactly zero; they are projection round-off, and keeping them would
    break exact symmetries (e.g. purely off-diagonal modes) downstream.
    """
    if q1 <= 0:
        raise ValueError("q1 must be positive")
    if kmax < 1:
        raise ValueError("kmax must be >= 1")
    dr = traj.spacing
    if kmax * q1 >= np.pi / dr:
        raise ValueError(f"harmonic {kmax} is above the Nyquist wavenumber {np.pi / dr:.3e}")
    n_periods, n_full, frac = _window(traj, q1, n_periods)
    length = (n_full + frac) * dr
    err = frac * dr / length
    spp = 2 * np.pi / q1 / dr
    flagged = spp < min_samples_per_period
    if flagged:
        warnings.warn(f"only {spp:.1f} samples per period", WindowingWarning)
    h = np.asarray(traj.payload[: n_full + 2], dtype=complex)
    x = np.arange(n_full + 2) * dr
    ks = np.arange(0, kmax + 1)
    w = np.ones(n_full + 2)
    w[0] = w[n_full] = 0.5
    w[n_full + 1] = 0.0
    # partial interval [x_nf, x_nf + frac dr]: trapezoid on the linear interpolant
    w[n_full] += 0.5 * frac * (2 - frac)
    w[n_full + 1] += 0.5 * frac * frac
    basis = np.exp(-1j * q1 * np.multiply.outer(x, ks)) * (w * dr / length)[:, None]
    c = np.einsum("nk,nij->kij", basis, h)
    c *= np.exp(-1j * ks * q1 * traj.r[0])[:, None, None]
    if clean_rtol > 0:
        floor = clean_rtol * float(np.max(np.abs(h)))
        c = np.where(np.abs(c.real) < floor, 0.0, c.real) + 1j * np.where(np.abs(c.imag) < floor, 0.0, c.imag)
    mean = 0.5 * (c[0] + dagger(c[0]))
    return ModeSpectrum(q1, ks[1:], c[1:], mean, n_periods, (0, n_full + 2), err, flagged)


def top_modes(spec: ModeSpectrum, k: int) -> list[FourierMode]:
    """The ``k`` strongest harmonics as modes, strongest first."""
    return spec.subset(top_multiples(spec, k)).modes()


def top_multiples(spec: ModeSpectrum, k: int) -> list[int]:
    """Multiples of the ``k`` strongest harmonics, strongest first.

    Strength is ``max_ij |C_k,ij|``; equal strengths keep the lower multiple first.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(spec.ks):
        raise ValueError(f"only {len(spec.ks)} harmonics extracted, asked for {k}")
    amp = spec.amplitudes()
    # stable ranking: larger amplitude first, lower multiple on ties
    order = np.lexsort((spec.ks, -amp))[:k]
    return [int(m) for m in spec.ks[order]]


def reconstruct(spec: ModeSpectrum, r, ks=None) -> np.ndarray:
    """Evaluate the (optionally truncated) harmonic series at ``r``."""
    s = spec if ks is None else spec.subset(ks)
    r = np.asarray(r, dtype=float)
    out = np.broadcast_to(s.mean, r.shape + s.mean.shape).astype(complex)
    for k, c in zip(s.ks, s.coeffs):
        e = np.exp(1j * k * s.q1 * r)[..., None, None]
        out = out + c * e + dagger(c) * np.conj(e)
    return out


def reconstruction_error(spec: ModeSpectrum, traj: Trajectory, ks=None) -> float:
    """RMS of ``H - H_rec`` over the window, relative to the RMS of ``H - mean``."""
    a, b = spec.window
    h = np.asarray(traj.payload[a:b])
    rec = reconstruct(spec, traj.r[a:b], ks)
    num = np.sum(np.abs(h - rec) ** 2)
    den = np.sum(np.abs(h - spec.mean) ** 2)
    return float(np.sqrt(num / den)) if den > 0 else float(np.sqrt(num))


def residual_table(spec: ModeSpectrum, traj: Trajectory, max_modes: int) -> list[tuple[int, float]]:
    """Reconstruction error when keeping the top 1 .. ``max_modes`` harmonics."""
    return [(m, reconstruction_error(spec, traj, top_multiples(spec, m))) for m in range(1, max_modes + 1)]


def read_spectrum_csv(path) -> ModeSpectrum:
    """Inverse of :meth:`ModeSpectrum.to_csv` (written with ``scale=1``)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty spectrum file")
    header, body = rows[0], rows[1:]
    n_el = (len(header) - 2) // 2
    n = int(round(np.sqrt(n_el)))
    if header[:2] != ["k", "q_cm_inv"] or n * n != n_el or len(header) != 2 + 2 * n_el:
        raise ValueError(f"{path}: unexpected spectrum header")
    ks, qs, mats = [], [], []
    for row in body:
        vals = np.array([float(v) for v in row[2:]])
        ks.append(int(row[0]))
        qs.append(float(row[1]))
        mats.append((vals[:n_el] + 1j * vals[n_el:]).reshape(n, n))
    ks = np.array(ks)
    if len(ks) < 2 or ks[0] != 0 or np.any(np.diff(ks) <= 0):
        raise ValueError(f"{path}: harmonics must start at k=0 and increase")
    q1 = qs[1] / ks[1]
    return ModeSpectrum(q1, ks[1:], np.array(mats[1:]), mats[0], 0, (0, 0))
