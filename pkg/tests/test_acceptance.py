"""Acceptance criteria 1-7.

Each test gathers named sub-checks at the stated tolerances, records one
PASS/FAIL line (printed in the terminal summary by ``conftest.py``) and
then asserts that every sub-check holds. Nothing here is loosened to make
a check pass; the decisions ledger explains the checks that do not.
"""

import csv
import time

import numpy as np
from scipy.integrate import cumulative_simpson

from conftest import CRITERIA
from stimrwa.config import parse_config
from stimrwa.evolution import evolve_linear, evolve_modes
from stimrwa.linalg import dagger, random_hermitian, unitarity_defect
from stimrwa.neutrino import UNITS, OscillationParams, transparency_setup
from stimrwa.perturbation import FourierMode, PairMixing, delta_h_at, jacobi_anger_partial
from stimrwa.rwa import (
    DrivenSystem,
    IntegerSelection,
    RwaSolution,
    build_solution,
    scan_amplitudes,
    select_integers,
    solve_B,
    three_level_resonant_B,
    two_level_B,
)
from stimrwa.scenarios import run_transparency, run_transparency_scan
from stimrwa.selfint import flavour_probability
from stimrwa.spectral import reconstruct


class Checks:
    def __init__(self, number):
        self.number = number
        self.items = []
        self.t0 = time.perf_counter()

    def add(self, name, ok, detail=""):
        self.items.append((name, bool(ok), detail))

    def rel(self, name, got, want, tol):
        err = abs(got - want) / abs(want)
        self.add(name, err <= tol, f"{got:.5g} vs {want:.5g} ({err:.2%}, tol {tol:.0%})")

    def runtime(self, limit, extra=0.0):
        t = time.perf_counter() - self.t0 + extra
        self.add(f"runtime < {limit:g} s", t < limit, f"{t:.1f} s")

    def finish(self):
        failed = [f"{n} [{d}]" for n, ok, d in self.items if not ok]
        ok = not failed
        if ok:
            detail = f"{len(self.items)} checks"
        else:
            detail = f"{len(failed)}/{len(self.items)} checks failed: " + "; ".join(failed)
        CRITERIA[self.number] = (ok, detail)
        print(f"criterion {self.number}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail


def _erg(k):
    return float(UNITS.cm_inv_to_erg(k))


def _transparency_solution():
    st = transparency_setup(OscillationParams())
    system = DrivenSystem.build(st.basis, list(st.modes))
    return st, system, build_solution(system, select_integers(system, "nearest-resonance", 2))


# --------------------------------------------------------------------------


def test_criterion_1_level_splittings():
    c = Checks(1)
    st = transparency_setup(OscillationParams())
    k31, k32 = st.splittings
    c.rel("k3 - k1 (erg)", _erg(k31), 3.835e-22, 0.005)
    c.rel("k3 - k2 (erg)", _erg(k32), 3.715e-22, 0.005)
    c.runtime(1.0)
    c.finish()


def test_criterion_2_kappa_couplings():
    c = Checks(2)
    _, _, sol = _transparency_solution()
    for (i, j), want in {(0, 1): 6.419e-32, (0, 2): 3.888e-27, (1, 2): 1.311e-26}.items():
        k = sol.kappa[i, j]
        c.rel(f"|kappa{i + 1}{j + 1}| (erg)", abs(k) * UNITS.hbar_c_erg, want, 0.01)
        c.add(f"kappa{i + 1}{j + 1} purely imaginary", abs(k.real) <= 1e-6 * abs(k), f"arg {np.angle(k):.6f}")
    c.runtime(1.0)
    c.finish()


def test_criterion_3_induced_transparency(tmp_path):
    c = Checks(3)
    rep = run_transparency(parse_config({}, "transparency"), tmp_path)
    p_num = rep["max_P13_numeric"]
    c.add("max P13 numeric = 0.10 +- 0.02", abs(p_num - 0.10) <= 0.02, f"{p_num:.4f}")
    c.rel("RWA amplitude 1 - |k23|^2/Q^2 vs numeric", rep["amplitude_rwa_formula"], p_num, 0.05)
    c.rel("RWA Q vs fitted wavenumber", rep["Q_rabi_cm_inv"], rep["fit_Q_cm_inv"], 0.05)
    c.add("doubly resonant", rep["double_resonance"])
    c.add("unitarity <= 1e-9", rep["unitarity"] <= 1e-9, f"{rep['unitarity']:.2e}")
    single = run_transparency(parse_config({"physics": {"A2": 0.0}}, "transparency"), tmp_path / "single")
    c.add("A2 = 0: max P13 numeric >= 0.98", single["max_P13_numeric"] >= 0.98, f"{single['max_P13_numeric']:.5f}")
    c.runtime(60.0)
    c.finish()


def test_criterion_4_transparency_scan(tmp_path):
    c = Checks(4)
    cfg = parse_config({"scan": {"steps": 101}}, "transparency-scan")
    run_transparency_scan(cfg, tmp_path)
    with open(tmp_path / "transparency_scan.csv") as fh:
        rows = list(csv.DictReader(fh))
    q1 = np.array([float(r["q1_cm_inv"]) for r in rows])
    k31 = transparency_setup(OscillationParams()).splittings[0]
    centre = int(np.argmin(np.abs(q1 - k31)))
    c.add("grid contains the resonance", abs(q1[centre] - k31) <= 1e-12 * k31)
    for col in ("amp_numeric", "amp_rwa"):
        amp = np.array([float(r[col]) for r in rows])
        signs = np.sign(np.diff(amp))
        runs = [int(s) for k, s in enumerate(signs) if s != 0 and (k == 0 or s != signs[k - 1])]
        c.add(f"{col}: rise, fall, rise, fall", runs == [1, -1, 1, -1], f"runs {runs}")
        left, right = int(np.argmax(amp[:centre])), centre + int(np.argmax(amp[centre:]))
        dip = left + int(np.argmin(amp[left:right + 1]))
        c.add(f"{col}: minimum between peaks at resonance", dip == centre, f"min at {dip}, resonance {centre}")
    c.runtime(600.0)
    c.finish()


def _species_checks(c, sp, r, amp_tol, q_tol):
    p_rwa = float(flavour_probability(sp.solution, r).max())
    c.rel(f"{sp.name} RWA amplitude vs numeric", p_rwa, sp.numeric_amplitude, amp_tol)
    c.rel(f"{sp.name} RWA Q vs fitted Q'", sp.rwa_wavenumber, sp.fit.wavenumber, q_tol)


def test_criterion_5_symmetric_self_interaction(selfint_symmetric):
    c = Checks(5)
    case = selfint_symmetric
    an, run = case.analysis, case.run
    c.rel("fundamental q1 (cm^-1)", an.q1, 3.28e-7, 0.02)
    _, im_amp = an.spectrum.element_amplitudes(0, 1)
    c.rel("off-diagonal imaginary amplitude (erg)", _erg(im_amp[0]), 2.97e-22, 0.05)
    power = an.spectrum.amplitudes() ** 2
    worst = 0.0
    for k in range(2, len(power), 2):
        odd = min(power[k - 2], power[k]) if k < len(power) else power[k - 2]
        if odd > 0:
            worst = max(worst, power[k - 1] / odd)
    c.add("even-harmonic power < 1% of adjacent odd", worst < 0.01, f"max ratio {worst:.2e}")
    nu = an.neutrino
    c.add("best set {-1,0,0,0,0}", nu.selection.as_tuple() == (-1, 0, 0, 0, 0), str(nu.selection.as_tuple()))
    c.add("64 degenerate companions", len(nu.degenerate) == 64, str(len(nu.degenerate)))
    c.add("each companion contributes exactly 0", np.all(nu.kappa_contributions == 0),
          f"max |kappa| {np.abs(nu.kappa_contributions).max():.2e}")
    _species_checks(c, nu, run.S.r, 0.10, 0.05)
    c.add("fitted exponent in 10..14", 10 <= nu.fit.exponent <= 14, f"2k = {nu.fit.exponent}")
    c.runtime(300.0, case.seconds)
    c.finish()


def test_criterion_6_asymmetric_self_interaction(selfint_asymmetric):
    c = Checks(6)
    case = selfint_asymmetric
    an, run = case.analysis, case.run
    c.rel("fundamental q1 (cm^-1)", an.q1, 5.19e-6, 0.02)
    c.add("top-7 multiples {4,25,33,54,62,83,91}", set(an.multiples) == {4, 25, 33, 54, 62, 83, 91},
          str(sorted(an.multiples)))
    nu, nubar = an.neutrino, an.antineutrino
    grid = scan_amplitudes(nu.system, 2)[0]
    c.add("78125 grid points", len(grid) == 78125, str(len(grid)))
    c.add("best neutrino set {-1,0,0,0,0,0,0}", nu.selection.as_tuple() == (-1, 0, 0, 0, 0, 0, 0),
          str(nu.selection.as_tuple()))
    c.add("379 degenerate companions", len(nu.degenerate) == 379, str(len(nu.degenerate)))
    _species_checks(c, nu, run.S.r, 0.10, 0.05)
    _species_checks(c, nubar, run.S.r, 0.03, 0.05)
    for sp in (nu, nubar):
        a = sp.solution.pair_summary(0, 1)["amplitude"]
        b = sp.solution_degenerate.pair_summary(0, 1)["amplitude"]
        c.add(f"{sp.name} degenerate sum vs dominant set < 1%", abs(a - b) < 0.01 * a, f"{abs(a - b) / a:.2e}")
    c.add("fitted neutrino exponent in 14..22", 14 <= nu.fit.exponent <= 22, f"2k = {nu.fit.exponent}")
    c.runtime(900.0, case.seconds)
    c.finish()


def test_criterion_7_property_suite(selfint_symmetric):
    c = Checks(7)
    rng = np.random.default_rng(7)

    # unitarity of every evolution output
    worst = max(selfint_symmetric.run.S.info["unitarity"], selfint_symmetric.run.Sbar.info["unitarity"])
    for _ in range(3):
        h0 = random_hermitian(3, rng)
        modes = [FourierMode(rng.uniform(0.5, 2), 0.3 * (rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))))]
        r = np.linspace(0, 10, 21)
        worst = max(worst, evolve_modes(h0, modes, r).info["unitarity"])
        lin = evolve_linear(lambda t, h0=h0, modes=modes: h0 + delta_h_at(modes, t), 0, 10, r_eval=r)
        worst = max(worst, lin.info["unitarity"])
        sol = build_solution(DrivenSystem.build(h0, modes), IntegerSelection(np.ones((1, 2), dtype=int)))
        worst = max(worst, unitarity_defect(sol.B(r)))
    c.add("unitarity <= 1e-9", worst <= 1e-9, f"{worst:.2e}")

    # truncated Jacobi-Anger sums
    err = 0.0
    t = np.linspace(0, 30, 301)
    for z in np.linspace(0, 1, 11):
        for psi in (-2.0, 0.0, 1.3):
            mix = PairMixing(0.4, 0.0, float(z), psi)
            exact = np.exp(1j * (0.4 - z * np.cos(0.9 * t + psi)))
            err = max(err, np.max(np.abs(jacobi_anger_partial(mix, 0.9, t, 12) - exact)))
    c.add("Jacobi-Anger M=12, z<=1 within 1e-10", err <= 1e-10, f"{err:.2e}")

    # closed forms against the matrix exponential
    err = 0.0
    for _ in range(5):
        k, det = complex(*rng.normal(size=2)), float(rng.normal())
        m = np.array([[0, -1j * k], [1j * np.conj(k), 0]])
        sol = RwaSolution(IntegerSelection.two_level([0]), np.array([[0, k], [0, 0]]),
                          np.array([[0, det], [-det, 0]]), np.array([det, 0.0]), m)
        err = max(err, np.max(np.abs(two_level_B(k, det, t) - solve_B(sol, t))))
        k13, k23 = complex(*rng.normal(size=2)), complex(*rng.normal(size=2))
        kap = np.zeros((3, 3), dtype=complex)
        kap[0, 2], kap[1, 2] = k13, k23
        mm = -1j * kap
        sol3 = RwaSolution(IntegerSelection(np.zeros((1, 2), dtype=int)), kap, np.zeros((3, 3)), np.zeros(3),
                           mm + dagger(mm))
        err = max(err, np.max(np.abs(three_level_resonant_B(k13, k23, np.zeros(3), t) - solve_B(sol3, t))))
    c.add("closed-form vs expm B within 1e-10", err <= 1e-10, f"{err:.2e}")

    # factorisation, doubly stochastic probabilities, anchor shifts
    fac = stoch = shift = 0.0
    for _ in range(5):
        h0 = random_hermitian(3, rng)
        modes = [FourierMode(rng.uniform(0.5, 2), 0.3 * (rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))))
                 for _ in range(2)]
        system = DrivenSystem.build(h0, modes)
        sel = select_integers(system, "nearest-resonance", 2)
        sol = build_solution(system, sel)
        ups = sol.upsilon(t)
        fac = max(fac, np.max(np.abs(sol.hamiltonian_B(t) - ups[..., :, None] * sol.M * np.conj(ups)[..., None, :])))
        p = sol.probabilities(t)
        stoch = max(stoch, np.max(np.abs(p.sum(-1) - 1)), np.max(np.abs(p.sum(-2) - 1)))
        p_shift = build_solution(system, sel, shift=rng.integers(-3, 4, size=2)).probabilities(t)
        shift = max(shift, np.max(np.abs(p - p_shift)))
    c.add("Upsilon M Upsilon^H factorisation within 1e-10", fac <= 1e-10, f"{fac:.2e}")
    c.add("doubly stochastic within 1e-9", stoch <= 1e-9, f"{stoch:.2e}")
    c.add("anchor-shift invariance of |B_ij|^2", shift <= 1e-10, f"{shift:.2e}")

    # oracle on the reconstructed potential stays within the residual bound
    run, spec = selfint_symmetric.run, selfint_symmetric.analysis.spectrum
    ks = [int(k) for k in spec.ks[:10]]
    n = len(run.S.r) // 8  # one period
    r = run.S.r[:n]
    h_rec = reconstruct(spec, r, ks)
    s_rec = evolve_modes(run.params.vacuum() + spec.mean, spec.subset(ks).modes(), r, rtol=1e-12, atol=1e-14)
    gap = np.linalg.norm(run.H_SI.payload[:n] - h_rec, ord=2, axis=(1, 2))
    # Simpson: the trapezoid rule undershoots the convex early part of the integral
    bound = cumulative_simpson(gap, x=r, initial=0.0)
    diff = np.linalg.norm(run.S.payload[:n] - s_rec.payload, ord=2, axis=(1, 2))
    slack = np.max(diff - bound)
    c.add("|S_oracle - S_reconstructed| <= integral of residual", slack <= 1e-12,
          f"max diff {diff.max():.2e}, bound {bound[-1]:.2e}")
    c.runtime(120.0)
    c.finish()
