"""End-to-end scenario runners behind the command line.

Each runner takes a validated config, writes CSV files plus a
``report.json`` into ``out_dir`` and returns the report dictionary.
Columns that need the numerical oracle are filled with ``nan`` when the
oracle is switched off.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import replace
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .evolution import evolve_modes, evolve_self_interaction, fit_sin_power, fmt, probabilities
from .linalg import eig_hermitian
from .neutrino import UNITS, transparency_setup
from .perturbation import FourierMode
from .rwa import (
    DrivenSystem,
    IntegerSelection,
    build_solution,
    enumerate_degenerate,
    kappa_pair,
    select_integers,
    three_level_resonant_B,
    two_level_closed_form,
)
from .selfint import SpeciesResult, analyze, antineutrino_modes, flavour_basis, flavour_probability
from .spectral import read_spectrum_csv, top_multiples


# --------------------------------------------------------------------------
# output helpers


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_csv(path, header, columns):
    cols = [np.asarray(c, dtype=float).ravel() for c in columns]
    n = len(cols[0])
    if any(len(c) != n for c in cols):
        raise ValueError("CSV columns differ in length")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([fmt(v) for v in row])


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (complex, np.complexfloating)):
        return {"re": float(v.real), "im": float(v.imag)}
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if np.isfinite(v) else None
    return v


def write_report(path, report: dict):
    text = json.dumps(_jsonable(report), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")


def _erg(k):
    return float(UNITS.cm_inv_to_erg(k))


def _pair_report(solution, i, j, to_erg: bool = False) -> dict:
    s = solution.pair_summary(i, j)
    out = {
        "pair": [i + 1, j + 1],
        "kappa_cm_inv": s["kappa"],
        "detuning_cm_inv": s["detuning"],
        "Q_cm_inv": s["Q"],
        "amplitude": s["amplitude"],
        "integers": solution.selection.pair(i, j).tolist(),
    }
    if to_erg:
        out["kappa_erg"] = s["kappa"] * UNITS.hbar_c_erg
        out["abs_kappa_erg"] = abs(s["kappa"]) * UNITS.hbar_c_erg
    return out


def _nan(n):
    return np.full(n, np.nan)


# --------------------------------------------------------------------------
# transparency


def _transparency_model(params):
    st = transparency_setup(params)
    system = DrivenSystem.build(st.basis, list(st.modes))
    return st, system


def transparency_rabi(sol) -> dict:
    """Rabi wavenumber and ``P13`` amplitude of a transparency RWA solution.

    The 2-3 pair counts as driven on resonance when its detuning is below
    its coupling; then ``Q = hypot(|kappa13|, |kappa23|)`` and the amplitude
    is ``1 - |kappa23|^2 / Q^2``. Otherwise the 1-3 pair is treated as an
    isolated two-level system.
    """
    k13, k23 = sol.kappa[0, 2], sol.kappa[1, 2]
    double = abs(k23) > 0 and abs(sol.detuning[1, 2]) <= abs(k23)
    if double:
        q = float(np.hypot(abs(k13), abs(k23)))
        amp = 1 - abs(k23) ** 2 / q**2
    else:
        s = sol.pair_summary(0, 2)
        q, amp = s["Q"], s["amplitude"]
    return {"double_resonance": bool(double), "Q": q, "amplitude": float(amp)}


def _closed_form_p13(sol, rabi, r):
    if rabi["Q"] == 0:
        return np.zeros_like(r)
    if rabi["double_resonance"]:
        return np.abs(three_level_resonant_B(sol.kappa[0, 2], sol.kappa[1, 2], sol.Lambda, r)[:, 2, 0]) ** 2
    return two_level_closed_form(sol.kappa[0, 2], sol.detuning[0, 2], r)[0]


def run_transparency(cfg, out_dir) -> dict:
    out = _out_dir(out_dir)
    num = cfg.numerics
    st, system = _transparency_model(cfg.physics.params())
    sel = select_integers(system, "nearest-resonance", num.radius)
    sol = build_solution(system, sel)
    rabi = transparency_rabi(sol)
    if num.r_max_cm is not None:
        r_max = num.r_max_cm
    elif rabi["Q"] > 0:
        r_max = num.rabi_half_periods * np.pi / rabi["Q"]
    else:
        r_max = 1.0 / max(st.splittings)
    r = np.linspace(0.0, r_max, num.samples)

    p_rwa = sol.probabilities(r)[:, 2, 0]
    p_closed = _closed_form_p13(sol, rabi, r)
    report = {
        "scenario": "transparency",
        "q1_cm_inv": st.q1,
        "q2_cm_inv": st.q2,
        "splittings_cm_inv": list(st.splittings),
        "splittings_erg": [_erg(k) for k in st.splittings],
        "pairs": [_pair_report(sol, i, j, True) for i, j in ((0, 1), (0, 2), (1, 2))],
        "double_resonance": rabi["double_resonance"],
        "Q_rabi_cm_inv": rabi["Q"],
        "amplitude_rwa_formula": rabi["amplitude"],
        "max_P13_rwa": float(p_rwa.max()),
        "r_max_cm": float(r_max),
    }
    if cfg.compare_oracle:
        traj = evolve_modes(st.basis, list(st.modes), r, num.rtol, num.atol)
        p_num = probabilities(traj.payload, st.basis, st.basis)[:, 2, 0]
        fit = fit_sin_power(r, p_num, kmax=1)
        report.update(
            max_P13_numeric=float(p_num.max()),
            fit_Q_cm_inv=fit.wavenumber,
            fit_amplitude=fit.amplitude,
            unitarity=traj.info["unitarity"],
            steps=traj.info.get("accepted"),
        )
    else:
        p_num = _nan(len(r))
    write_csv(out / "transparency.csv", ["r_cm", "P13_numeric", "P13_rwa", "P13_closed_form"],
              [r, p_num, p_rwa, p_closed])
    write_report(out / "report.json", report)
    return report


def _scan_point(task):
    params, r_rwa, r_num, radius, oracle, rtol, atol = task
    st, system = _transparency_model(params)
    sel = select_integers(system, "nearest-resonance", radius)
    sol = build_solution(system, sel)
    amp_rwa = float(sol.probabilities(r_rwa)[:, 2, 0].max())
    if not oracle:
        return amp_rwa, np.nan
    traj = evolve_modes(st.basis, list(st.modes), r_num, rtol, atol)
    amp_num = float(probabilities(traj.payload, st.basis, st.basis)[:, 2, 0].max())
    return amp_rwa, amp_num


def scan_grid(cfg) -> np.ndarray:
    sc = cfg.scan
    st = transparency_setup(cfg.physics.params())
    k31 = st.splittings[0]
    lo = sc.q1_min_cm_inv if sc.q1_min_cm_inv is not None else k31 * (1 - sc.span_rel)
    hi = sc.q1_max_cm_inv if sc.q1_max_cm_inv is not None else k31 * (1 + sc.span_rel)
    if sc.steps == 1:
        if sc.q1_min_cm_inv is None and sc.q1_max_cm_inv is None:
            return np.array([k31])
        return np.array([lo])
    if not hi > lo:
        raise ValueError("q1 scan range is empty")
    return np.linspace(lo, hi, sc.steps)


def run_transparency_scan(cfg, out_dir) -> dict:
    """Amplitude of ``P13`` against ``q1`` with ``q2`` held on the 2-3 resonance.

    Every point uses the same path length, so the amplitude is the maximum
    of ``P13`` over a fixed window several Rabi periods long.
    """
    out = _out_dir(out_dir)
    num = cfg.numerics
    base = transparency_setup(cfg.physics.params())
    q2 = base.q2
    q1s = scan_grid(cfg)
    if num.r_max_cm is not None:
        r_max = num.r_max_cm
    else:
        _, system = _transparency_model(cfg.physics.params())
        sol = build_solution(system, select_integers(system, "nearest-resonance", num.radius))
        q_res = transparency_rabi(sol)["Q"]
        if q_res == 0:
            raise ValueError("no coupling on resonance; set numerics.r_max_cm")
        r_max = num.rabi_half_periods * np.pi / q_res
    r_rwa = np.linspace(0.0, r_max, num.rwa_samples)
    r_num = np.linspace(0.0, r_max, num.oracle_samples)
    tasks = [
        (replace(cfg.physics.params(), q1=float(q), q2=q2), r_rwa, r_num, num.radius, cfg.compare_oracle, num.rtol, num.atol)
        for q in q1s
    ]
    if num.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(num.workers, os.cpu_count() or 1)) as ex:
            results = list(ex.map(_scan_point, tasks))
    else:
        results = [_scan_point(t) for t in tasks]
    amp_rwa = np.array([a for a, _ in results])
    amp_num = np.array([b for _, b in results])
    write_csv(out / "transparency_scan.csv", ["q1_cm_inv", "amp_numeric", "amp_rwa"], [q1s, amp_num, amp_rwa])
    report = {
        "scenario": "transparency-scan",
        "k31_cm_inv": base.splittings[0],
        "q2_cm_inv": q2,
        "r_max_cm": float(r_max),
        "points": len(q1s),
    }
    write_report(out / "report.json", report)
    return report


# --------------------------------------------------------------------------
# self-interaction


def _species_report(sp: SpeciesResult) -> dict:
    s = sp.solution.pair_summary(0, 1)
    rep = {
        "integers": list(sp.selection.as_tuple()),
        "kappa_cm_inv": s["kappa"],
        "abs_kappa_erg": abs(s["kappa"]) * UNITS.hbar_c_erg,
        "detuning_cm_inv": s["detuning"],
        "Q_cm_inv": s["Q"],
        "amplitude_rwa": s["amplitude"],
        "degenerate_companions": len(sp.degenerate),
        "max_abs_companion_kappa_cm_inv": float(np.abs(sp.kappa_contributions).max()) if len(sp.degenerate) else 0.0,
    }
    if sp.numeric_amplitude is not None:
        rep["amplitude_numeric"] = sp.numeric_amplitude
    if sp.fit is not None:
        rep.update(fit_amplitude=sp.fit.amplitude, fit_Q_cm_inv=sp.fit.wavenumber, fit_exponent=sp.fit.exponent)
    if sp.solution_degenerate is not None:
        d = sp.solution_degenerate.pair_summary(0, 1)
        rep.update(amplitude_rwa_degenerate=d["amplitude"], Q_degenerate_cm_inv=d["Q"], kappa_degenerate_cm_inv=d["kappa"])
    return rep


def _p12_csv(path, r, numeric, sp: SpeciesResult):
    p_rwa = flavour_probability(sp.solution, r)
    p_deg = flavour_probability(sp.solution_degenerate, r) if sp.solution_degenerate is not None else _nan(len(r))
    write_csv(path, ["r_cm", "P12_numeric", "P12_rwa", "P12_rwa_degenerate"], [r, numeric, p_rwa, p_deg])


def run_selfint(cfg, out_dir) -> dict:
    out = _out_dir(out_dir)
    num = cfg.numerics
    params = cfg.physics.params()
    run = evolve_self_interaction(
        params, num.n_periods, num.samples_per_period, num.rtol, num.atol, num.pilot_range_cm, num.pilot_samples
    )
    an = analyze(run, num.modes, num.radius, num.degenerate, num.kmax, num.window_periods, num.max_residual_modes)
    r = run.S.r
    run.H_SI.to_csv(out / "hsi_trajectory.csv")
    an.spectrum.to_csv(out / "spectrum.csv")
    write_csv(out / "residuals.csv", ["modes", "relative_residual"],
              [[m for m, _ in an.residuals], [e for _, e in an.residuals]])
    _p12_csv(out / "p12_neutrino.csv", r, np.abs(run.S.payload[:, 1, 0]) ** 2, an.neutrino)
    _p12_csv(out / "p12_antineutrino.csv", r, np.abs(run.Sbar.payload[:, 1, 0]) ** 2, an.antineutrino)
    amps = an.spectrum.amplitudes()
    off_re, off_im = an.spectrum.element_amplitudes(0, 1)
    report = {
        "scenario": "selfint",
        "alpha": params.alpha,
        "q1_cm_inv": an.q1,
        "period_cm": 2 * np.pi / an.q1,
        "multiples": an.multiples,
        "grid_points": (2 * num.radius + 1) ** num.modes,
        "mode_amplitude_cm_inv": {int(k): float(a) for k, a in zip(an.spectrum.ks, amps)},
        "offdiag_real_amplitude_erg": {int(k): _erg(a) for k, a in zip(an.spectrum.ks, off_re)},
        "offdiag_imag_amplitude_erg": {int(k): _erg(a) for k, a in zip(an.spectrum.ks, off_im)},
        "mean_cm_inv": an.spectrum.mean,
        "window_error": an.spectrum.window_error,
        "unitarity": run.S.info["unitarity"],
        "residuals": {int(m): float(e) for m, e in an.residuals},
        "neutrino": _species_report(an.neutrino),
        "antineutrino": _species_report(an.antineutrino),
    }
    write_report(out / "report.json", report)
    return report


def run_selfint_rwa(cfg, out_dir) -> dict:
    """RWA (and optionally the linear oracle) from a stored mode spectrum."""
    out = _out_dir(out_dir)
    num = cfg.numerics
    params = cfg.physics.params()
    spec = read_spectrum_csv(cfg.spectrum_csv)
    if num.modes > len(spec.ks):
        raise ValueError(f"spectrum has {len(spec.ks)} harmonics, {num.modes} requested")
    multiples = top_multiples(spec, num.modes)
    modes = spec.subset(multiples).modes()
    hv = params.vacuum()
    r = np.linspace(0.0, num.r_max_cm, num.samples)
    report = {"scenario": "selfint-rwa", "q1_cm_inv": spec.q1, "multiples": multiples}
    species = (
        ("neutrino", hv + spec.mean, modes),
        ("antineutrino", hv - np.conj(spec.mean), antineutrino_modes(modes)),
    )
    for name, h0, m in species:
        basis = flavour_basis(h0, params.theta)
        system = DrivenSystem.build(basis, m)
        sel = select_integers(system, "exhaustive-scan", num.radius)
        sol = build_solution(system, sel)
        sets = enumerate_degenerate(sel, system.K, system.q, num.radius, harmonics=multiples)
        contrib = np.array([kappa_pair(system, s.as_tuple(), 0, 1) for s in sets[1:]], dtype=complex)
        sol_deg = build_solution(system, sel, degenerate={0: [s.as_tuple() for s in sets]}) if num.degenerate else None
        if cfg.compare_oracle:
            traj = evolve_modes(h0, m, r, num.rtol, num.atol)
            p_num = np.abs(traj.payload[:, 1, 0]) ** 2
            fit = fit_sin_power(r, p_num)
            amp = float(p_num.max())
        else:
            p_num, fit, amp = _nan(len(r)), None, None
        sp = SpeciesResult(name, system, sel, sol, sets[1:], sol_deg, contrib, amp, fit)
        _p12_csv(out / f"p12_{name}.csv", r, p_num, sp)
        report[name] = _species_report(sp)
    write_report(out / "report.json", report)
    return report


# --------------------------------------------------------------------------
# generic systems


def run_rwa_generic(cfg, out_dir) -> dict:
    out = _out_dir(out_dir)
    h0 = cfg.system.h0()
    modes = [_mode(m) for m in cfg.system.modes]
    basis = eig_hermitian(h0)
    system = DrivenSystem.build(basis, modes)
    n = system.n_states
    rw = cfg.rwa
    if rw.strategy == "manual":
        if rw.integers is None:
            raise ValueError("manual strategy needs rwa.integers")
        arr = np.asarray(rw.integers, dtype=np.int64)
        if arr.shape != (len(modes), n - 1):
            raise ValueError(f"rwa.integers must have shape [{len(modes)}][{n - 1}], got {list(arr.shape)}")
        sel = IntegerSelection(arr)
    elif not modes:
        raise ValueError("rwa-generic needs at least one mode")
    else:
        sel = select_integers(system, rw.strategy, rw.radius)
    degenerate = None
    n_companions = {}
    if rw.degenerate:
        degenerate = {}
        for l in range(n - 1):
            sets = enumerate_degenerate(sel, system.K, system.q, rw.radius, pair=l)
            degenerate[l] = [s.as_tuple(l) for s in sets]
            n_companions[l] = len(sets) - 1
    sol = build_solution(system, sel, degenerate=degenerate)
    num = cfg.numerics
    r = np.linspace(0.0, num.r_max_cm, num.samples)
    b = sol.B(r)
    cols = [(i, j) for i in range(n) for j in range(n)]
    write_csv(out / "b_samples.csv",
              ["r_cm"] + [f"re_B{i + 1}{j + 1}" for i, j in cols] + [f"im_B{i + 1}{j + 1}" for i, j in cols],
              [r] + [b[:, i, j].real for i, j in cols] + [b[:, i, j].imag for i, j in cols])
    p_rwa = np.abs(b) ** 2
    report = {
        "scenario": "rwa-generic",
        "eigenvalues_cm_inv": basis.values,
        "integers": sel.n,
        "pairs": [_pair_report(sol, i, j) for i in range(n) for j in range(i + 1, n)],
        "degenerate_companions": {str(l): c for l, c in n_companions.items()},
    }
    if cfg.compare_oracle:
        traj = evolve_modes(basis, modes, r, num.rtol, num.atol)
        p_num = probabilities(traj.payload, basis, basis)
        report["unitarity"] = traj.info["unitarity"]
        report["max_abs_probability_error"] = float(np.max(np.abs(p_num - p_rwa)))
    else:
        p_num = np.full_like(p_rwa, np.nan)
    # P{x}{y} is the transition from state x to state y, i.e. |B_yx|^2
    write_csv(out / "probabilities.csv",
              ["r_cm"] + [f"P{x + 1}{y + 1}_rwa" for x, y in cols] + [f"P{x + 1}{y + 1}_numeric" for x, y in cols],
              [r] + [p_rwa[:, y, x] for x, y in cols] + [p_num[:, y, x] for x, y in cols])
    write_report(out / "report.json", report)
    return report


def _mode(spec):
    return FourierMode(spec.q_cm_inv, spec.matrix())


RUNNERS = {
    "transparency": run_transparency,
    "transparency-scan": run_transparency_scan,
    "selfint": run_selfint,
    "selfint-rwa": run_selfint_rwa,
    "rwa-generic": run_rwa_generic,
}
