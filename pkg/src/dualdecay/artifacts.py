"""Artifact writers and the recomputation-free verification pass.

Every run writes a report.json plus per-family CSVs (Gramian and coefficient
matrices in the window text format, eigenvalue traces, dual samples, and
envelope summaries) and a top-level constants table.  `verify_artifacts`
re-checks the invariants from those files alone, with no quadrature.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from . import constants as cst
from .errors import ConfigError
from .gramian import DecayMatrix
from .lattice import LatticeWindow
from .pipeline import SuiteResult, Verdict


def _fmt(x) -> str:
    return repr(float(x))


def _node_label(node) -> str:
    return "_".join(str(int(c)) for c in node)


def family_dir(out_dir: str, name: str) -> str:
    return os.path.join(out_dir, name)


def write_suite(out_dir: str, suite: SuiteResult):
    os.makedirs(out_dir, exist_ok=True)
    for fam in suite.families:
        fdir = family_dir(out_dir, fam.name)
        os.makedirs(fdir, exist_ok=True)
        fam.gramian.to_text(os.path.join(fdir, "gramian.csv"))
        fam.dual_system.coefficient_matrix().to_text(os.path.join(fdir, "coeffs.csv"))
        _write_eigens(os.path.join(fdir, "eigens.csv"), fam.riesz)
        _write_envelopes(os.path.join(fdir, "envelopes.csv"), fam.envelope_rows)
        _write_duals(fdir, fam, suite.settings)
    _write_constants(out_dir, suite)
    _write_calibration_text(out_dir, suite)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report_dict(suite), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_eigens(path: str, riesz):
    lines = ["N,lambda_min,lambda_max"]
    for N, lo, hi in zip(riesz.radii, riesz.lambda_min, riesz.lambda_max):
        lines.append(f"{N},{_fmt(lo)},{_fmt(hi)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_envelopes(path: str, rows):
    lines = ["k,t,D_emp,exponent_fit"]
    for node, u, const, exponent in rows:
        lines.append(f"{_node_label(node)},{_fmt(u)},{_fmt(const)},{_fmt(exponent)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_duals(fdir: str, fam, settings):
    grid = settings.grid()
    header = ",".join(f"x_{i + 1}" for i in range(grid.d)) + ",value"
    limit = settings.dual_export_radius
    for node, samples in sorted(fam.dual_system.duals.items()):
        if limit is not None and max(abs(c) for c in node) > limit:
            continue
        lines = [header]
        for pt, val in zip(grid.points, samples):
            coords = ",".join(_fmt(c) for c in pt)
            lines.append(f"{coords},{_fmt(val)}")
        with open(os.path.join(fdir, f"dual_k{_node_label(node)}.csv"), "w") as fh:
            fh.write("\n".join(lines) + "\n")


def _write_constants(out_dir: str, suite: SuiteResult):
    lines = ["scope,dimension,name,value,binding,detail"]

    def add(scope, d, name, value, binding="", detail=""):
        lines.append(f"{scope},{d},{name},{_fmt(value)},{binding},{detail}")

    add("suite", suite.settings.d, "E_emp", suite.E_cal.E_emp, suite.E_cal.binding_family)
    add("suite", suite.settings.d, "schur_constant", suite.schur_constant,
        suite.schur_binding)
    add("suite", suite.settings.d, "transfer_constant", suite.c_transfer,
        suite.binding_transfer)
    for d, cal in suite.lattice_sum_cal.items():
        add("lattice_sum_bound", d, "lattice_sum_vs_1_over_u_minus_d", cal.constant,
            f"u={cal.binding[0]:g}")
    for d, cals in suite.convolution.items():
        for cal in cals:
            add("convolution_discrete", d, f"u={cal.u:g}", cal.constant,
                _node_label(cal.binding), f"normalized={cal.normalized!r}")
    for d, worst in suite.leibniz_worst.items():
        add("leibniz", d, "worst_residual", worst)
    for fam in suite.families:
        add("family", suite.settings.d, f"{fam.name}.A_est", fam.A_est)
        add("family", suite.settings.d, f"{fam.name}.B_est", fam.B_est)
        add("family", suite.settings.d, f"{fam.name}.C_meas", fam.C_meas)
        add("family", suite.settings.d, f"{fam.name}.D_emp", fam.D_emp)
        add("family", suite.settings.d, f"{fam.name}.core_radius", fam.core_radius)
    with open(os.path.join(out_dir, "constants.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_calibration_text(out_dir: str, suite: SuiteResult):
    out = []
    out.append(f"calibration report: {suite.settings.name}")
    out.append("")
    out.append(f"dimension {suite.settings.d}, window radii {suite.settings.radii}, "
               f"t = {suite.settings.t}")
    out.append("")
    out.append(f"E_emp = {suite.E_cal.E_emp!r}  (binding family: {suite.E_cal.binding_family})")
    for fam, e in suite.E_cal.per_family:
        out.append(f"    {fam:24s} E needed = {e!r}")
    out.append(f"schur constant c = {suite.schur_constant!r}  (binding: {suite.schur_binding})")
    out.append(f"synthesis transfer constant = {suite.c_transfer!r}  "
               f"(binding: {suite.binding_transfer})")
    out.append("")
    for d, cal in suite.lattice_sum_cal.items():
        out.append(f"lattice-sum bound d={d}: least c with W_u <= c(1 + 1/(u-d)): "
                   f"{cal.constant!r} (binding u = {cal.binding[0]:g}, "
                   f"grid {min(cal.grid):g}..{max(cal.grid):g}, {len(cal.grid)} points)")
    for d, cals in suite.convolution.items():
        out.append(f"discrete convolution d={d}:")
        for cal in cals:
            out.append(f"    u={cal.u:g}: least c = {cal.constant!r}, "
                       f"c / W_u = {cal.normalized!r}, binding k = {cal.binding}")
    out.append("")
    out.append("verdicts:")
    for v in suite.verdicts:
        status = "pass" if v.passed else "FAIL"
        out.append(f"    [{status}] {v.name}: value={v.value!r} threshold={v.threshold!r}")
    with open(os.path.join(out_dir, "calibration.txt"), "w") as fh:
        fh.write("\n".join(out) + "\n")


def _finite(x):
    """Non-finite fits (e.g. banded matrices) become null in the report."""
    x = float(x)
    return x if math.isfinite(x) else None


def report_dict(suite: SuiteResult) -> dict:
    s = suite.settings
    fams = {}
    for fam in suite.families:
        fams[fam.name] = {
            "family": fam.spec.family,
            "params": dict(fam.spec.params),
            "claimed_C": fam.spec.claimed_C,
            "claimed_s": fam.spec.claimed_s,
            "perturbations": [[list(n), list(d)] for n, d in fam.spec.perturbations],
            "A_est": fam.A_est,
            "B_est": fam.B_est,
            "lambda_min": list(fam.riesz.lambda_min),
            "lambda_max": list(fam.riesz.lambda_max),
            "riesz_converged": fam.riesz.converged,
            "C_meas": fam.C_meas,
            "D_emp": fam.D_emp,
            "core_radius": fam.core_radius,
            "convergence_estimate": fam.convergence.estimate,
            "convergence_max_change": fam.convergence.max_change,
            "biorthogonality_residual": fam.biorth_residual,
            "gram_duals_residual": fam.gram_duals_residual,
            "dual_norm_max": fam.dual_norm_max,
            "lambda_max_core_coeffs": fam.lam_max_core,
            "inverse_decay_exponent": _finite(fam.inverse_decay.exponent),
            "coefficient_envelope_alpha": fam.alpha_t,
            "schur_ratio_gramian": fam.schur_ratio,
            "schur_norm_gramian": fam.schur_M,
            "spectral_norm_gramian": fam.spectral_M,
            "W_value": fam.W_value,
            "scaling_rel_err": fam.scaling_rel_err,
            "bilinearity_err": fam.bilinearity_err,
            "translation_covariance_err": fam.covariance_err,
            "envelope_consistency": fam.envelope_ordered,
            "offdiag_constant": fam.offdiag.constant,
            "offdiag_exponent": _finite(fam.offdiag.exponent),
            "recursion_measured": suite.recursion[fam.name][0],
            "recursion_bound": suite.recursion[fam.name][1],
            "elapsed": fam.elapsed,
        }
    return {
        "name": s.name,
        "settings": {
            "d": s.d, "radii": list(s.radii), "grid_h": s.grid_h, "grid_R": s.grid_R,
            "t": s.t, "seed": s.seed, "tolerances": s.tolerances,
            "bounds_dims": list(s.bounds_dims),
        },
        "families": fams,
        "calibration": {
            "E_emp": suite.E_cal.E_emp,
            "E_binding": suite.E_cal.binding_family,
            "E_per_family": {f: e for f, e in suite.E_cal.per_family},
            "schur_constant": suite.schur_constant,
            "transfer_constant": suite.c_transfer,
            "lattice_sum_bound": {str(d): cal.constant
                                  for d, cal in suite.lattice_sum_cal.items()},
            "convolution": {
                str(d): [{"u": c.u, "constant": c.constant, "normalized": c.normalized}
                         for c in cals]
                for d, cals in suite.convolution.items()},
            "leibniz_worst": {str(d): w for d, w in suite.leibniz_worst.items()},
            "w_honesty": list(suite.w_honesty),
        },
        "invariants": [{"name": v.name, "passed": v.passed, "value": v.value,
                        "threshold": v.threshold, "detail": v.detail}
                       for v in suite.verdicts],
        "timings": suite.timings,
    }


# ---------------------------------------------------------------------------
# verification from stored artifacts
# ---------------------------------------------------------------------------


def _require(path: str) -> str:
    if not os.path.exists(path):
        raise ConfigError(f"missing artifact: {path}")
    return path


def _load_eigens(path: str):
    radii, lo, hi = [], [], []
    with open(_require(path)) as fh:
        next(fh)
        for line in fh:
            n, a, b = line.strip().split(",")
            radii.append(int(n))
            lo.append(float(a))
            hi.append(float(b))
    return radii, lo, hi


def verify_artifacts(out_dir: str) -> list:
    """Re-check invariants from stored artifacts; returns verdicts."""
    report_path = _require(os.path.join(out_dir, "report.json"))
    with open(report_path) as fh:
        report = json.load(fh)
    tol = report["settings"]["tolerances"]
    slack = 1.0 + tol["bound_slack"]
    verdicts = []

    def add(name, passed, value, threshold, detail=""):
        verdicts.append(Verdict(name, bool(passed), float(value), float(threshold), detail))

    for name, fam in sorted(report["families"].items()):
        fdir = family_dir(out_dir, name)
        gram = DecayMatrix.from_text(_require(os.path.join(fdir, "gramian.csv")))
        coeffs = DecayMatrix.from_text(_require(os.path.join(fdir, "coeffs.csv")))
        if gram.window != coeffs.window:
            raise ConfigError(f"window mismatch between stored matrices for {name!r}")
        n = gram.size
        product = coeffs.entries @ gram.entries
        biorth = float(np.max(np.abs(product - np.eye(n))))
        add(f"{name}.biorthogonality", biorth < tol["biorthogonality"],
            biorth, tol["biorthogonality"], "max |CM - I| from stored matrices")

        radii, lo, hi = _load_eigens(os.path.join(fdir, "eigens.csv"))
        a_est = lo[-1]
        add(f"{name}.eigens_consistent",
            math.isclose(a_est, fam["A_est"], rel_tol=1e-12), a_est, fam["A_est"])
        inter = all(lo[i] >= lo[i + 1] - tol["interlacing"] for i in range(len(lo) - 1)) \
            and all(hi[i] <= hi[i + 1] + tol["interlacing"] for i in range(len(hi) - 1))
        add(f"{name}.interlacing", inter, 0.0, tol["interlacing"])

        core = LatticeWindow(coeffs.window.d, int(fam["core_radius"]))
        pos = coeffs.window.positions_of(core)
        block = coeffs.entries[np.ix_(pos, pos)]
        lam = float(np.linalg.eigvalsh(block)[-1])
        add(f"{name}.inverse_norm_bound", lam <= slack / a_est, lam, slack / a_est)
        dual_norm = float(np.max(np.diag(block)))
        add(f"{name}.dual_norm_bound", dual_norm <= slack / a_est, dual_norm,
            slack / a_est)

        envelopes = _require(os.path.join(fdir, "envelopes.csv"))
        t = report["settings"]["t"]
        d_emp = 0.0
        with open(envelopes) as fh:
            next(fh)
            for line in fh:
                _, u, const, _ = line.strip().rsplit(",", 3)
                if float(u) == float(t):
                    d_emp = max(d_emp, float(const))
        tb = cst.TheoreticalBound(C=fam["C_meas"], A=a_est, s=fam["claimed_s"],
                                  t=t, d=report["settings"]["d"],
                                  E=report["calibration"]["E_emp"])
        add(f"{name}.dual_decay_domination", d_emp <= tb.D * (1 + 1e-9), d_emp, tb.D)

    stored_fail = [v["name"] for v in report["invariants"] if not v["passed"]]
    add("stored_verdicts_pass", not stored_fail, float(len(stored_fail)), 0.0,
        "failed: " + ", ".join(stored_fail) if stored_fail else "")
    return verdicts
