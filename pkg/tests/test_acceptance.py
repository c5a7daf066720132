"""Acceptance suite: one test per criterion, each printing a verdict line.

Run with `pytest tests/test_acceptance.py -v -s` to see the verdict lines.
The d=2 half of the convolution-stability criterion is implemented exactly
as stated and is expected to fail: the least constants provably track the
lattice sum W_u, and even after dividing that scale out, the d=2 spread
settles near 7 percent (see notes in the repository docs).
"""

import math
import time

import numpy as np
import pytest

from dualdecay import constants as cst
from dualdecay import duals as du
from dualdecay import gramian as gr
from dualdecay import lattice as lat
from dualdecay import pipeline as pl


def report(num, label, ok, detail):
    print(f"\nACCEPTANCE {num:02d} [{label}]: {'PASS' if ok else 'FAIL'} | {detail}")
    assert ok, f"criterion {num} ({label}): {detail}"


def test_c01_biorthogonality_runtime():
    t0 = time.perf_counter()
    grid = lat.Grid(h=1 / 64, R=24.0, d=1)
    worst = 0.0
    for spec in (lat.GeneratorSpec("gaussian", 1, 6.0, 5.0, params={"sigma": 0.5}),
                 lat.GeneratorSpec("polynomial-bump", 1, 1.0, 5.0, params={"s": 5.0})):
        basis = lat.make_basis(spec, lat.LatticeWindow(1, 16))
        secs = gr.sections(basis, (4, 8, 12, 16), grid)
        ds = du.invert_section(secs, tol=1e-8)
        worst = max(worst, du.biorthogonality_residual(ds, basis, grid))
    elapsed = time.perf_counter() - t0
    report(1, "biorthogonality", worst < 1e-6 and elapsed < 60.0,
           f"max residual {worst:.3e} (< 1e-6), runtime {elapsed:.2f}s (< 60s)")


def test_c02_dual_norm_bound(d1_suite):
    rows = [(f.name, f.dual_norm_max, (1 + 1e-6) / f.A_est) for f in d1_suite.families]
    ok = all(v <= thr for _, v, thr in rows)
    worst = max(rows, key=lambda r: r[1] * r[2] and r[1] / r[2])
    report(2, "dual norm <= 1/A", ok,
           f"tightest: {worst[0]} with max ||g_k||^2 = {worst[1]:.6f} vs {worst[2]:.6f}")


def test_c03_inverse_norm_bound(d1_suite):
    rows = [(f.name, f.lam_max_core, (1 + 1e-6) / f.A_est) for f in d1_suite.families]
    ok = all(v <= thr for _, v, thr in rows)
    worst = max(rows, key=lambda r: r[1] / r[2])
    report(3, "inverse norm <= 1/A", ok,
           f"tightest: {worst[0]} with lambda_max(core) = {worst[1]:.6f} vs {worst[2]:.6f}")


def test_c04_scaling_homogeneity(d1_suite):
    rows = [(f.name, f.scaling_rel_err) for f in d1_suite.families]
    worst = max(rows, key=lambda r: r[1])
    ok = all(v < 1e-10 for _, v in rows)
    report(4, "alpha scaling of duals", ok,
           f"worst relative deviation {worst[1]:.3e} ({worst[0]}), tol 1e-10")


def test_c05_leibniz_exactness():
    worst = {}
    rng = np.random.default_rng(1234)
    for d, N in ((1, 4), (2, 1)):
        window = lat.LatticeWindow(d, N)
        n = window.size
        w = 0.0
        for _ in range(100):
            p = rng.standard_normal((n, n))
            q = rng.standard_normal((n, n))
            P = gr.DecayMatrix(window, 0.5 * (p + p.T))
            Q = gr.DecayMatrix(window, 0.5 * (q + q.T))
            for h in range(1, d + 1):
                w = max(w, cst.leibniz_check(P, Q, h))
        worst[d] = w
    ok = all(w < 1e-13 for w in worst.values())
    report(5, "Leibniz rule exact", ok,
           f"worst residuals d=1: {worst[1]:.2e}, d=2: {worst[2]:.2e} (< 1e-13)")


def test_c06_lattice_sum_closed_form():
    value = cst.compute_W(2.0, 1, tol=1e-12)
    truth = math.pi**2 / 3 - 1
    err = abs(value - truth)
    vals = [cst.compute_W(u, 1, tol=1e-9) for u in (1.5, 2.0, 3.0, 5.0, 10.0)]
    monotone = all(a > b for a, b in zip(vals, vals[1:]))
    report(6, "W_2 closed form + monotone", err < 1e-10 and monotone,
           f"|W_2 - (pi^2/3 - 1)| = {err:.2e} (< 1e-10), monotone over u grid: {monotone}")


def test_c07_interlacing(d1_suite):
    ok = True
    detail = []
    for f in d1_suite.families:
        keep = [f.riesz.radii.index(N) for N in (4, 8, 16)]
        lo = [f.riesz.lambda_min[i] for i in keep]
        hi = [f.riesz.lambda_max[i] for i in keep]
        good = all(lo[i] >= lo[i + 1] - 1e-10 for i in range(2)) and \
            all(hi[i] <= hi[i + 1] + 1e-10 for i in range(2))
        ok = ok and good
        detail.append(f"{f.name}: lambda_min {lo[0]:.4f}>={lo[1]:.4f}>={lo[2]:.4f}")
    report(7, "interlacing over N in {4,8,16}", ok, "; ".join(detail[:2]) + " ...")


def test_c08_inverse_decay_exponent(d1_suite):
    fam = next(f for f in d1_suite.families if f.name == "bump")
    exponent = fam.inverse_decay.exponent
    report(8, "inverse off-diagonal decay", exponent >= 2.0,
           f"shell-regression exponent of |c_0j| = {exponent:.3f} over core radius "
           f"{fam.core_radius} (>= 2.0 required)")


def test_c09_dual_decay_constant_end_to_end(d1_suite, d1_suite_large):
    e16, e32 = d1_suite.E_cal.E_emp, d1_suite_large.E_cal.E_emp
    dominated = True
    for f in d1_suite.families:
        tb = cst.TheoreticalBound(C=f.C_meas, A=f.A_est, s=f.spec.claimed_s,
                                  t=d1_suite.settings.t, d=1, E=e16)
        dominated = dominated and f.D_emp <= tb.D * (1 + 1e-9)
    stable = max(e16, e32) / min(e16, e32) <= 2.0
    report(9, "calibrated E dominates and is stable", dominated and stable,
           f"E_emp(N=16) = {e16:.6f}, E_emp(N=32) = {e32:.6f}, "
           f"ratio {max(e16, e32) / min(e16, e32):.4f} (<= 2), binding family "
           f"{d1_suite.E_cal.binding_family}")


def test_c10_derivation_recursion_bound(d1_suite):
    rows = [(name, m, b) for name, (m, b) in d1_suite.recursion.items()]
    ok = all(m <= b for _, m, b in rows)
    tight = max(rows, key=lambda r: r[1] / r[2])
    report(10, "recursion bound on D_h^t of inverse", ok,
           f"tightest: {tight[0]} measured {tight[1]:.4f} <= bound {tight[2]:.4f} "
           f"(schur constant {d1_suite.schur_constant:.4f})")


def _convolution_stability(d: int, window: int):
    cals = [cst.verify_convolution_discrete(float(d + off), d, window)
            for off in (1, 2, 4)]
    norms = [float(c.normalized) for c in cals]
    mean = sum(norms) / len(norms)
    dev = max(abs(x - mean) / mean for x in norms)
    return cals, norms, dev


def test_c11a_convolution_stability_d1():
    cals, norms, dev = _convolution_stability(1, 128)
    report(11, "convolution constants stable, d=1", dev <= 0.05,
           f"W_u-normalized constants {[round(x, 4) for x in norms]} at "
           f"u = {[c.u for c in cals]}, max deviation from mean {dev:.2%} (<= 5%)")


def test_c11b_convolution_stability_d2():
    # The measured spread settles near 7%, so this half of the criterion
    # fails honestly: the raw least constants vary by ~3.5x across u, and
    # even the W_u-normalized ones exceed the 5% band.
    cals, norms, dev = _convolution_stability(2, 24)
    report(11, "convolution constants stable, d=2", dev <= 0.05,
           f"W_u-normalized constants {[round(x, 4) for x in norms]} at "
           f"u = {[c.u for c in cals]}, max deviation from mean {dev:.2%} (<= 5%); "
           f"raw constants {[round(c.constant, 3) for c in cals]}")


def test_c12_section_convergence_honesty(d1_suite, d1_suite_large):
    ok = True
    details = []
    small = {f.name: f for f in d1_suite.families}
    large = {f.name: f for f in d1_suite_large.families}
    origin = (0,)
    for name, f16 in small.items():
        c16 = f16.dual_system.coefficient(origin, origin)
        c32 = large[name].dual_system.coefficient(origin, origin)
        drift = abs(c16 - c32)
        good = drift < f16.convergence.estimate
        ok = ok and good
        details.append(f"{name}: |c00(16)-c00(32)| = {drift:.2e} < "
                       f"estimate {f16.convergence.estimate:.2e}")
    report(12, "section-convergence honesty", ok, "; ".join(details[:3]) + " ...")
