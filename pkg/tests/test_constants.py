import math

import numpy as np
import pytest
from scipy.special import zeta

from dualdecay import constants as cst
from dualdecay import duals as du
from dualdecay import gramian as gr
from dualdecay import lattice as lat
from dualdecay.errors import HypothesisViolation


# --- shell machinery -----------------------------------------------------------


def brute_shell_count(d, n):
    axes = [np.arange(-n, n + 1)] * d
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d)
    return int(np.sum(np.max(np.abs(pts), axis=1) == n))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_shell_count_matches_enumeration(d):
    for n in range(0, 6):
        assert cst.shell_count(d, n) == brute_shell_count(d, n)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_shell_poly_matches_count(d):
    poly = cst.shell_poly(d)
    for n in range(1, 50):
        assert np.polyval(poly, float(n)) == pytest.approx(cst.shell_count(d, n))


def test_poly_tail_integral_closed_form():
    # d=1: integral of 2 (1+x)^-2 over [a, inf) is 2/(1+a)
    assert cst.lattice_tail_upper(2.0, 1, 100) == pytest.approx(2.0 / 101, rel=1e-14)
    # d=2: integral of 8x (1+x)^-4 over [a, inf)
    a = 10.0
    exact = 8 * ((1 + a) ** -2 / 2 - (1 + a) ** -3 / 3 + a * 0)
    exact = 8 * (1 / (2 * (1 + a) ** 2) - 1 / (3 * (1 + a) ** 3))
    assert cst.lattice_tail_upper(4.0, 2, 10) == pytest.approx(exact, rel=1e-12)


# --- lattice sums ---------------------------------------------------------------


def test_w_sum_basel_closed_form():
    ws = cst.w_sum(2.0, 1, tol=1e-12)
    assert abs(ws.value - (math.pi**2 / 3 - 1)) < 1e-10
    assert ws.error_bound <= 1e-12


def test_w_sum_dominant_term_limit():
    assert cst.compute_W(100.0, 1, tol=1e-12) == pytest.approx(1.0, abs=1e-12)


def test_w_sum_d2_against_zeta_oracle():
    # shells have 8n points, so W = 1 + 8 (zeta(2) - zeta(3))
    oracle = 1 + 8 * (zeta(2) - zeta(3))
    assert cst.compute_W(3.0, 2, tol=1e-12) == pytest.approx(oracle, abs=1e-10)


def test_w_sum_monotone_decreasing_in_u():
    vals = [cst.compute_W(u, 1, tol=1e-9) for u in (1.5, 2.0, 3.0, 5.0, 10.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(1.0, abs=0.01)


def test_w_sum_divergence_guard():
    with pytest.raises(ValueError, match="diverges"):
        cst.compute_W(1.0, 1)
    with pytest.raises(ValueError, match="diverges"):
        cst.compute_W(2.0, 2)


def test_w_sum_unattainable_tolerance():
    with pytest.raises(ValueError, match="unattainable"):
        cst.w_sum(1.0078125, 1, tol=1e-13)


def test_w_tail_honesty_under_radius_doubling():
    ws = cst.w_sum(3.0, 1, tol=1e-10)
    doubled = cst.w_sum(3.0, 1, tol=1e-10, radius=2 * ws.radius)
    assert abs(doubled.value - ws.value) < ws.tail_bound


# --- comparison bounds ------------------------------------------------------------


def test_lattice_sum_bound_ratio_at_two():
    cal = cst.calibrate_lattice_sum_bound(1, u_grid=[2.0])
    assert cal.constant == pytest.approx((math.pi**2 / 3 - 1) / 2, abs=1e-9)


def test_lattice_sum_bound_near_dimension():
    cal = cst.calibrate_lattice_sum_bound(1)
    assert math.isfinite(cal.constant)
    assert cal.constant < 3.0
    assert cal.binding[0] == min(cal.grid)  # ratio largest where both sides blow up


def test_lattice_sum_bound_stable_under_grid_refinement():
    base = cst.calibrate_lattice_sum_bound(1).constant
    refined_grid = [1 + 2.0**-i for i in range(8)] + [1 + 0.5 * k for k in range(2, 21)]
    refined = cst.calibrate_lattice_sum_bound(1, u_grid=refined_grid).constant
    assert refined == pytest.approx(base, rel=0.02)


def test_lattice_sum_bound_rejects_out_of_range_grid():
    with pytest.raises(ValueError, match="grid"):
        cst.calibrate_lattice_sum_bound(1, u_grid=[0.5])


def test_convolution_discrete_at_origin():
    # at k=0 the sum collapses to W_{2u}, a lower bound for the calibration
    j = lat.LatticeWindow(1, 512).indices[:, 0].astype(float)
    lhs0 = float(np.sum(np.power(1 + np.abs(j), -4.0)))
    w4 = 1 + 2 * (zeta(4) - 1)
    assert lhs0 == pytest.approx(w4, abs=1e-6)
    cal = cst.verify_convolution_discrete(2.0, 1, window=8)
    assert cal.constant >= lhs0


def test_convolution_discrete_symmetric_in_k():
    jwin = lat.LatticeWindow(1, 64).indices.astype(float)
    jw = np.power(1.0 + np.abs(jwin[:, 0]), -2.0)
    for k in (1.0, 3.0, 7.0):
        lhs_p = np.sum(np.power(1.0 + np.abs(k - jwin[:, 0]), -2.0) * jw)
        lhs_m = np.sum(np.power(1.0 + np.abs(-k - jwin[:, 0]), -2.0) * jw)
        assert lhs_p == pytest.approx(lhs_m, rel=1e-15)


def test_convolution_discrete_large_u_ratio_two():
    cal = cst.verify_convolution_discrete(40.0, 1, window=4)
    assert cal.constant == pytest.approx(2.0, abs=1e-3)


def test_convolution_discrete_needs_u_at_least_d_plus_one():
    with pytest.raises(ValueError, match="d \\+ 1"):
        cst.verify_convolution_discrete(1.5, 1, window=4)


def test_convolution_continuous_closed_form_at_origin():
    grid = lat.Grid(h=1 / 64, R=30.0, d=1)
    pts = grid.points[:, 0]
    lhs0 = float(np.sum(np.power(1 + np.abs(pts), -4.0)) * grid.weight)
    assert lhs0 == pytest.approx(2.0 / 3.0, abs=1e-3)
    cal = cst.verify_convolution_continuous(2.0, 1, grid, x_window=3)
    assert cal.constant >= lhs0
    assert math.isfinite(cal.normalized)


def test_convolution_continuous_symmetric_in_x():
    grid = lat.Grid(h=1 / 16, R=12.0, d=1)
    pts = grid.points[:, 0]
    weight = np.power(1 + np.abs(pts), -2.0)
    for x in (1.0, 2.0, 3.0):
        plus = float(np.sum(np.power(1 + np.abs(x - pts), -2.0) * weight))
        minus = float(np.sum(np.power(1 + np.abs(-x - pts), -2.0) * weight))
        assert plus == pytest.approx(minus, rel=1e-14)


# --- the dual-decay constant -------------------------------------------------------


def test_theoretical_D_unit_example():
    tb = cst.TheoreticalBound(C=1.0, A=1.0, s=4.0, t=2, d=1, E=1.0)
    assert tb.D == pytest.approx(4.0, abs=1e-14)


def test_theoretical_D_with_doubled_C():
    tb = cst.TheoreticalBound(C=2.0, A=1.0, s=4.0, t=2, d=1, E=1.0)
    assert tb.D == pytest.approx(128.0, abs=1e-12)


def test_theoretical_D_halved_A():
    base = cst.TheoreticalBound(C=1.5, A=1.0, s=4.0, t=2, d=1, E=1.0)
    halved = cst.TheoreticalBound(C=1.5, A=0.5, s=4.0, t=2, d=1, E=1.0)
    assert halved.D == pytest.approx(2.0 ** (2 + 1) * base.D, rel=1e-13)


def test_theoretical_D_monotonicity():
    base = cst.TheoreticalBound(C=2.0, A=0.5, s=5.0, t=2, d=1, E=1.2)
    assert cst.TheoreticalBound(C=2.5, A=0.5, s=5.0, t=2, d=1, E=1.2).D > base.D
    assert cst.TheoreticalBound(C=2.0, A=0.5, s=5.0, t=2, d=1, E=1.5).D > base.D
    assert cst.TheoreticalBound(C=2.0, A=0.8, s=5.0, t=2, d=1, E=1.2).D < base.D
    assert cst.TheoreticalBound(C=2.0, A=0.5, s=6.0, t=2, d=1, E=1.2).D < base.D


@pytest.mark.parametrize("kwargs,fragment", [
    (dict(C=0.5, A=1.0, s=5.0, t=2, d=1, E=1.0), "C >= 1"),
    (dict(C=1.0, A=1.0, s=5.0, t=1, d=1, E=1.0), "t > d"),
    (dict(C=1.0, A=1.0, s=3.0, t=2, d=1, E=1.0), "s > d\\+t"),
    (dict(C=1.0, A=0.0, s=5.0, t=2, d=1, E=1.0), "A > 0"),
    (dict(C=1.0, A=1.0, s=5.0, t=2, d=1, E=0.0), "E > 0"),
])
def test_theorem_hypothesis_guards(kwargs, fragment):
    with pytest.raises(HypothesisViolation, match=fragment):
        cst.TheoreticalBound(**kwargs)


def test_hypothesis_requires_integer_t():
    with pytest.raises(HypothesisViolation, match="integer"):
        cst.validate_hypotheses(1.0, 5.0, 2.5, 1)


# --- E calibration ------------------------------------------------------------------


def make_case(name, D_emp, C=1.0, A=1.0, s=5.0, t=2, d=1):
    return cst.CalibrationCase(name, D_emp, C, A, s, t, d)


def test_calibrate_E_orthonormal_suite():
    suite = [make_case(f"f{i}", 4.0) for i in range(3)]
    cal = cst.calibrate_E(suite)
    base = (1 + 1.0 / (5 - 2 - 1)) ** 2  # C=A=1 leaves only the s-factor
    assert cal.E_emp == pytest.approx((4.0 / base) ** 0.25, rel=1e-12)
    for _, e in cal.per_family:
        assert cst.TheoreticalBound(C=1.0, A=1.0, s=5.0, t=2, d=1,
                                    E=max(cal.E_emp, 1e-300)).D >= 4.0 - 1e-9


def test_calibrate_E_enlarging_suite_monotone():
    small = cst.calibrate_E([make_case("a", 2.0), make_case("b", 3.0),
                             make_case("c", 4.0)])
    larger = cst.calibrate_E([make_case("a", 2.0), make_case("b", 3.0),
                              make_case("c", 4.0), make_case("d", 9.0)])
    assert larger.E_emp >= small.E_emp
    assert larger.binding_family == "d"


def test_calibrate_E_validation():
    with pytest.raises(ValueError, match=">= 3 families"):
        cst.calibrate_E([make_case("a", 1.0)])
    with pytest.raises(ValueError, match="one dimension"):
        cst.calibrate_E([make_case("a", 1.0), make_case("b", 1.0),
                         cst.CalibrationCase("c", 1.0, 1.0, 1.0, 7.0, 3, 2)])
    with pytest.raises(ValueError, match="non-finite"):
        cst.calibrate_E([make_case("a", 1.0), make_case("b", 1.0),
                         make_case("c", math.inf)])


# --- derivation algebra ----------------------------------------------------------------


def test_leibniz_identity_matrices():
    win = lat.LatticeWindow(1, 4)
    eye = gr.DecayMatrix(win, np.eye(9))
    assert cst.leibniz_check(eye, eye, 1) == 0.0


def test_leibniz_random_pairs_machine_exact():
    rng = np.random.default_rng(1234)
    win = lat.LatticeWindow(1, 4)
    worst = 0.0
    for _ in range(100):
        p = rng.standard_normal((9, 9))
        q = rng.standard_normal((9, 9))
        P = gr.DecayMatrix(win, 0.5 * (p + p.T))
        Q = gr.DecayMatrix(win, 0.5 * (q + q.T))
        worst = max(worst, cst.leibniz_check(P, Q, 1))
    assert worst < 1e-13


def test_leibniz_window_mismatch():
    P = gr.DecayMatrix(lat.LatticeWindow(1, 1), np.eye(3))
    Q = gr.DecayMatrix(lat.LatticeWindow(1, 2), np.eye(5))
    with pytest.raises(ValueError, match="share a window"):
        cst.leibniz_check(P, Q, 1)


def test_binomial_identity_residual_shrinks_with_window():
    spec = lat.GeneratorSpec("polynomial-bump", 1, 1.0, 5.0, params={"s": 5.0})
    residuals = []
    for N in (8, 16, 32):
        grid = lat.Grid(h=1 / 64, R=2 * N + 8, d=1)
        basis = lat.make_basis(spec, lat.LatticeWindow(1, 2 * N))
        secs = gr.sections(basis, (N, 2 * N), grid)
        ds = du.invert_section(secs, tol=1e-6)
        wN = lat.LatticeWindow(1, N)
        pos = ds.window.positions_of(wN)
        block = ds.coeffs[np.ix_(pos, pos)]
        C = gr.DecayMatrix(wN, 0.5 * (block + block.T))
        residuals.append(cst.binomial_identity_residual(C, secs[0], 1, 2,
                                                        eval_radius=N // 4))
    assert residuals[2] < residuals[1] < residuals[0]


def test_binomial_identity_exact_for_window_inverse():
    # with the window's own inverse the alternating sum telescopes to zero
    win = lat.LatticeWindow(1, 8)
    idx = win.indices[:, 0]
    M = np.where(np.abs(idx[:, None] - idx[None, :]) == 0, 1.0, 0.0) \
        + np.where(np.abs(idx[:, None] - idx[None, :]) == 1, 0.25, 0.0)
    inv = np.linalg.inv(M)
    res = cst.binomial_identity_residual(
        gr.DecayMatrix(win, 0.5 * (inv + inv.T)),
        gr.DecayMatrix(win, M), 1, 2, eval_radius=8)
    assert res < 1e-12


# --- recursion --------------------------------------------------------------------------


def test_recursion_trace_unit_example():
    tr = cst.recursion_trace(1.0, 1.0, 1.0, 2, schur_constant=1.0)
    assert tr.values == (1.0, 2.0, 8.0)
    assert tr.final == 8.0


def test_recursion_trace_validation():
    with pytest.raises(ValueError, match="positive"):
        cst.recursion_trace(0.0, 1.0, 1.0, 2)
    with pytest.raises(ValueError, match="nonnegative integer"):
        cst.recursion_trace(1.0, 1.0, 1.0, -1)


def test_recursion_factor_exceeds_one(d1_suite):
    # A <= ||M||_schur <= c C^2 W makes the recursion factor at least one
    for fam in d1_suite.families:
        factor = d1_suite.schur_constant * fam.C_meas**2 * fam.W_value / fam.A_est
        assert factor >= 1.0
