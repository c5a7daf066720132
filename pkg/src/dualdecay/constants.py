"""Every explicit constant: lattice sums W_u, convolution-inequality
calibrations, the dual-decay constant D, and the derivation recursion.

W_u = sum_{k in Z^d} (1 + |k|_inf)^(-u) is computed by exact shell sums up
to a truncation radius, with the remaining tail bracketed between two
integral comparisons; the bracket midpoint is added to the partial sum and
the half-width is the reported error bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import HypothesisViolation
from .gramian import DecayMatrix, apply_derivation
from .lattice import LatticeWindow, max_norm

_SHELL_CAP = 200_000_000  # largest truncation radius attempted
_SHELL_CHUNK = 1_000_000


def shell_count(d: int, n: int) -> int:
    """Number of lattice points with |k|_inf == n."""
    if n == 0:
        return 1
    return (2 * n + 1) ** d - (2 * n - 1) ** d


def shell_poly(d: int) -> np.ndarray:
    """Polynomial s_d with s_d(n) = shell_count(d, n) for n >= 1.

    Expanding (2x+1)^d - (2x-1)^d avoids the catastrophic cancellation of
    subtracting the two d-th powers at large x.  Highest degree first.
    """
    out = np.zeros(d)
    for p in range(d):  # coefficient of x^p survives only for d - p odd
        if (d - p) % 2 == 1:
            out[d - 1 - p] = 2.0 * math.comb(d, p) * 2.0**p
    return out


def _poly_tail_integral(coeffs: np.ndarray, u: float, a: float) -> float:
    """Exact integral of p(x) (1+x)^(-u) over [a, inf) for polynomial p.

    Requires u > deg(p) + 1; expands each x^j in powers of (1+x).
    """
    deg = len(coeffs) - 1
    if u <= deg + 1:
        raise ValueError(f"tail integral diverges: u={u} <= deg+1={deg + 1}")
    total = 0.0
    base = 1.0 + a
    for idx, c in enumerate(coeffs):
        j = deg - idx
        if c == 0.0:
            continue
        for i in range(j + 1):
            total += (float(c) * math.comb(j, i) * (-1.0) ** (j - i)
                      * base ** (i - u + 1) / (u - i - 1.0))
    return total


def lattice_tail_upper(u: float, d: int, radius: int) -> float:
    """Upper bound on sum_{|k| > radius} (1+|k|)^(-u) by integral comparison."""
    if u <= d:
        raise ValueError(f"lattice tail diverges for u <= d (u={u}, d={d})")
    radius = max(int(radius), 1)
    return _poly_tail_integral(shell_poly(d), u, float(radius))


@dataclass(frozen=True)
class WSum:
    """Truncated lattice sum with its bracketed tail estimate."""

    value: float
    error_bound: float   # half of the tail bracket: |value - W_u| <= error_bound
    radius: int
    u: float
    d: int

    @property
    def tail_bound(self) -> float:
        """The full bracket width; refining the radius moves the value by less."""
        return 2.0 * self.error_bound


def w_sum(u: float, d: int, tol: float = 1e-10, radius: int | None = None) -> WSum:
    """W_u = sum_k (1+|k|)^(-u) over Z^d, to within tol.

    Shells are summed exactly (ascending radius, fixed order) up to n0; the
    tail is bracketed by the integral comparisons over [n0+1, inf) and
    [n0, inf) and replaced by the bracket midpoint.  A radius may be forced
    (e.g. to double it) as long as it still meets the tolerance.
    """
    if u <= d:
        raise ValueError(f"W_u diverges for u <= d (u={u}, d={d})")
    if tol <= 0:
        raise ValueError("tol must be positive")
    poly = shell_poly(d)

    def width(n: int) -> float:
        return _poly_tail_integral(poly, u, float(n)) - _poly_tail_integral(
            poly, u, float(n + 1))

    if radius is None:
        n0 = max(64, 2 * d)
        while width(n0) > 2.0 * tol:
            n0 *= 2
            if n0 > _SHELL_CAP:
                raise ValueError(f"tolerance {tol:g} unattainable for u={u}, d={d}")
    else:
        n0 = int(radius)
        if n0 < max(2, d) or width(n0) > 2.0 * tol:
            raise ValueError(f"forced radius {n0} does not meet tol {tol:g}")

    total = 1.0  # the k = 0 term
    for start in range(1, n0 + 1, _SHELL_CHUNK):
        stop = min(start + _SHELL_CHUNK - 1, n0)
        n = np.arange(start, stop + 1, dtype=float)
        total += float(np.sum(np.polyval(poly, n) * np.power(1.0 + n, -u)))
    upper = _poly_tail_integral(poly, u, float(n0))
    lower = _poly_tail_integral(poly, u, float(n0 + 1))
    return WSum(value=total + 0.5 * (upper + lower),
                error_bound=0.5 * (upper - lower), radius=n0, u=u, d=d)


def compute_W(u: float, d: int, tol: float = 1e-10) -> float:
    return w_sum(u, d, tol).value


@dataclass(frozen=True)
class BoundCalibration:
    """Least constant making a one-sided comparison hold over a scan grid."""

    constant: float
    binding: tuple
    grid: tuple
    d: int


def calibrate_lattice_sum_bound(d: int, u_grid=None, tol: float = 1e-7) -> BoundCalibration:
    """Least c with W_u <= c (1 + 1/(u-d)) over a grid of exponents in (d, d+10].

    Near u = d the direct shell sum converges like n^-(u-d), so only the
    integral-corrected estimate stays affordable; tol below ~1e-8 becomes
    unattainable for the smallest grid exponents.
    """
    if u_grid is None:
        u_grid = [d + 2.0**-i for i in range(7)] + [d + k for k in range(2, 11)]
    u_grid = sorted(float(u) for u in u_grid)
    if not all(d < u <= d + 10 for u in u_grid):
        raise ValueError("exponent grid must lie in (d, d+10]")
    best_c, best_u = -math.inf, None
    for u in u_grid:
        ratio = compute_W(u, d, tol) / (1.0 + 1.0 / (u - d))
        if ratio > best_c:
            best_c, best_u = ratio, u
    return BoundCalibration(constant=best_c, binding=(best_u,), grid=tuple(u_grid), d=d)


@dataclass(frozen=True)
class ConvolutionCalibration:
    """Calibrated constants for a discrete or continuous convolution bound.

    `constant` is the least c with LHS(k) <= c (1+|k|)^(-u); `normalized`
    divides out the lattice sum (resp. integral) of the single factor, the
    natural u-free scale of the bound.
    """

    constant: float
    normalized: float
    scale: float
    binding: tuple
    u: float
    d: int


def verify_convolution_discrete(u: float, d: int, window: int,
                                source_factor: int = 4) -> ConvolutionCalibration:
    """Brute-force scan of sum_j (1+|k-j|)^(-u) (1+|j|)^(-u) <= c (1+|k|)^(-u).

    k runs over the window; j over a `source_factor` times larger one.
    """
    if u < d + 1:
        raise ValueError(f"need u >= d + 1, got u={u}, d={d}")
    kwin = LatticeWindow(d, int(window))
    jwin = LatticeWindow(d, int(window) * source_factor)
    k_idx = kwin.indices.astype(float)
    j_idx = jwin.indices.astype(float)
    j_weight = np.power(1.0 + max_norm(j_idx), -u)
    ratios = np.empty(len(k_idx))
    for a, k in enumerate(k_idx):
        lhs = float(np.sum(np.power(1.0 + max_norm(k - j_idx), -u) * j_weight))
        ratios[a] = lhs * (1.0 + np.max(np.abs(k))) ** u
    best = int(np.argmax(ratios))
    scale = compute_W(u, d, tol=1e-10)
    return ConvolutionCalibration(constant=float(ratios[best]),
                                  normalized=float(ratios[best]) / scale,
                                  scale=scale,
                                  binding=tuple(int(c) for c in k_idx[best]),
                                  u=u, d=d)


def verify_convolution_continuous(u: float, d: int, grid,
                                  x_window: int = 4) -> ConvolutionCalibration:
    """Quadrature analogue: int (1+|x-y|)^(-u) (1+|y|)^(-u) dy <= c (1+|x|)^(-u)."""
    from .gramian import decay_integral

    if u < d + 1:
        raise ValueError(f"need u >= d + 1, got u={u}, d={d}")
    pts = grid.points
    y_weight = np.power(1.0 + max_norm(pts), -u)
    xwin = LatticeWindow(d, int(x_window))
    ratios = np.empty(xwin.size)
    for a, x in enumerate(xwin.indices.astype(float)):
        lhs = float(np.sum(np.power(1.0 + max_norm(x - pts), -u) * y_weight)) * grid.weight
        ratios[a] = lhs * (1.0 + np.max(np.abs(x))) ** u
    best = int(np.argmax(ratios))
    scale = decay_integral(u, d)
    return ConvolutionCalibration(constant=float(ratios[best]),
                                  normalized=float(ratios[best]) / scale,
                                  scale=scale,
                                  binding=tuple(int(c) for c in xwin.indices[best]),
                                  u=u, d=d)


# ---------------------------------------------------------------------------
# The dual-decay constant and its calibration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TheoreticalBound:
    """Parameter tuple (C, A, s, t, d, E) for the dual-decay constant D."""

    C: float
    A: float
    s: float
    t: int
    d: int
    E: float

    def __post_init__(self):
        validate_hypotheses(self.C, self.s, self.t, self.d)
        if self.A <= 0:
            raise HypothesisViolation(f"hypothesis A > 0 violated (A={self.A})")
        if self.E <= 0:
            raise HypothesisViolation(f"hypothesis E > 0 violated (E={self.E})")

    @property
    def D(self) -> float:
        return theoretical_D(self)


def validate_hypotheses(C: float, s: float, t, d: int):
    """C >= 1, integer t > d, s > d + t; raises naming the violated one."""
    if C < 1.0:
        raise HypothesisViolation(f"hypothesis C >= 1 violated (C={C})")
    if int(t) != t:
        raise HypothesisViolation(f"hypothesis t integer violated (t={t})")
    if not t > d:
        raise HypothesisViolation(f"hypothesis t > d violated (t={t}, d={d})")
    if not s > d + t:
        raise HypothesisViolation(f"hypothesis s > d+t violated (s={s}, d={d}, t={t})")


def theoretical_D(tb: TheoreticalBound) -> float:
    """D = E^(t^2) C^(2t+1) A^-(t+1) (1 + 1/(s-t-d))^t."""
    t = int(tb.t)
    return (tb.E ** (t * t) * tb.C ** (2 * t + 1) / tb.A ** (t + 1)
            * (1.0 + 1.0 / (tb.s - t - tb.d)) ** t)


@dataclass(frozen=True)
class CalibrationCase:
    """One family's measured inputs for calibrating E."""

    family: str
    D_emp: float
    C_meas: float
    A_est: float
    s: float
    t: int
    d: int


@dataclass(frozen=True)
class ECalibration:
    E_emp: float
    binding_family: str
    per_family: tuple
    d: int


def calibrate_E(suite) -> ECalibration:
    """Least E for which the theoretical D dominates every measured one.

    D is strictly increasing in E, so per case E_i solves D(E_i) = D_emp and
    the calibrated value is the max; requires >= 3 families per dimension.
    """
    cases = list(suite)
    if not cases:
        raise ValueError("empty calibration suite")
    dims = {c.d for c in cases}
    if len(dims) != 1:
        raise ValueError("calibrate one dimension at a time")
    d = dims.pop()
    if len(cases) < 3:
        raise ValueError(f"need >= 3 families per dimension, got {len(cases)}")
    per_family = []
    for c in cases:
        validate_hypotheses(c.C_meas, c.s, c.t, c.d)
        if not math.isfinite(c.D_emp):
            raise ValueError(f"family {c.family!r} has non-finite measured D")
        t = int(c.t)
        base = (c.C_meas ** (2 * t + 1) / c.A_est ** (t + 1)
                * (1.0 + 1.0 / (c.s - t - c.d)) ** t)
        per_family.append((c.family, (c.D_emp / base) ** (1.0 / (t * t))))
    binding, e_emp = max(per_family, key=lambda item: item[1])
    return ECalibration(E_emp=e_emp, binding_family=binding,
                        per_family=tuple(per_family), d=d)


# ---------------------------------------------------------------------------
# Derivation algebra
# ---------------------------------------------------------------------------


def leibniz_check(P: DecayMatrix, Q: DecayMatrix, h: int) -> float:
    """max |D_h(PQ) - D_h(P)Q - P D_h(Q)|; exact algebra, so machine-zero."""
    if P.window != Q.window:
        raise ValueError("matrices must share a window")
    diffs = P.node_diffs(h)
    prod = P.entries @ Q.entries
    lhs = diffs * prod
    rhs = (diffs * P.entries) @ Q.entries + P.entries @ (diffs * Q.entries)
    return float(np.max(np.abs(lhs - rhs)))


def binomial_identity_residual(coeffs: DecayMatrix, gram: DecayMatrix, h: int,
                               u: int, eval_radius: int) -> float:
    """max over the central block of |sum_l C(u,l) D^l(inv) D^(u-l)(gram)|.

    Zero exactly when `coeffs` is the exact window inverse; with converged
    core coefficients standing in for the infinite inverse, the residual
    measures how far the finite window is from the full-lattice identity.
    """
    if coeffs.window != gram.window:
        raise ValueError("matrices must share a window")
    n = coeffs.window.size
    total = np.zeros((n, n))
    for el in range(u + 1):
        left = apply_derivation(coeffs, h, el).entries
        right = apply_derivation(gram, h, u - el).entries
        total += math.comb(u, el) * (left @ right)
    sub = LatticeWindow(coeffs.window.d, eval_radius)
    pos = coeffs.window.positions_of(sub)
    return float(np.max(np.abs(total[np.ix_(pos, pos)])))


@dataclass(frozen=True)
class RecursionTrace:
    """Iterated bound v_u on the derivation powers of the inverse Gramian.

    v_0 = 1/A and v_u = c (C^2 W / A) 2^u v_{u-1}, where c is the calibrated
    Schur constant of the Gramian side.
    """

    values: tuple
    A_est: float
    C_meas: float
    W: float
    schur_constant: float

    @property
    def final(self) -> float:
        return self.values[-1]


def recursion_trace(A_est: float, C_meas: float, W: float, t: int,
                    schur_constant: float = 1.0) -> RecursionTrace:
    if min(A_est, C_meas, W, schur_constant) <= 0:
        raise ValueError("recursion inputs must be positive")
    if t < 0 or int(t) != t:
        raise ValueError("t must be a nonnegative integer")
    factor = schur_constant * C_meas**2 * W / A_est
    values = [1.0 / A_est]
    for u in range(1, int(t) + 1):
        values.append(factor * 2.0**u * values[-1])
    return RecursionTrace(values=tuple(values), A_est=A_est, C_meas=C_meas,
                          W=W, schur_constant=schur_constant)
