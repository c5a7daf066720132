"""Lattice windows, sampling grids, and localized generator families.

The integer lattice is always Z^d with the max-norm |x| = max_i |x_i|.
A window is the finite cube {k : |k| <= N}, enumerated lexicographically,
and a basis set places one localized generator at every (possibly
perturbed) window node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

MAX_PERTURBATION = 0.5  # keeps every node inside its own unit cell


def max_norm(x: np.ndarray) -> np.ndarray:
    """Coordinate-max norm along the last axis."""
    return np.max(np.abs(x), axis=-1)


@dataclass(frozen=True)
class LatticeWindow:
    """Finite cube {k in Z^d : |k|_inf <= N} in fixed lexicographic order."""

    d: int
    N: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if self.N < 0:
            raise ValueError(f"window radius must be >= 0, got {self.N}")

    @property
    def size(self) -> int:
        return (2 * self.N + 1) ** self.d

    @cached_property
    def indices(self) -> np.ndarray:
        """All window nodes as an (size, d) int array, lexicographic."""
        axes = [np.arange(-self.N, self.N + 1)] * self.d
        mesh = np.meshgrid(*axes, indexing="ij")
        out = np.stack(mesh, axis=-1).reshape(-1, self.d)
        out.setflags(write=False)
        return out

    def contains(self, k) -> bool:
        k = np.atleast_1d(np.asarray(k, dtype=int))
        return k.shape == (self.d,) and bool(np.max(np.abs(k)) <= self.N)

    def index_of(self, k) -> int:
        """Position of node k in the enumeration."""
        k = np.atleast_1d(np.asarray(k, dtype=int))
        if not self.contains(k):
            raise IndexError(f"node {tuple(k)} outside window N={self.N}, d={self.d}")
        side = 2 * self.N + 1
        pos = 0
        for c in k:
            pos = pos * side + (int(c) + self.N)
        return pos

    def positions_of(self, sub: "LatticeWindow") -> np.ndarray:
        """Enumeration positions of a centered sub-window's nodes."""
        if sub.d != self.d or sub.N > self.N:
            raise ValueError("sub-window must have same dimension and radius <= N")
        return np.array([self.index_of(k) for k in sub.indices], dtype=int)


@dataclass(frozen=True)
class Grid:
    """Uniform sampling grid {h*m : m in Z^d, |h*m| <= R}.

    Grid points double as composite-midpoint quadrature nodes for the
    cells of side h centered at them; the quadrature weight is h^d.
    """

    h: float
    R: float
    d: int

    def __post_init__(self):
        if not 0 < self.h <= 0.25:
            raise ValueError(f"grid spacing must be in (0, 1/4], got {self.h}")
        if self.R <= 0:
            raise ValueError(f"grid extent must be positive, got {self.R}")

    @property
    def steps(self) -> int:
        """Largest m with m*h <= R."""
        return int(math.floor(self.R / self.h + 1e-9))

    @property
    def weight(self) -> float:
        return self.h**self.d

    @cached_property
    def axis(self) -> np.ndarray:
        M = self.steps
        out = np.arange(-M, M + 1, dtype=float) * self.h
        out.setflags(write=False)
        return out

    @cached_property
    def points(self) -> np.ndarray:
        """(n_points, d) array of grid points, lexicographic in m."""
        mesh = np.meshgrid(*[self.axis] * self.d, indexing="ij")
        out = np.stack(mesh, axis=-1).reshape(-1, self.d)
        out.setflags(write=False)
        return out

    @property
    def n_points(self) -> int:
        return (2 * self.steps + 1) ** self.d


@dataclass(frozen=True)
class EnvelopeFit:
    """Measured decay envelope of a sampled function or matrix row.

    For fit_method="max-envelope", `constant` is the least c with
    |f(x)| <= c (1+r)^(-exponent) over all samples (r = max-norm radius).
    For fit_method="loglog-regression", `exponent` is the fitted decay
    rate of binned radial maxima and `residual` the rms log10 misfit.
    """

    constant: float
    exponent: float
    residual: float
    fit_method: str
    flag: str = ""


def fit_envelope(values: np.ndarray, radii: np.ndarray, u: float,
                 method: str = "max-envelope", bin_width: float = 0.5) -> EnvelopeFit:
    """Fit a polynomial decay envelope to |values| against radii."""
    values = np.abs(np.asarray(values, dtype=float)).ravel()
    radii = np.asarray(radii, dtype=float).ravel()
    if values.shape != radii.shape:
        raise ValueError("values and radii must have matching shapes")
    if method == "max-envelope":
        if not np.any(values > 0):
            return EnvelopeFit(0.0, u, 0.0, method, flag="all-zero")
        constant = float(np.max(values * np.power(1.0 + radii, u)))
        return EnvelopeFit(constant, u, 0.0, method)
    if method == "loglog-regression":
        # bin by radius, regress log(shell max) on log(1+r) at the argmax radius
        nbins = int(math.floor(radii.max() / bin_width)) + 1
        which = np.minimum((radii / bin_width).astype(int), nbins - 1)
        xs, ys = [], []
        for b in range(nbins):
            mask = which == b
            if not np.any(mask):
                continue
            vals = values[mask]
            imax = np.argmax(vals)
            if vals[imax] <= 0.0:
                continue
            xs.append(math.log(1.0 + radii[mask][imax]))
            ys.append(math.log(vals[imax]))
        if len(xs) < 3:
            flag = "all-zero" if not np.any(values > 0) else "super-polynomial"
            return EnvelopeFit(0.0, math.inf, 0.0, method, flag=flag)
        slope, intercept = np.polyfit(np.array(xs), np.array(ys), 1)
        resid = float(np.sqrt(np.mean((np.polyval([slope, intercept], xs) - np.array(ys)) ** 2)))
        return EnvelopeFit(float(math.exp(intercept)), float(-slope), resid, method)
    raise ValueError(f"unknown fit method {method!r}")


# ---------------------------------------------------------------------------
# Generator families
# ---------------------------------------------------------------------------

FAMILIES = ("polynomial-bump", "gaussian", "bspline-indicator", "bspline-order-m")


def _bspline_1d(x: np.ndarray, m: int) -> np.ndarray:
    """Cardinal B-spline of order m (support [0, m]); order 1 is 1_[0,1)."""
    x = np.asarray(x, dtype=float)
    if m == 1:
        return ((x >= 0.0) & (x < 1.0)).astype(float)
    acc = np.zeros_like(x)
    for i in range(m + 1):
        acc += ((-1) ** i) * math.comb(m, i) * np.clip(x - i, 0.0, None) ** (m - 1)
    acc /= math.factorial(m - 1)
    return np.where((x >= 0.0) & (x < m), acc, 0.0)


def _normalize_perturbations(perturbations, d: int):
    """Canonicalize a node -> shift map as a sorted tuple of int/float tuples."""
    if not perturbations:
        return ()
    items = []
    for node, delta in dict(perturbations).items():
        node = tuple(int(c) for c in np.atleast_1d(node))
        delta = tuple(float(c) for c in np.atleast_1d(delta))
        if len(node) != d or len(delta) != d:
            raise ValueError(f"perturbation {node}:{delta} has wrong dimension (d={d})")
        if max(abs(c) for c in delta) > MAX_PERTURBATION:
            raise ValueError(
                f"perturbation {delta} at node {node} exceeds max magnitude {MAX_PERTURBATION}")
        items.append((node, delta))
    items.sort()
    return tuple(items)


@dataclass(frozen=True)
class GeneratorSpec:
    """A family of localized generators around (perturbed) lattice nodes.

    claimed_C and claimed_s declare the envelope |f_k(x)| <= C (1+|x-k|)^(-s)
    that every member is supposed to satisfy; a validation pass measures it.
    """

    family: str
    d: int
    claimed_C: float
    claimed_s: float
    params: dict = field(default_factory=dict)
    perturbations: tuple = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        if self.claimed_C < 1.0:
            raise ValueError(f"claimed_C must be >= 1, got {self.claimed_C}")
        object.__setattr__(self, "perturbations",
                           _normalize_perturbations(self.perturbations, self.d))
        p = dict(self.params)
        if self.family == "polynomial-bump":
            if p.get("s", 0.0) <= 0.0:
                raise ValueError("polynomial-bump needs exponent parameter s > 0")
        elif self.family == "gaussian":
            if p.get("sigma", 0.0) <= 0.0:
                raise ValueError("gaussian needs width parameter sigma > 0")
        elif self.family == "bspline-order-m":
            order = p.get("order")
            if order is None or int(order) < 1 or int(order) != order:
                raise ValueError("bspline-order-m needs integer order >= 1")
            p["order"] = int(order)
        object.__setattr__(self, "params", p)

    def perturbation_of(self, k) -> np.ndarray:
        k = tuple(int(c) for c in np.atleast_1d(k))
        for node, delta in self.perturbations:
            if node == k:
                return np.asarray(delta, dtype=float)
        return np.zeros(self.d)

    @property
    def generator(self) -> Callable[[np.ndarray], np.ndarray]:
        """The un-translated generator, evaluated on (..., d) arrays."""
        if self.family == "polynomial-bump":
            s = float(self.params["s"])
            return lambda y: np.power(1.0 + max_norm(y), -s)
        if self.family == "gaussian":
            sig = float(self.params["sigma"])
            return lambda y: np.exp(-np.sum(y * y, axis=-1) / (2.0 * sig * sig))
        if self.family == "bspline-indicator":
            order = 1
        else:
            order = int(self.params["order"])

        def spline(y: np.ndarray) -> np.ndarray:
            out = np.ones(y.shape[:-1])
            for i in range(self.d):
                out = out * _bspline_1d(y[..., i], order)
            return out

        return spline

    @property
    def support_radius(self) -> float | None:
        """Max-norm radius around the node containing the support, or None."""
        if self.family in ("bspline-indicator", "bspline-order-m"):
            order = 1 if self.family == "bspline-indicator" else int(self.params["order"])
            shift = max((max(abs(c) for c in delta) for _, delta in self.perturbations),
                        default=0.0)
            return order + shift
        return None


@dataclass(frozen=True)
class Member:
    """One evaluatable basis function f_k = amplitude * phi(. - k - delta_k)."""

    node: tuple
    center: np.ndarray
    generator: Callable
    amplitude: float
    envelope_C: float
    envelope_s: float
    support_radius: float | None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            x = x.reshape(1)
        if x.shape[-1] != self.center.shape[0]:
            raise ValueError(f"points must have last axis of size {self.center.shape[0]}")
        return self.amplitude * self.generator(x - self.center)


class BasisSet:
    """Indexed family of localized functions over a lattice window."""

    def __init__(self, spec: GeneratorSpec, window: LatticeWindow, amplitude: float = 1.0):
        if spec.d != window.d:
            raise ValueError(f"spec dimension {spec.d} != window dimension {window.d}")
        self.spec = spec
        self.window = window
        self.amplitude = float(amplitude)
        gen = spec.generator
        self._members = {}
        for k in window.indices:
            node = tuple(int(c) for c in k)
            center = np.asarray(k, dtype=float) + spec.perturbation_of(k)
            self._members[node] = Member(
                node=node,
                center=center,
                generator=gen,
                amplitude=self.amplitude,
                envelope_C=abs(self.amplitude) * spec.claimed_C,
                envelope_s=spec.claimed_s,
                support_radius=spec.support_radius,
            )

    def __len__(self) -> int:
        return self.window.size

    def member(self, k) -> Member:
        node = tuple(int(c) for c in np.atleast_1d(k))
        try:
            return self._members[node]
        except KeyError:
            raise IndexError(f"node {node} outside window N={self.window.N}") from None

    def members(self) -> list:
        return [self._members[tuple(int(c) for c in k)] for k in self.window.indices]

    def evaluate(self, k, x):
        """Value of f_k at point(s) x; scalar in, scalar out."""
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0 or (x.ndim == 1 and self.window.d > 1)
        if x.ndim == 0:
            x = x.reshape(1, 1)
        elif x.ndim == 1 and self.window.d == 1:
            x = x.reshape(-1, 1)
        out = self.member(k)(x)
        return float(out.reshape(-1)[0]) if scalar else out

    def sample(self, k, grid: Grid) -> np.ndarray:
        """f_k at every grid point, shape (n_points,)."""
        return self.member(k)(grid.points)

    def sample_all(self, grid: Grid) -> np.ndarray:
        """All members at all grid points, shape (window.size, n_points)."""
        total = self.window.size * grid.n_points
        if total > 8e7:
            raise MemoryError(f"sample matrix would hold {total:.2g} entries")
        out = np.empty((self.window.size, grid.n_points))
        for row, k in enumerate(self.window.indices):
            out[row] = self._members[tuple(int(c) for c in k)](grid.points)
        return out

    def scaled(self, alpha: float) -> "BasisSet":
        """The family {alpha * f_k} on the same window."""
        return BasisSet(self.spec, self.window, amplitude=self.amplitude * alpha)


def make_basis(spec: GeneratorSpec, window: LatticeWindow) -> BasisSet:
    """Build one evaluatable function per window node, translated to k + delta_k."""
    for node, _ in spec.perturbations:
        if not window.contains(node):
            raise ValueError(f"perturbed node {node} lies outside the window")
    return BasisSet(spec, window)


def measure_decay(basis: BasisSet, k, grid: Grid, u: float,
                  method: str = "max-envelope") -> EnvelopeFit:
    """Envelope of |f_k| against the max-norm distance to node k.

    The grid must cover at least |x - k| <= 8 so that the envelope is
    probed well beyond the unit cell.
    """
    node = np.asarray(np.atleast_1d(k), dtype=float)
    if grid.R - np.max(np.abs(node)) < 8.0 - 1e-9:
        raise ValueError("grid must cover |x - k| <= 8 around the node")
    values = basis.sample(k, grid)
    radii = max_norm(grid.points - node)
    return fit_envelope(values, radii, u, method=method)


def validate_claimed_envelope(basis: BasisSet, grid: Grid, rtol: float = 1e-12):
    """Measured envelope constants at claimed_s, checked against claimed_C.

    Returns {node: measured_constant}; raises if any member exceeds its claim.
    """
    spec = basis.spec
    nodes = [(0,) * spec.d] + [node for node, _ in spec.perturbations]
    measured = {}
    for node in dict.fromkeys(nodes):
        fit = measure_decay(basis, node, grid, spec.claimed_s)
        measured[node] = fit.constant
        bound = abs(basis.amplitude) * spec.claimed_C
        if fit.constant > bound * (1.0 + rtol):
            raise ValueError(
                f"measured envelope constant {fit.constant:.6g} at node {node} "
                f"exceeds claimed {bound:.6g}")
    return measured
