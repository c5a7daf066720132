"""Experiment pipeline: basis -> Gramian -> duals -> constants -> verdicts.

Runs every shipped family through assembly, finite-section inversion, dual
synthesis, and envelope measurement, then calibrates the suite-level
constants and evaluates every invariant with a pass/fail verdict.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import constants as cst
from . import duals as du
from . import gramian as gr
from . import lattice as lat
from .errors import ConfigError

DEFAULT_TOLERANCES = {
    "inversion": 1e-8,
    "biorthogonality": 1e-6,
    "bound_slack": 1e-6,       # multiplicative slack on the 1/A bounds
    "riesz_rtol": 1e-6,
    "scaling_rtol": 1e-10,
    "leibniz": 1e-13,
    "interlacing": 1e-10,
    "claimed_rtol": 1e-12,
    "schur_slack": 1e-10,
    "w_tol": 1e-10,
    "convolution_band": 0.05,  # allowed deviation of normalized constants from mean
}


@dataclass
class FamilySettings:
    name: str
    spec: lat.GeneratorSpec


@dataclass
class RunSettings:
    """Validated run configuration; hypothesis checks happen up front."""

    name: str
    d: int
    radii: tuple
    grid_h: float
    grid_R: float
    t: int
    families: list
    seed: int = 1234
    out_dir: str = "out"
    tolerances: dict = field(default_factory=dict)
    bounds_dims: tuple = ()          # dimensions for the constants stage
    convolution_windows: dict = field(default_factory=lambda: {1: 128, 2: 16})
    dual_export_radius: int | None = None

    def __post_init__(self):
        tol = dict(DEFAULT_TOLERANCES)
        tol.update(self.tolerances)
        self.tolerances = tol
        if any(v <= 0 for v in tol.values()):
            raise ConfigError("all tolerances must be positive")
        self.radii = tuple(int(r) for r in self.radii)
        if len(self.radii) < 2 or sorted(self.radii) != list(self.radii) or \
                len(set(self.radii)) != len(self.radii):
            raise ConfigError(f"radii must be strictly increasing, got {self.radii}")
        if not self.bounds_dims:
            self.bounds_dims = (self.d,)
        if not self.families:
            raise ConfigError("at least one family is required")
        if self.grid_R < self.radii[-1] + 8:
            raise ConfigError(
                f"grid extent {self.grid_R} must reach 8 units past the largest "
                f"radius {self.radii[-1]}")
        for fam in self.families:
            if fam.spec.d != self.d:
                raise ConfigError(f"family {fam.name!r} has dimension {fam.spec.d} != {self.d}")
            # reject bad parameter sets before any heavy computation
            cst.validate_hypotheses(fam.spec.claimed_C, fam.spec.claimed_s, self.t, self.d)

    def grid(self) -> lat.Grid:
        return lat.Grid(h=self.grid_h, R=self.grid_R, d=self.d)


@dataclass
class Verdict:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""


@dataclass
class FamilyResult:
    name: str
    spec: lat.GeneratorSpec
    riesz: gr.RieszBounds
    C_meas: float
    C_base: float               # unperturbed generator's measured constant
    core_radius: int
    convergence: du.SectionConvergence
    biorth_residual: float
    gram_duals_residual: float
    dual_norm_max: float        # max_k ||g_k||^2 over the core
    lam_max_core: float
    D_emp: float                # max dual envelope constant at exponent t
    envelope_rows: list         # (k, exponent, constant, regression_exponent)
    inverse_decay: lat.EnvelopeFit
    alpha_t: float              # coefficient envelope constant at exponent t
    schur_ratio: float          # max_u schur(D^u M) / (C^2 W)
    schur_M: float
    spectral_M: float
    W_value: float
    scaling_rel_err: float
    bilinearity_err: float      # max |assemble(alpha f) - alpha^2 M|
    covariance_err: float       # translation covariance residual on the grid
    envelope_ordered: bool      # envelope constants nondecreasing in the exponent
    offdiag: lat.EnvelopeFit
    derivation_exact: float     # residual of D^1 D^1 vs D^2 on the Gramian
    dual_system: du.DualSystem
    gramian: gr.DecayMatrix
    sections: list
    elapsed: float

    @property
    def A_est(self) -> float:
        return self.riesz.A_est

    @property
    def B_est(self) -> float:
        return self.riesz.B_est


@dataclass
class SuiteResult:
    settings: RunSettings
    families: list
    E_cal: cst.ECalibration
    schur_constant: float
    schur_binding: str
    c_transfer: float
    binding_transfer: str
    lattice_sum_cal: dict
    convolution: dict           # d -> list of ConvolutionCalibration
    leibniz_worst: dict         # d -> residual
    recursion: dict             # family -> (measured, bound)
    w_honesty: tuple            # (delta, reported bound)
    verdicts: list
    timings: dict

    def verdict(self, name: str) -> Verdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)


def _measure_family_constant(basis: lat.BasisSet, grid: lat.Grid) -> float:
    spec = basis.spec
    nodes = [(0,) * spec.d] + [node for node, _ in spec.perturbations]
    return max(lat.measure_decay(basis, node, grid, spec.claimed_s).constant
               for node in dict.fromkeys(nodes))


def run_family(fam: FamilySettings, settings: RunSettings) -> FamilyResult:
    t0 = time.perf_counter()
    grid = settings.grid()
    t = settings.t
    tol = settings.tolerances
    window = lat.LatticeWindow(settings.d, settings.radii[-1])
    basis = lat.make_basis(fam.spec, window)

    lat.validate_claimed_envelope(basis, grid, rtol=tol["claimed_rtol"])
    C_meas = _measure_family_constant(basis, grid)
    if fam.spec.perturbations:
        bare = lat.GeneratorSpec(fam.spec.family, fam.spec.d, fam.spec.claimed_C,
                                 fam.spec.claimed_s, dict(fam.spec.params))
        bare_basis = lat.make_basis(bare, lat.LatticeWindow(settings.d, 0))
        C_base = lat.measure_decay(bare_basis, (0,) * settings.d, grid,
                                   fam.spec.claimed_s).constant
    else:
        C_base = C_meas

    secs = gr.sections(basis, settings.radii, grid)
    riesz = gr.riesz_bounds(secs, rtol=tol["riesz_rtol"])
    M = secs[-1]
    ds = du.invert_section(secs, tol=tol["inversion"])

    biorth = du.biorthogonality_residual(ds, basis, grid)
    gram_res = du.gram_duals_check(ds, grid)
    dual_norm = max(ds.coefficient(k, k) for k in ds.core_nodes())
    lam_core = float(np.linalg.eigvalsh(ds.core_block())[-1])

    envelope_rows = []
    D_emp = 0.0
    s = fam.spec.claimed_s
    for node in ds.core_nodes():
        for u in dict.fromkeys((float(t), float(s))):
            fit = du.dual_envelope(ds, node, u, grid)
            reg = du.dual_envelope(ds, node, u, grid, method="loglog-regression")
            envelope_rows.append((node, u, fit.constant, reg.exponent))
            if u == float(t):
                D_emp = max(D_emp, fit.constant)
    inverse_decay = du.coefficient_decay_fit(ds)

    W_value = cst.compute_W(s - t, settings.d, tol["w_tol"])
    schur_worst = max(gr.schur_bound(gr.apply_derivation(M, 1, u)) for u in range(t + 1))
    schur_ratio = schur_worst / (C_meas**2 * W_value)

    alpha_t = max(du.coefficient_tail_bound(ds, node, t)[0] for node in ds.core_nodes())

    # multiplicativity of the derivation on this Gramian; the composed and
    # direct powers differ only by one rounding of the entry product
    d1 = gr.apply_derivation(gr.apply_derivation(M, 1, 1), 1, 1)
    d2 = gr.apply_derivation(M, 1, 2)
    deriv_exact = float(np.max(np.abs(d1.entries - d2.entries)))
    deriv_scale = float(np.max(np.abs(d2.entries))) or 1.0
    deriv_exact /= deriv_scale

    # homogeneity: duals of {alpha f_k} must equal alpha^-1 g_k pointwise,
    # and the scaled Gramian must equal alpha^2 M entrywise
    alpha = 0.5
    scaled = basis.scaled(alpha)
    scaled_secs = gr.sections(scaled, settings.radii, grid)
    bilinearity_err = float(np.max(np.abs(scaled_secs[-1].entries
                                          - alpha**2 * M.entries)))
    ds_scaled = du.invert_section(scaled_secs, tol=tol["inversion"])
    origin = (0,) * settings.d
    g0 = ds.duals[origin]
    g0_scaled, _ = du.synthesize_dual(ds_scaled, scaled, origin, grid)
    scaling_err = float(np.max(np.abs(g0_scaled - g0 / alpha)) / np.max(np.abs(g0)))

    covariance_err = _translation_covariance(basis, grid)
    env_consts = [lat.measure_decay(basis, (0,) * settings.d, grid, u).constant
                  for u in (s / 2, 0.75 * s, s)]
    envelope_ordered = all(a <= b * (1 + 1e-14)
                           for a, b in zip(env_consts, env_consts[1:]))

    offdiag = gr.offdiag_fit(M, u=s)

    return FamilyResult(
        name=fam.name, spec=fam.spec, riesz=riesz, C_meas=C_meas, C_base=C_base,
        core_radius=ds.core_radius, convergence=ds.convergence,
        biorth_residual=biorth, gram_duals_residual=gram_res,
        dual_norm_max=dual_norm, lam_max_core=lam_core, D_emp=D_emp,
        envelope_rows=envelope_rows, inverse_decay=inverse_decay, alpha_t=alpha_t,
        schur_ratio=schur_ratio, schur_M=gr.schur_bound(M),
        spectral_M=gr.spectral_norm(M), W_value=W_value,
        scaling_rel_err=scaling_err, bilinearity_err=bilinearity_err,
        covariance_err=covariance_err, envelope_ordered=envelope_ordered,
        offdiag=offdiag,
        derivation_exact=deriv_exact, dual_system=ds, gramian=M, sections=secs,
        elapsed=time.perf_counter() - t0,
    )


def _translation_covariance(basis: lat.BasisSet, grid: lat.Grid) -> float:
    """Residual of f_b(x) = f_a(x - (b - a)) over the grid for two adjacent
    unperturbed nodes; zero perturbations make the families shift-invariant."""
    perturbed = {node for node, _ in basis.spec.perturbations}
    nodes = [tuple(int(c) for c in k) for k in basis.window.indices]
    candidates = [n for n in nodes if n not in perturbed]
    pairs = [(a, tuple(c + e for c, e in zip(a, (1,) + (0,) * (basis.window.d - 1))))
             for a in candidates]
    pairs = [(a, b) for a, b in pairs if b in candidates and basis.window.contains(b)]
    if not pairs:
        return 0.0
    a, b = pairs[0]
    shift = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    direct = basis.member(b)(grid.points)
    moved = basis.member(a)(grid.points - shift)
    return float(np.max(np.abs(direct - moved)))


def _leibniz_sweep(d: int, seed: int, trials: int = 100) -> float:
    """Worst Leibniz residual over seeded random symmetric 9x9 pairs."""
    window = lat.LatticeWindow(d, 4 if d == 1 else 1)
    rng = np.random.default_rng(seed)
    worst = 0.0
    n = window.size
    for _ in range(trials):
        p = rng.standard_normal((n, n))
        q = rng.standard_normal((n, n))
        P = gr.DecayMatrix(window, 0.5 * (p + p.T))
        Q = gr.DecayMatrix(window, 0.5 * (q + q.T))
        for h in range(1, d + 1):
            worst = max(worst, cst.leibniz_check(P, Q, h))
    return worst


def run_suite(settings: RunSettings) -> SuiteResult:
    timings = {}
    t_start = time.perf_counter()
    results = [run_family(fam, settings) for fam in settings.families]
    timings["families"] = time.perf_counter() - t_start

    t0 = time.perf_counter()
    cases = [cst.CalibrationCase(r.name, r.D_emp, r.C_meas, r.A_est,
                                 r.spec.claimed_s, settings.t, settings.d)
             for r in results]
    E_cal = cst.calibrate_E(cases)

    schur_constant = max(r.schur_ratio for r in results)
    schur_binding = max(results, key=lambda r: r.schur_ratio).name

    transfer = [(r.name, (r.D_emp / (r.alpha_t * r.C_meas)) ** (1.0 / settings.t))
                for r in results if r.D_emp > 0]
    binding_transfer, c_transfer = max(transfer, key=lambda item: item[1])

    recursion = {}
    for r in results:
        core_m = gr.DecayMatrix(lat.LatticeWindow(settings.d, r.core_radius),
                                r.dual_system.core_block(), symmetric=True)
        measured = gr.schur_bound(gr.apply_derivation(core_m, 1, settings.t))
        bound = cst.recursion_trace(r.A_est, r.C_meas, r.W_value, settings.t,
                                    schur_constant=schur_constant).final
        recursion[r.name] = (measured, bound)

    lattice_sum_cal = {d: cst.calibrate_lattice_sum_bound(d)
                       for d in settings.bounds_dims}
    convolution = {}
    for d in settings.bounds_dims:
        win = settings.convolution_windows.get(d, 16)
        convolution[d] = [cst.verify_convolution_discrete(float(d + du_), d, win)
                          for du_ in (1, 2, 4)]
    leibniz_worst = {d: _leibniz_sweep(d, settings.seed) for d in settings.bounds_dims}

    # honesty of the lattice-sum tail: doubling the radius moves the value
    # by less than the reported bracket width
    s_minus_t = min(r.spec.claimed_s for r in results) - settings.t
    ws = cst.w_sum(s_minus_t, settings.d, settings.tolerances["w_tol"])
    ws2 = cst.w_sum(s_minus_t, settings.d, settings.tolerances["w_tol"],
                    radius=2 * ws.radius)
    w_honesty = (abs(ws2.value - ws.value), ws.tail_bound)
    timings["bounds"] = time.perf_counter() - t0

    verdicts = _build_verdicts(settings, results, E_cal, schur_constant, recursion,
                               convolution, leibniz_worst, w_honesty, c_transfer)
    timings["total"] = time.perf_counter() - t_start
    return SuiteResult(settings=settings, families=results, E_cal=E_cal,
                       schur_constant=schur_constant, schur_binding=schur_binding,
                       c_transfer=c_transfer, binding_transfer=binding_transfer,
                       lattice_sum_cal=lattice_sum_cal, convolution=convolution,
                       leibniz_worst=leibniz_worst, recursion=recursion,
                       w_honesty=w_honesty, verdicts=verdicts, timings=timings)


def _build_verdicts(settings, results, E_cal, schur_constant, recursion, convolution,
                    leibniz_worst, w_honesty, suite_transfer) -> list:
    tol = settings.tolerances
    slack = 1.0 + tol["bound_slack"]
    verdicts = []

    def add(name, passed, value, threshold, detail=""):
        verdicts.append(Verdict(name, bool(passed), float(value), float(threshold), detail))

    for r in results:
        pre = f"{r.name}."
        add(pre + "biorthogonality", r.biorth_residual < tol["biorthogonality"],
            r.biorth_residual, tol["biorthogonality"])
        add(pre + "dual_norm_bound", r.dual_norm_max <= slack / r.A_est,
            r.dual_norm_max, slack / r.A_est, "max ||g_k||^2 vs 1/A")
        add(pre + "inverse_norm_bound", r.lam_max_core <= slack / r.A_est,
            r.lam_max_core, slack / r.A_est, "lambda_max of core coefficients vs 1/A")
        add(pre + "scaling_homogeneity", r.scaling_rel_err < tol["scaling_rtol"],
            r.scaling_rel_err, tol["scaling_rtol"])
        lo, hi = r.riesz.lambda_min, r.riesz.lambda_max
        inter = all(lo[i] >= lo[i + 1] - tol["interlacing"] for i in range(len(lo) - 1)) \
            and all(hi[i] <= hi[i + 1] + tol["interlacing"] for i in range(len(hi) - 1))
        add(pre + "interlacing", inter, 0.0, tol["interlacing"],
            f"radii {r.riesz.radii}")
        add(pre + "schur_dominates", r.schur_M >= r.spectral_M - tol["schur_slack"],
            r.spectral_M - r.schur_M, tol["schur_slack"])
        add(pre + "claimed_C", r.C_meas <= r.spec.claimed_C * (1 + tol["claimed_rtol"]),
            r.C_meas, r.spec.claimed_C)
        if r.spec.perturbations:
            bound = r.C_base * 1.5**r.spec.claimed_s
            add(pre + "perturbation_penalty", r.C_meas <= bound, r.C_meas, bound,
                "measured constant vs C (3/2)^s")
        if r.spec.family == "polynomial-bump" and \
                r.spec.claimed_s > settings.d + settings.t:
            add(pre + "inverse_decay_exponent", r.inverse_decay.exponent >= settings.t,
                r.inverse_decay.exponent, settings.t,
                f"shell regression over core radius {r.core_radius}")
        add(pre + "gram_duals", r.gram_duals_residual < tol["biorthogonality"],
            r.gram_duals_residual, tol["biorthogonality"])
        add(pre + "bilinearity", r.bilinearity_err == 0.0, r.bilinearity_err, 0.0,
            "assemble of the alpha-scaled family vs alpha^2 M")
        add(pre + "translation_covariance", r.covariance_err <= 1e-14,
            r.covariance_err, 1e-14)
        add(pre + "envelope_consistency", r.envelope_ordered, 0.0, 0.0,
            "envelope constants nondecreasing in the exponent")
        transfer_bound = suite_transfer**settings.t * r.alpha_t * r.C_meas
        add(pre + "coefficient_transfer",
            r.D_emp <= transfer_bound * (1 + 1e-12), r.D_emp, transfer_bound,
            "dual envelope vs c^t alpha C with the suite transfer constant")
        add(pre + "derivation_multiplicative", r.derivation_exact <= 1e-15,
            r.derivation_exact, 1e-15, "relative to the direct power")
        measured, bound = recursion[r.name]
        add(pre + "recursion_bound", measured <= bound, measured, bound,
            "schur(D^t inverse core) vs iterated bound")
        add(pre + "gramian_vs_A", r.A_est <= r.schur_M * (1 + tol["bound_slack"]),
            r.A_est, r.schur_M, "A <= ||M|| so 1 <= c A^-1 C^2 W")
        tb = cst.TheoreticalBound(C=r.C_meas, A=r.A_est, s=r.spec.claimed_s,
                                  t=settings.t, d=settings.d, E=E_cal.E_emp)
        add(pre + "dual_decay_domination", r.D_emp <= tb.D * (1 + 1e-9),
            r.D_emp, tb.D, "measured dual envelope vs theoretical D at E_emp")

    for d, worst in leibniz_worst.items():
        add(f"leibniz_exact.d{d}", worst < tol["leibniz"], worst, tol["leibniz"])
    for d, cals in convolution.items():
        norms = [c.normalized for c in cals]
        mean = sum(norms) / len(norms)
        dev = max(abs(x - mean) / mean for x in norms)
        add(f"convolution_u_stability.d{d}", dev <= tol["convolution_band"],
            dev, tol["convolution_band"],
            f"normalized constants {[round(x, 4) for x in norms]}")
    add("w_tail_honesty", w_honesty[0] <= w_honesty[1], w_honesty[0], w_honesty[1])
    w_vals = [cst.compute_W(settings.d + off, settings.d, tol["w_tol"])
              for off in (0.5, 1.0, 2.0, 4.0, 9.0)]
    add("w_monotone", all(a > b for a, b in zip(w_vals, w_vals[1:])),
        w_vals[0], w_vals[-1], "W decreasing over an exponent grid")
    base = cst.TheoreticalBound(C=2.0, A=0.5, s=settings.d + settings.t + 2.0,
                                t=settings.t, d=settings.d, E=1.25)
    monotone = (
        cst.TheoreticalBound(C=2.5, A=base.A, s=base.s, t=base.t, d=base.d,
                             E=base.E).D > base.D
        and cst.TheoreticalBound(C=base.C, A=base.A, s=base.s, t=base.t, d=base.d,
                                 E=1.5).D > base.D
        and cst.TheoreticalBound(C=base.C, A=0.8, s=base.s, t=base.t, d=base.d,
                                 E=base.E).D < base.D
        and cst.TheoreticalBound(C=base.C, A=base.A, s=base.s + 1.0, t=base.t,
                                 d=base.d, E=base.E).D < base.D)
    add("theoretical_D_monotone", monotone, 0.0, 0.0,
        "nondecreasing in C and E, nonincreasing in A and s")
    return verdicts
