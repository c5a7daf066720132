import numpy as np
import pytest

from dualdecay import artifacts
from dualdecay import pipeline as pl
from dualdecay.errors import ConfigError, HypothesisViolation
from dualdecay.lattice import GeneratorSpec

from conftest import standard_families


def test_suite_all_verdicts_pass(d1_suite):
    failed = [v.name for v in d1_suite.verdicts if not v.passed]
    assert not failed, failed
    assert d1_suite.passed


def test_every_family_invariant_reported(d1_suite):
    names = {v.name for v in d1_suite.verdicts}
    per_family = ("biorthogonality", "dual_norm_bound", "inverse_norm_bound",
                  "scaling_homogeneity", "interlacing", "schur_dominates",
                  "claimed_C", "gram_duals", "bilinearity", "translation_covariance",
                  "envelope_consistency", "coefficient_transfer",
                  "derivation_multiplicative", "recursion_bound", "gramian_vs_A",
                  "dual_decay_domination")
    for fam in d1_suite.families:
        for inv in per_family:
            assert f"{fam.name}.{inv}" in names, (fam.name, inv)
    assert "gauss-pert.perturbation_penalty" in names
    assert "bump.inverse_decay_exponent" in names
    for suite_inv in ("leibniz_exact.d1", "convolution_u_stability.d1",
                      "w_tail_honesty", "w_monotone", "theoretical_D_monotone"):
        assert suite_inv in names


def test_report_dict_numbers_trace_to_results(d1_suite):
    report = artifacts.report_dict(d1_suite)
    for fam in d1_suite.families:
        entry = report["families"][fam.name]
        assert entry["A_est"] == fam.A_est
        assert entry["D_emp"] == fam.D_emp
        assert entry["core_radius"] == fam.core_radius
        assert entry["biorthogonality_residual"] == fam.biorth_residual
    assert report["calibration"]["E_emp"] == d1_suite.E_cal.E_emp
    assert "timings" in report
    assert len(report["invariants"]) == len(d1_suite.verdicts)


def test_family_results_sane(d1_suite):
    for fam in d1_suite.families:
        assert 0 < fam.A_est <= fam.B_est
        assert fam.core_radius >= 1
        assert fam.C_meas <= fam.spec.claimed_C * (1 + 1e-12)
        assert fam.biorth_residual < 1e-12
        assert np.isfinite(fam.D_emp) and fam.D_emp > 0


def test_settings_validation():
    fams = standard_families()
    with pytest.raises(ConfigError, match="strictly increasing"):
        pl.RunSettings(name="x", d=1, radii=(8, 4), grid_h=1 / 64, grid_R=24,
                       t=2, families=fams)
    with pytest.raises(ConfigError, match="8 units past"):
        pl.RunSettings(name="x", d=1, radii=(4, 16), grid_h=1 / 64, grid_R=20,
                       t=2, families=fams)
    with pytest.raises(ConfigError, match="at least one family"):
        pl.RunSettings(name="x", d=1, radii=(4, 8), grid_h=1 / 64, grid_R=16,
                       t=2, families=[])
    with pytest.raises(HypothesisViolation, match="s > d\\+t"):
        bad = [pl.FamilySettings("thin", GeneratorSpec(
            "polynomial-bump", 1, 1.0, 3.0, params={"s": 3.0}))]
        pl.RunSettings(name="x", d=1, radii=(4, 8), grid_h=1 / 64, grid_R=16,
                       t=2, families=bad)


def test_hypotheses_checked_before_heavy_compute():
    # an enormous window would take minutes; the guard must fire first
    bad = [pl.FamilySettings("thin", GeneratorSpec(
        "polynomial-bump", 1, 1.0, 3.0, params={"s": 3.0}))]
    with pytest.raises(HypothesisViolation):
        pl.RunSettings(name="x", d=1, radii=(512, 1024), grid_h=1 / 64,
                       grid_R=1040, t=2, families=bad)


def test_suite_timings_recorded(d1_suite):
    assert d1_suite.timings["total"] > 0
    assert d1_suite.timings["families"] > 0
    for fam in d1_suite.families:
        assert fam.elapsed > 0
