import pytest

from dualdecay import lattice as lat
from dualdecay import pipeline as pl


def standard_families():
    return [
        pl.FamilySettings("indicator", lat.GeneratorSpec(
            "bspline-indicator", 1, claimed_C=32.0, claimed_s=5.0)),
        pl.FamilySettings("bump", lat.GeneratorSpec(
            "polynomial-bump", 1, claimed_C=1.0, claimed_s=5.0, params={"s": 5.0})),
        pl.FamilySettings("gauss", lat.GeneratorSpec(
            "gaussian", 1, claimed_C=6.0, claimed_s=5.0, params={"sigma": 0.5})),
        pl.FamilySettings("hat", lat.GeneratorSpec(
            "bspline-order-m", 1, claimed_C=50.0, claimed_s=5.0, params={"order": 2})),
        pl.FamilySettings("gauss-pert", lat.GeneratorSpec(
            "gaussian", 1, claimed_C=46.0, claimed_s=5.0, params={"sigma": 0.5},
            perturbations={(0,): (0.3,)})),
    ]


def suite_settings(N: int, radii) -> pl.RunSettings:
    return pl.RunSettings(
        name=f"suite_N{N}",
        d=1,
        radii=radii,
        grid_h=1.0 / 64,
        grid_R=N + 8,
        t=2,
        families=standard_families(),
        seed=1234,
        bounds_dims=(1,),
    )


@pytest.fixture(scope="session")
def d1_suite() -> pl.SuiteResult:
    """The five-family d=1 suite at window N=16."""
    return pl.run_suite(suite_settings(16, (4, 8, 12, 16)))


@pytest.fixture(scope="session")
def d1_suite_large() -> pl.SuiteResult:
    """The same suite at doubled window N=32."""
    return pl.run_suite(suite_settings(32, (8, 16, 24, 32)))
