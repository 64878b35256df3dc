import numpy as np
import pytest

from halfspectral import ModelParams

# June-02 column of the published parameter table (used as a realistic point).
JUNE02 = ModelParams(
    theta_knots=(1.0556262087602715, 1.1816083418260148, 1.2660682932086842, 1.1896106548426282),
    rho0=2.7184535523514923,
    nu0=1.1436376841231368,
    rho1=5.525591539265126,
    nu1=2.139742354992843,
    zeta00=12.45648190493277,
    zeta01=0.01652013151928776,
    zeta02=0.8395641019094884,
    zeta10=16.79317692040071,
    zeta11=0.011595522882194436,
    zeta12=1.383669202874107,
    beta=458.841071692587,
    tau=0.05645016419419213,
    xi00=3.578639178296149,
    xi01=7.076909630417635,
    xi1=0.0314327352404162,
    xi2=6.552778376515583,
    phi1=106.55630990556314,
    phi2=0.6359725490737751,
    alpha=0.00021387614883648138,
    eta_st=0.03591593048261951,
    eta_t=0.013877115982555983,
)


def random_params(rng, window=(0.0, 775.0), eta_st_min=0.01) -> ModelParams:
    """A random parameter point in a realistic, moderately scaled region."""
    u = rng.uniform
    return ModelParams(
        theta_knots=tuple(u(0.5, 2.0, size=4)),
        rho0=u(1.0, 4.0),
        nu0=u(0.6, 2.5),
        rho1=u(3.0, 6.0),
        nu1=u(0.6, 2.5),
        zeta00=u(8.0, 12.0),
        zeta01=u(0.02, 0.1),
        zeta02=u(0.5, 2.0),
        zeta10=u(8.0, 12.0),
        zeta11=u(0.02, 0.1),
        zeta12=u(0.5, 2.0),
        beta=u(350.0, 650.0),
        tau=u(0.02, 0.1),
        xi00=u(0.5, 4.0),
        xi01=u(0.5, 5.0),
        xi1=u(0.03, 0.3),
        xi2=u(1.0, 6.0),
        phi1=u(50.0, 200.0),
        phi2=u(0.5, 2.0),
        alpha=u(-0.01, 0.01),
        eta_st=u(eta_st_min, 0.2),
        eta_t=u(0.0, 0.05),
    ).with_window(*window)


def random_sites(rng, n, low=100.0, min_gap=30.0, max_gap=150.0) -> np.ndarray:
    """Increasing altitudes with gaps of at least ``min_gap`` meters."""
    return low + rng.uniform(0, 100) + np.concatenate(
        [[0.0], np.cumsum(rng.uniform(min_gap, max_gap, size=n - 1))]
    )


@pytest.fixture
def june02():
    return JUNE02


@pytest.fixture
def rng():
    return np.random.default_rng(20240602)
