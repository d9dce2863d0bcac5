import pytest

from roughmv import FractionalKernel, MarketParams, RateCurve, TimeGrid

# Hedge-term study parameters: sigma=0.3, kappa=0.3, theta=1.5, rho=-0.7,
# T=3, gamma=0.5, flat zero rate; variance level 0.04 (level does not enter
# the strategy coefficients).
STUDY = dict(sigma=0.3, kappa=0.3, theta=1.5, rho=-0.7, gamma=0.5, horizon=3.0)


def study_market(hurst: float, rho: float = STUDY["rho"], rate: float = 0.0,
                 kappa: float = STUDY["kappa"]) -> MarketParams:
    return MarketParams(
        nu0=0.04,
        kappa=kappa,
        phi=0.04,
        sigma=STUDY["sigma"],
        rho=rho,
        theta=STUDY["theta"],
        rate_curve=RateCurve.flat(rate),
        kernel=FractionalKernel.from_hurst(hurst),
    )


@pytest.fixture
def grid750() -> TimeGrid:
    return TimeGrid(0.0, 3.0, 750)


@pytest.fixture
def market_rough() -> MarketParams:
    return study_market(0.1)


@pytest.fixture
def market_smooth() -> MarketParams:
    return study_market(0.5)
