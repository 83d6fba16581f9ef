import pytest

from faassim import Deterministic, Exponential, SimConfig

WARM_MEAN = 1.991
COLD_MEAN = 2.244


@pytest.fixture
def table1():
    """Exponential workload used throughout the steady-state examples."""
    return SimConfig(
        arrival=Exponential(0.9),
        warm_service=Exponential.from_mean(WARM_MEAN),
        cold_service=Exponential.from_mean(COLD_MEAN),
        expiration_threshold=600,
        horizon=1e6,
        skip_initial=100,
        seed=1,
    )


def periodic(period, warm=WARM_MEAN, cold=COLD_MEAN, **kw):
    kw.setdefault("expiration_threshold", 600)
    return SimConfig(Deterministic(period), Deterministic(warm), Deterministic(cold), **kw)
