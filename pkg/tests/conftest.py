import numpy as np
import pytest

from hybrid_irs.channel import Geometry, draw_channels
from hybrid_irs.model import HybridConfig, ReflectionState, random_mask


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_instance(seed, M=2, N=3, K=1, p_dbm=30.0, scale_A=1e3):
    """Seeded (ch, cfg, A, refl) with random (non-unit) reflection vectors."""
    rng = np.random.default_rng(seed)
    cfg = HybridConfig.from_dbm(M, N, random_mask(N, K, rng), p_dbm, p_dbm, p_dbm)
    ch = draw_channels(Geometry(), cfg, rng.integers(2**32))
    A = scale_A * crandn(rng, M, M)
    refl = ReflectionState(crandn(rng, N), crandn(rng, N))
    return ch, cfg, A, refl


@pytest.fixture
def instance():
    return random_instance(1234)


# Shared operating point of the long Monte Carlo checks: (M, N, K) = (2, 32, 4),
# P_s = P_i = P_r = 30 dBm, sigma^2 = -80 dBm, default geometry.
MC_TRIALS = 100
MC_SEED = 2024


def mc_template(**dbm):
    p = {"P_s": 30.0, "P_i": 30.0, "P_r": 30.0} | dbm
    return HybridConfig.from_dbm(2, 32, np.arange(32) < 4, p["P_s"], p["P_i"], p["P_r"])


@pytest.fixture(scope="session")
def rate_cache():
    """Per-trial rates shared by every test that runs the shared operating point."""
    from hybrid_irs.bench import RateCache

    return RateCache()


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")
