import numpy as np
import pytest

from crlbdesign.systems import IntegratorConfig

TIGHT = IntegratorConfig(rtol=1e-12, atol=1e-12, max_steps=2_000_000)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def fd_jacobian(system, x, tau, h=1e-5, cfg=TIGHT):
    """Central finite differences of the flow, integrated at tight tolerance."""
    x = np.asarray(x, dtype=float)
    cols = []
    for e in np.eye(len(x)):
        cols.append((system.flow(x + h * e, tau, cfg) - system.flow(x - h * e, tau, cfg)) / (2 * h))
    return np.column_stack(cols)


def random_pd(rng, m, scale=1.0):
    a = rng.standard_normal((m, m))
    return scale * (a @ a.T / m + 0.1 * np.eye(m))


def random_psd(rng, m, rank):
    a = rng.standard_normal((m, rank))
    return a @ a.T
