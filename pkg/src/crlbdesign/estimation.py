"""Extended Kalman filter for scalar linear measurements.

With scalar measurements the gain needs a scalar division only, and the
covariance update is the CRLB measurement update itself.
"""
from dataclasses import dataclass

import numpy as np

from .information import crlb_measurement_update, crlb_propagate
from .systems import DEFAULT_INTEGRATOR


@dataclass(frozen=True)
class EkfState:
    x: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.shape != (x.size, x.size):
            raise ValueError("covariance shape does not match the state")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "sigma", sigma)


def ekf_predict(system, st, tau, cfg=DEFAULT_INTEGRATOR):
    # linearise at the pre-prediction estimate
    x_next, jac = system.flow_and_jacobian(st.x, tau, cfg)
    return EkfState(x_next, crlb_propagate(st.sigma, jac))


def ekf_update(st, u, y, noise):
    u = np.asarray(u, dtype=float)
    su = st.sigma @ u
    den = noise.norm_sq(u) + float(u @ su)
    x = st.x + su * ((y - float(u @ st.x)) / den)
    return EkfState(x, crlb_measurement_update(st.sigma, u, noise))


def simulate_measurement(rng, x_true, u, noise):
    """``u^T (x + xi)`` with independent Gaussian ``xi`` of the model variances."""
    xi = rng.standard_normal(noise.dimension) * np.sqrt(noise.variances)
    return float(np.asarray(u, dtype=float) @ (np.asarray(x_true, dtype=float) + xi))
