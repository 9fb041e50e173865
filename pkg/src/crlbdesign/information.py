"""Fisher information of scalar linear measurements and CRLB arithmetic.

The bound is only ever updated through the rank-one (Sherman-Morrison)
form, which stays valid when the bound is singular, as it routinely
becomes after transport through a collapsing flow Jacobian. No function in
this module inverts a matrix.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .systems import DEFAULT_INTEGRATOR

log = logging.getLogger(__name__)

PSD_TOL = 1e-10


class InvalidMeasurement(ValueError):
    pass


class DegenerateNoise(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    """Independent per-coordinate noise, described by its variances.

    The Fisher information of a scalar measurement only depends on the noise
    through these variances, for any natural exponential family.
    """

    variances: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.variances, dtype=float).ravel()
        if v.size == 0 or not np.all(v > 0) or not np.all(np.isfinite(v)):
            raise DegenerateNoise("noise variances must be finite and strictly positive")
        object.__setattr__(self, "variances", v)

    @classmethod
    def iid(cls, dimension, sigma2=1.0):
        return cls(np.full(dimension, float(sigma2)))

    @property
    def dimension(self):
        return self.variances.size

    @property
    def matrix(self):
        return np.diag(self.variances)

    def norm_sq(self, u):
        """``u^T Lambda u`` without forming the diagonal matrix."""
        u = np.asarray(u, dtype=float)
        return float(np.sum(self.variances * u * u))


def _as_measurement(u):
    u = np.asarray(u, dtype=float)
    if not np.any(u):
        raise InvalidMeasurement("measurement vector must be nonzero")
    return u


def fisher_info(u, noise):
    """``u u^T / (u^T Lambda u)``: rank one and invariant to rescaling ``u``."""
    u = _as_measurement(u)
    return np.outer(u, u) / noise.norm_sq(u)


def weighted_norm_sq(u, w):
    u = np.asarray(u, dtype=float)
    return float(u @ np.asarray(w, dtype=float) @ u)


def symmetrize(a):
    return 0.5 * (a + a.T)


def crlb_measurement_update(sigma, u, noise):
    """Bound after one more scalar measurement along ``u``.

    ``Sigma - Sigma u u^T Sigma / (u^T Lambda u + u^T Sigma u)``, which equals
    ``(Sigma^-1 + I(u))^-1`` when Sigma is invertible and acts on its range
    when it is not.
    """
    u = _as_measurement(u)
    sigma = np.asarray(sigma, dtype=float)
    su = sigma @ u
    den = noise.norm_sq(u) + float(u @ su)
    if den <= 1e-300:
        raise DegenerateNoise("measurement update denominator vanished")
    return symmetrize(sigma - np.outer(su, su) / den)


def crlb_propagate(sigma, jac):
    jac = np.asarray(jac, dtype=float)
    return symmetrize(jac @ np.asarray(sigma, dtype=float) @ jac.T)


def forecast_crlb_trace(system, x, sigma, horizon, cfg=DEFAULT_INTEGRATOR, jacobian=None):
    """Trace of the bound transported ``horizon`` time units ahead from ``x``.

    ``jacobian`` may be supplied when the caller already holds the flow
    Jacobian at ``(x, horizon)``.
    """
    if jacobian is None:
        jacobian = system.flow_jacobian(x, horizon, cfg)
    return float(np.trace(crlb_propagate(sigma, jacobian)))


def clip_psd(sigma):
    """Project onto the PSD cone if round-off pushed an eigenvalue below tolerance."""
    sigma = symmetrize(np.asarray(sigma, dtype=float))
    scale = max(float(np.max(np.abs(sigma))), 1.0)
    w, v = np.linalg.eigh(sigma)
    if w[0] >= -PSD_TOL * scale:
        return sigma
    log.info("clipping negative CRLB eigenvalue %.3e", w[0])
    return symmetrize((v * np.maximum(w, 0.0)) @ v.T)
