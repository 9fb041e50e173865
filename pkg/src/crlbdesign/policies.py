"""Measurement selection policies.

The collapse policy looks at the right singular vectors of the flow
Jacobian at a long horizon ``T``: only those directions of the current
bound survive transport into the far future, so the measurement is chosen
to shrink the bound along them. For a single surviving direction the
optimum is available in closed form; for several, the weighted objective is
maximised by geodesic gradient ascent on the unit sphere restricted to the
informative subspace.
"""
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .systems import DEFAULT_INTEGRATOR

UNIT_TOL = 1e-8


def random_unit_vector(rng, dimension):
    """Uniform direction on the sphere (normalised standard Gaussian)."""
    while True:
        g = rng.standard_normal(dimension)
        n = np.linalg.norm(g)
        if n > 0:
            return g / n


def _fix_sign(v):
    idx = np.flatnonzero(np.abs(v) > 1e-12 * max(np.max(np.abs(v)), 1e-300))
    if idx.size and v[idx[0]] < 0:
        return -v
    return v


def limiting_right_singular_vectors(system, x, horizon, k=1, cfg=DEFAULT_INTEGRATOR, jacobian=None):
    """Top-``k`` right singular vectors (as rows) and singular values of the flow Jacobian.

    Each vector is signed so that its first nonzero entry is positive.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if not 1 <= k <= system.dimension:
        raise ValueError(f"k must lie in [1, {system.dimension}]")
    if jacobian is None:
        jacobian = system.flow_jacobian(x, horizon, cfg)
    _, s, vt = np.linalg.svd(jacobian)
    vecs = np.array([_fix_sign(row) for row in vt[:k]])
    return vecs, s[:k]


def closed_form_measurement(sigma, noise, v):
    """Normalised ``(Sigma + Lambda)^-1 Sigma v``; falls back to ``v`` when Sigma annihilates it."""
    sigma = np.asarray(sigma, dtype=float)
    v = np.asarray(v, dtype=float)
    w = np.linalg.solve(sigma + noise.matrix, sigma @ v)
    n = np.linalg.norm(w)
    if n < 1e-12:
        return v / np.linalg.norm(v)
    return w / n


def informative_subspace(sigma, noise, directions):
    """Orthonormal basis (columns) for span{(Sigma + Lambda)^-1 Sigma v_i}."""
    sigma = np.asarray(sigma, dtype=float)
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    if directions.shape[0] == 0:
        raise ValueError("need at least one direction")
    w = np.linalg.solve(sigma + noise.matrix, sigma @ directions.T)
    basis = []
    for col in w.T:
        r = col.copy()
        for b in basis:
            r -= (b @ r) * b
        for b in basis:  # second pass keeps the basis orthogonal to round-off
            r -= (b @ r) * b
        n = np.linalg.norm(r)
        if n >= 1e-10:
            basis.append(r / n)
    if not basis:
        return np.zeros((sigma.shape[0], 0))
    return np.column_stack(basis)


@dataclass
class CollapseObjective:
    """``sum_i w_i (v_i^T Sigma u)^2 / (u^T (Sigma + Lambda) u)`` over unit ``u``."""

    sigma: np.ndarray
    noise: object
    directions: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.directions = np.atleast_2d(np.asarray(self.directions, dtype=float))
        k = self.directions.shape[0]
        if k < 1:
            raise ValueError("objective needs at least one direction")
        if self.weights is None:
            self.weights = np.ones(k)
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.weights.shape != (k,) or np.any(self.weights < 0):
            raise ValueError("need one non-negative weight per direction")
        gram = self.directions @ self.directions.T
        if not np.allclose(gram, np.eye(k), atol=1e-8):
            raise ValueError("directions must be orthonormal")

    @property
    def numerator_rows(self):
        return self.directions @ self.sigma

    @property
    def denominator(self):
        return self.sigma + self.noise.matrix


def _check_unit(u):
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > UNIT_TOL:
        raise ValueError("objective is defined on unit vectors only")
    return u


def objective_value(u, obj):
    u = _check_unit(u)
    return float(K.objective_value(obj.numerator_rows, obj.weights, obj.denominator, u))


def objective_gradient_sphere(u, obj):
    """Euclidean gradient of the objective projected onto the tangent space at ``u``."""
    u = _check_unit(u)
    return K.sphere_gradient(obj.numerator_rows, obj.weights, obj.denominator, u)


def geodesic_step(u, s, step):
    """Move ``step * |s|`` radians along the great circle leaving ``u`` in direction ``s``."""
    return K.geodesic_step(np.asarray(u, dtype=float), np.asarray(s, dtype=float), float(step))


@dataclass
class AscentConfig:
    """Geodesic ascent schedule ``step_scale * i**-decay`` for ``steps`` iterations.

    ``step_scale="auto"`` uses the reciprocal of an upper bound on the
    objective, which keeps the final steps inside the stable range
    regardless of the scale of the bound. ``initial`` is a unit vector or
    ``"random"``.
    """

    steps: int = 1000
    step_scale: object = 1e4
    decay: float = 2.0 / 3.0
    initial: object = "random"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("ascent needs at least one step")
        if self.step_scale != "auto" and not float(self.step_scale) > 0:
            raise ValueError("step scale must be positive")


def _auto_step_scale(g, alpha, d):
    bound = float(np.sum(alpha * np.einsum("ij,ji->i", g, np.linalg.solve(d, g.T))))
    return 1.0 / bound if bound > 0 else 1.0


def _ascent(g, alpha, d, cfg, rng):
    m = d.shape[0]
    if isinstance(cfg.initial, str):
        u0 = random_unit_vector(rng, m)
    else:
        u0 = np.asarray(cfg.initial, dtype=float)
        u0 = u0 / np.linalg.norm(u0)
    scale = _auto_step_scale(g, alpha, d) if cfg.step_scale == "auto" else float(cfg.step_scale)
    return K.gradient_ascent(np.ascontiguousarray(g), alpha, np.ascontiguousarray(d), u0,
                             scale, float(cfg.decay), int(cfg.steps))


def gradient_ascent(obj, cfg=None, rng=None, basis=None, return_history=False):
    """Maximise the objective on the unit sphere, returning the best iterate.

    With ``basis`` (orthonormal columns) the search runs on the sphere of
    that subspace and the result is mapped back; an explicit ``initial``
    vector in the config is then given in subspace coordinates.
    """
    cfg = AscentConfig() if cfg is None else cfg
    rng = np.random.default_rng(0) if rng is None else rng
    g, d = obj.numerator_rows, obj.denominator
    if basis is not None:
        g, d = g @ basis, basis.T @ d @ basis
    u, _, history = _ascent(g, obj.weights, d, cfg, rng)
    if basis is not None:
        u = basis @ u
        u = u / np.linalg.norm(u)
    return (u, history) if return_history else u


class RandomPolicy:
    name = "random"

    def decide(self, system, x, sigma, noise, rng, jacobian=None):
        return random_unit_vector(rng, system.dimension)


@dataclass
class CollapsePolicy:
    """Measure along the direction that survives transport to ``horizon``.

    ``k > 1`` weights the singular directions by their normalised squared
    singular values at ``horizon``, a finite-horizon stand-in for the
    long-run averages that define the exact weights.
    """

    horizon: float
    k: int = 1
    ascent: AscentConfig = field(default_factory=AscentConfig)
    integrator: object = DEFAULT_INTEGRATOR
    name = "collapse"

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("collapse horizon must be positive")

    def decide(self, system, x, sigma, noise, rng, jacobian=None):
        vecs, svals = limiting_right_singular_vectors(system, x, self.horizon, self.k,
                                                      self.integrator, jacobian=jacobian)
        if self.k == 1:
            return closed_form_measurement(sigma, noise, vecs[0])
        basis = informative_subspace(sigma, noise, vecs)
        if basis.shape[1] == 0:
            return vecs[0]
        if basis.shape[1] == 1:
            return basis[:, 0]
        w = svals ** 2
        w = w / w.sum() if w.sum() > 0 else np.full(self.k, 1.0 / self.k)
        obj = CollapseObjective(sigma, noise, vecs, w)
        return gradient_ascent(obj, self.ascent, rng, basis=basis)


def policy_decide(policy, system, x, sigma, noise, rng, jacobian=None):
    """Dispatch to ``policy.decide``; every policy returns a unit vector."""
    return policy.decide(system, np.asarray(x, dtype=float), np.asarray(sigma, dtype=float),
                         noise, rng, jacobian=jacobian)
