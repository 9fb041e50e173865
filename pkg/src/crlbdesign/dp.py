"""Approximate dynamic programming baseline.

The value function ``J(x, Sigma)`` is represented on a product sample set
(state samples x PSD samples) and read off elsewhere by hinge-weighted local
averaging, falling back to the nearest sample. Distances on the product
space are the Euclidean state distance plus the Frobenius distance between
bounds. With the interpolation weights fixed, value iteration is a
``gamma``-contraction in the sup norm.
"""
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import _kernels as K
from .information import crlb_measurement_update, crlb_propagate, NoiseModel
from .systems import DEFAULT_INTEGRATOR, IntegratorConfig

TABLE_FORMAT = "crlbdesign.valuetable"
TABLE_VERSION = 1


def sample_haar_orthonormal(rng, m):
    """Haar-distributed orthogonal matrix via QR with the sign correction on diag(R)."""
    q, r = np.linalg.qr(rng.standard_normal((m, m)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def sample_psd(rng, m, rate=1.0, eigenvalues=None):
    """``Q^T diag(lam) Q`` with Haar ``Q`` and exponential(rate) eigenvalues."""
    if not rate > 0:
        raise ValueError("eigenvalue rate must be positive")
    q = sample_haar_orthonormal(rng, m)
    lam = rng.exponential(1.0 / rate, size=m) if eigenvalues is None else np.asarray(eigenvalues, float)
    out = (q.T * lam) @ q
    return 0.5 * (out + out.T)


def interpolate_local_average(points, values, query, d_max):
    """Hinge-weighted average of ``values`` around ``query``; nearest point if none within ``d_max``."""
    points = np.asarray(points, dtype=float)
    if points.shape[0] == 0:
        raise ValueError("interpolation needs at least one point")
    points = points.reshape(points.shape[0], -1)
    query = np.asarray(query, dtype=float).ravel()
    w = K.hinge_weights(K.row_distances(np.ascontiguousarray(points), query), float(d_max))
    return float(w @ np.asarray(values, dtype=float))


def expected_min_distance(rng, sampler, n, trials):
    """Monte Carlo estimate of the distance from a fresh draw to the nearest of ``n`` draws."""
    if n < 1 or trials < 1:
        raise ValueError("n and trials must be positive")
    total = 0.0
    for _ in range(trials):
        pts = np.array([np.ravel(sampler(rng)) for _ in range(n)])
        q = np.ravel(sampler(rng))
        total += float(np.min(K.row_distances(pts, q)))
    return total / trials


def psd_sampler(m, rate=1.0):
    return lambda rng: sample_psd(rng, m, rate)


def build_action_set(m, spacing=0.1, count=50, rng=None):
    """Candidate unit measurement vectors.

    In 2-D an angular grid ``0, spacing, ...`` on the half-open interval
    ``[0, pi)`` (``u`` and ``-u`` carry the same information). In higher
    dimensions ``count`` uniform random unit vectors.
    """
    if m == 2:
        if not spacing > 0:
            raise ValueError("spacing must be positive")
        angles = spacing * np.arange(int(np.ceil(np.pi / spacing)))
        angles = angles[angles < np.pi]
        return np.column_stack([np.cos(angles), np.sin(angles)])
    if m < 2:
        return np.ones((1, 1))
    rng = np.random.default_rng(0) if rng is None else rng
    g = rng.standard_normal((count, m))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


@dataclass
class DpSampleSet:
    psd_samples: np.ndarray
    state_samples: np.ndarray
    eigenvalue_rate: float = 1.0

    def __post_init__(self):
        self.psd_samples = np.asarray(self.psd_samples, dtype=float)
        self.state_samples = np.atleast_2d(np.asarray(self.state_samples, dtype=float))
        if self.psd_samples.ndim != 3 or len(self.psd_samples) == 0 or len(self.state_samples) == 0:
            raise ValueError("sample set needs at least one PSD and one state sample")
        m = self.state_samples.shape[1]
        if self.psd_samples.shape[1:] != (m, m):
            raise ValueError("PSD samples do not match the state dimension")
        for p in self.psd_samples:
            scale = max(1.0, float(np.max(np.abs(p))))
            if np.linalg.eigvalsh(p)[0] < -1e-10 * scale:
                raise ValueError("PSD sample has a negative eigenvalue")

    @classmethod
    def draw(cls, rng, m, n_psd, states, rate=1.0):
        psds = np.array([sample_psd(rng, m, rate) for _ in range(n_psd)])
        return cls(psds, states, rate)

    @property
    def dimension(self):
        return self.state_samples.shape[1]

    @property
    def size(self):
        return len(self.state_samples) * len(self.psd_samples)

    def sample(self, k):
        """Product sample ``k`` as ``(state, psd)``; ordering is state-major."""
        i, j = divmod(k, len(self.psd_samples))
        return self.state_samples[i], self.psd_samples[j]


@dataclass
class DpConfig:
    gamma: float
    d_max: float
    actions: np.ndarray
    iterations: int = 1000
    dt: float = 0.01
    integrator: IntegratorConfig = DEFAULT_INTEGRATOR

    def __post_init__(self):
        self.actions = np.atleast_2d(np.asarray(self.actions, dtype=float))
        if not 0 < self.gamma < 1:
            raise ValueError("discount must lie in (0, 1)")
        if not self.d_max > 0:
            raise ValueError("d_max must be positive")
        if self.iterations < 0 or not self.dt > 0:
            raise ValueError("iterations must be >= 0 and dt > 0")
        if not np.allclose(np.linalg.norm(self.actions, axis=1), 1.0, atol=1e-10):
            raise ValueError("actions must be unit vectors")


@dataclass
class ValueTable:
    samples: DpSampleSet
    values: np.ndarray
    config: DpConfig
    noise: NoiseModel
    system_id: str = None
    sup_diffs: list = field(default_factory=list)

    def weights(self, x, sigma):
        """Interpolation weights over all product samples for the query ``(x, sigma)``."""
        s = self.samples
        ds = K.row_distances(s.state_samples, np.asarray(x, dtype=float))
        flat = s.psd_samples.reshape(len(s.psd_samples), -1)
        dp = K.row_distances(flat, np.ascontiguousarray(sigma, dtype=float).ravel())
        dist = (ds[:, None] + dp[None, :]).ravel()
        return K.hinge_weights(dist, float(self.config.d_max))

    def value(self, x, sigma):
        return float(self.weights(x, sigma) @ self.values)


def _successors(table, x, sigma, system):
    cfg = table.config
    x_next, jac = system.flow_and_jacobian(x, cfg.dt, cfg.integrator)
    for u in cfg.actions:
        yield x_next, crlb_propagate(crlb_measurement_update(sigma, u, table.noise), jac)


def bellman_backup(table, sample, cfg, system, noise):
    """``Tr(Sigma) + gamma * min_u J(x+, Sigma+(u))`` read from the current table."""
    x, sigma = sample
    view = ValueTable(table.samples, table.values, cfg, noise)
    best = min(view.value(xn, sn) for xn, sn in _successors(view, x, sigma, system))
    return float(np.trace(sigma)) + cfg.gamma * best


def _batch_successor_psds(sigma, actions, noise, jac):
    su = actions @ sigma
    den = np.sum(noise.variances * actions * actions, axis=1) + np.sum(actions * su, axis=1)
    upd = sigma[None] - su[:, :, None] * su[:, None, :] / den[:, None, None]
    upd = 0.5 * (upd + upd.transpose(0, 2, 1))
    out = jac[None] @ upd @ jac.T[None]
    return 0.5 * (out + out.transpose(0, 2, 1))


def transition_operator(samples, cfg, system, noise):
    """Sparse ``(S*A, S)`` matrix of interpolation weights of every successor.

    Row ``k * A + a`` holds the weights of the successor of product sample
    ``k`` under action ``a``.
    """
    n_act = len(cfg.actions)
    n_psd = len(samples.psd_samples)
    flat = samples.psd_samples.reshape(n_psd, -1)
    rows, cols, vals = [], [], []
    for i, x in enumerate(samples.state_samples):
        x_next, jac = system.flow_and_jacobian(x, cfg.dt, cfg.integrator)
        ds = K.row_distances(samples.state_samples, x_next)
        for j, sigma in enumerate(samples.psd_samples):
            succ = _batch_successor_psds(sigma, cfg.actions, noise, jac).reshape(n_act, -1)
            dp = np.sqrt(np.sum((succ[:, None, :] - flat[None, :, :]) ** 2, axis=2))
            dist = (ds[None, :, None] + dp[:, None, :]).reshape(n_act, -1)
            w = np.maximum(0.0, cfg.d_max - dist)
            total = w.sum(axis=1)
            empty = total <= 0
            if np.any(empty):
                w[empty, np.argmin(dist[empty], axis=1)] = 1.0
                total[empty] = 1.0
            w /= total[:, None]
            r, c = np.nonzero(w)
            rows.append((i * n_psd + j) * n_act + r)
            cols.append(c)
            vals.append(w[r, c])
    rows, cols, vals = (np.concatenate(a) for a in (rows, cols, vals))
    return sparse.csr_matrix((vals, (rows, cols)), shape=(samples.size * n_act, samples.size))


def value_iteration(samples, cfg, system, noise, system_id=None, operator=None):
    """Synchronous value iteration from the zero table for ``cfg.iterations`` sweeps."""
    op = transition_operator(samples, cfg, system, noise) if operator is None else operator
    cost = np.array([np.trace(samples.sample(k)[1]) for k in range(samples.size)])
    n_act = len(cfg.actions)
    values = np.zeros(samples.size)
    diffs = []
    for _ in range(cfg.iterations):
        q = (op @ values).reshape(samples.size, n_act)
        new = cost + cfg.gamma * q.min(axis=1)
        diffs.append(float(np.max(np.abs(new - values))))
        values = new
    return ValueTable(samples, values, cfg, noise, system_id, diffs)


def dp_policy_decide(table, x, sigma, cfg, system, noise):
    """Action minimising ``Tr(Sigma+) + gamma * J(x+, Sigma+)``; lowest index wins ties."""
    view = ValueTable(table.samples, table.values, cfg, noise)
    scores = [np.trace(sn) + cfg.gamma * view.value(xn, sn)
              for xn, sn in _successors(view, x, sigma, system)]
    return cfg.actions[int(np.argmin(scores))].copy()


class DynamicProgrammingPolicy:
    name = "dp"

    def __init__(self, table):
        self.table = table

    def decide(self, system, x, sigma, noise, rng, jacobian=None):
        return dp_policy_decide(self.table, x, sigma, self.table.config, system, noise)


def save_table(table, path):
    """Write a value table as a NumPy ``.npz`` archive (format documented in the README)."""
    cfg = table.config
    meta = {
        "format": TABLE_FORMAT,
        "version": TABLE_VERSION,
        "system_id": table.system_id,
        "dimension": table.samples.dimension,
        "gamma": cfg.gamma,
        "d_max": cfg.d_max,
        "iterations": cfg.iterations,
        "dt": cfg.dt,
        "eigenvalue_rate": table.samples.eigenvalue_rate,
        "integrator": {"rtol": cfg.integrator.rtol, "atol": cfg.integrator.atol,
                       "max_steps": cfg.integrator.max_steps},
    }
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), actions=cfg.actions,
                 states=table.samples.state_samples, psds=table.samples.psd_samples,
                 values=table.values, noise_variances=table.noise.variances)


def load_table(path):
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != TABLE_FORMAT:
            raise ValueError(f"{path}: not a value table file")
        if meta.get("version") != TABLE_VERSION:
            raise ValueError(f"{path}: unsupported value table version {meta.get('version')}")
        samples = DpSampleSet(data["psds"], data["states"], meta["eigenvalue_rate"])
        cfg = DpConfig(meta["gamma"], meta["d_max"], data["actions"], meta["iterations"], meta["dt"],
                       IntegratorConfig(**meta["integrator"]))
        return ValueTable(samples, np.array(data["values"]), cfg,
                          NoiseModel(data["noise_variances"]), meta["system_id"])
