"""Experiment loop, paired-seed scaling runs and CSV output.

Random streams: every run derives three independent PCG64 streams from its
seed with ``numpy.random.SeedSequence(seed).spawn(3)``, used for the initial
state, the measurement noise and policy randomness respectively. Two runs
that differ only in the policy therefore see identical initial states and
identical noise draws.
"""
import logging
import math
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from .dp import DynamicProgrammingPolicy, load_table
from .estimation import EkfState, ekf_predict, ekf_update, simulate_measurement
from .information import NoiseModel, crlb_measurement_update, crlb_propagate
from .policies import AscentConfig, CollapsePolicy, RandomPolicy, objective_value, policy_decide
from .systems import DEFAULT_INTEGRATOR, IntegrationDiverged, make_system

log = logging.getLogger(__name__)

SYSTEM_DEFAULTS = {
    "linear2": {"dt": 0.01, "horizon": 10.0, "sigma0": 4.0, "gamma": 0.95},
    "static2": {"dt": 0.01, "horizon": 10.0, "sigma0": 4.0, "gamma": 0.99},
    "hopf": {"dt": 0.01, "horizon": 30.0, "sigma0": 4.0, "gamma": 0.99},
    "lorenz": {"dt": 0.01, "horizon": 1.0, "sigma0": 1.0, "gamma": 0.9},
    "vdp": {"dt": 0.05, "horizon": 10.0, "sigma0": 1.0, "gamma": 0.99},
    "augvdp": {"dt": 0.05, "horizon": 10.0, "sigma0": 1.0, "gamma": 0.99},
}

CSV_FIXED = ("step", "time", "policy", "trace_crlb", "trace_forecast", "err_norm")


@dataclass
class ExperimentConfig:
    system: str = "linear2"
    dim: int = None
    policy: str = "random"
    steps: int = 1000
    dt: float = None
    sigma2: float = 1.0
    horizon: float = None
    sigma0: object = None
    x0: object = None
    x0_variance: float = 4.0
    seed: int = 1234
    mode: str = "oracle"
    k: int = 1
    ascent_steps: int = 1000
    ascent_scale: object = "auto"
    gamma: float = None
    table: str = None

    def resolved(self):
        """Copy with system defaults filled in for every unset field."""
        if self.system not in SYSTEM_DEFAULTS:
            raise ValueError(f"unknown system id {self.system!r}")
        d = SYSTEM_DEFAULTS[self.system]
        out = replace(self)
        for key in ("dt", "horizon", "sigma0", "gamma"):
            if getattr(out, key) is None:
                setattr(out, key, d[key])
        if out.steps < 1 or not out.dt > 0:
            raise ValueError("steps must be >= 1 and dt > 0")
        if out.mode not in ("oracle", "ekf"):
            raise ValueError("mode must be 'oracle' or 'ekf'")
        if out.policy not in ("random", "collapse", "dp"):
            raise ValueError(f"unknown policy {out.policy!r}")
        return out


@dataclass
class RunRecord:
    policy: str
    dimension: int
    rows: list = field(default_factory=list)
    error: str = None

    @property
    def final_forecast(self):
        return self.rows[-1][4] if self.rows else math.nan

    def column(self, name):
        idx = CSV_FIXED.index(name)
        return np.array([r[idx] for r in self.rows])


def make_streams(seed):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(int(seed)).spawn(3)]


def _initial_sigma(sigma0, m):
    s = np.asarray(sigma0, dtype=float)
    if s.ndim == 0:
        return float(s) * np.eye(m)
    if s.shape != (m, m):
        raise ValueError("initial CRLB has the wrong shape")
    return 0.5 * (s + s.T)


def _psd_sqrt(a):
    w, v = np.linalg.eigh(a)
    return (v * np.sqrt(np.maximum(w, 0.0))) @ v.T


def build_policy(cfg, system):
    if cfg.policy == "random":
        return RandomPolicy()
    if cfg.policy == "collapse":
        asc = AscentConfig(steps=cfg.ascent_steps, step_scale=cfg.ascent_scale)
        return CollapsePolicy(cfg.horizon, k=cfg.k, ascent=asc)
    if cfg.table is None:
        raise ValueError("the dp policy needs a trained value table")
    table = load_table(cfg.table) if isinstance(cfg.table, str) else cfg.table
    if table.samples.dimension != system.dimension:
        raise ValueError("value table dimension does not match the system")
    return DynamicProgrammingPolicy(table)


def run_experiment(cfg, integrator=DEFAULT_INTEGRATOR):
    """Simulate one measurement campaign and record the bound after every measurement.

    Each step chooses ``u`` (from the true state in oracle mode, from the
    filter estimate in EKF mode), draws the measurement, updates the filter
    and the bound, records the row, then advances everything by ``dt``.
    The recorded bound is always transported with the Jacobian at the true
    state.
    """
    cfg = cfg.resolved()
    system = make_system(cfg.system, cfg.dim)
    m = system.dimension
    noise = NoiseModel.iid(m, cfg.sigma2)
    init_rng, noise_rng, policy_rng = make_streams(cfg.seed)

    if cfg.x0 is None:
        x = init_rng.normal(0.0, math.sqrt(cfg.x0_variance), m)
    else:
        x = np.asarray(cfg.x0, dtype=float).reshape(m)
    sigma = _initial_sigma(cfg.sigma0, m)
    est = None
    if cfg.mode == "ekf":
        est = EkfState(x + _psd_sqrt(sigma) @ init_rng.standard_normal(m), sigma.copy())

    policy = build_policy(cfg, system)
    record = RunRecord(policy.name, m)
    for step in range(cfg.steps):
        t = step * cfg.dt
        try:
            jac_t = system.flow_jacobian(x, cfg.horizon, integrator)
            if est is None:
                u = policy_decide(policy, system, x, sigma, noise, policy_rng, jacobian=jac_t)
            else:
                u = policy_decide(policy, system, est.x, est.sigma, noise, policy_rng)
            y = simulate_measurement(noise_rng, x, u, noise)
            err = math.nan
            if est is not None:
                est = ekf_update(est, u, y, noise)
                err = float(np.linalg.norm(est.x - x))
            sigma = crlb_measurement_update(sigma, u, noise)
            forecast = float(np.trace(crlb_propagate(sigma, jac_t)))
            record.rows.append((step, t, record.policy, float(np.trace(sigma)), forecast, err, np.array(u)))
            if step + 1 < cfg.steps:
                x, jac = system.flow_and_jacobian(x, cfg.dt, integrator)
                sigma = crlb_propagate(sigma, jac)
                if est is not None:
                    est = ekf_predict(system, est, cfg.dt, integrator)
        except IntegrationDiverged as exc:
            log.warning("run truncated at step %d: %s", step, exc)
            record.error = str(exc)
            record.rows.append((step, t, record.policy, math.nan, math.nan, math.nan, np.full(m, math.nan)))
            break
    return record


def run_scaling_experiment(dims, base_cfg, policies=("random", "collapse"), seeds=None):
    """Final forecast-bound trace per (dimension, policy, seed) on the augmented oscillator."""
    seeds = [base_cfg.seed] if seeds is None else list(seeds)
    table = []
    for m in dims:
        if not 2 <= m <= 64:
            raise ValueError("scaling dimensions must lie in [2, 64]")
        for seed in seeds:
            for name in policies:
                cfg = replace(base_cfg, system="augvdp", dim=m, policy=name, seed=seed)
                rec = run_experiment(cfg)
                table.append({"dim": m, "policy": name, "seed": seed, "final_trace": rec.final_forecast})
    return table


def _fmt(v):
    return format(float(v), ".17g")


def csv_header(dimension):
    return ",".join(CSV_FIXED + tuple(f"u_{i}" for i in range(dimension)))


def csv_lines(record):
    yield csv_header(record.dimension)
    for step, t, policy, tr, tf, err, u in record.rows:
        yield ",".join([str(step), _fmt(t), policy, _fmt(tr), _fmt(tf), _fmt(err)] + [_fmt(v) for v in u])


def emit_csv(record, path=None):
    """Write the record as CSV (LF line endings, 17 significant digits); ``None`` means stdout."""
    text = "".join(line + "\n" for line in csv_lines(record))
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    header = lines[0].split(",")
    m = len(header) - len(CSV_FIXED)
    rows = []
    policy = None
    for line in lines[1:]:
        if not line:
            continue
        f = line.split(",")
        policy = f[2]
        rows.append((int(f[0]), float(f[1]), f[2], float(f[3]), float(f[4]), float(f[5]),
                     np.array([float(v) for v in f[6:]])))
    return RunRecord(policy or "", m, rows)


def surface_panel(panel):
    """Objective configurations used for the 3-D surface plots (``"A"`` or ``"B"``)."""
    from .policies import CollapseObjective

    v = np.full(3, 3 ** -0.5)
    if panel == "A":
        sigma = np.full((3, 3), 0.1) + 0.9 * np.eye(3)
    elif panel == "B":
        sigma = np.eye(3) - 0.95 * np.outer(v, v)
    else:
        raise ValueError("panel must be 'A' or 'B'")
    return CollapseObjective(sigma, NoiseModel.iid(3, 1.0), v)


def emit_objective_surface(obj, resolution=1.0):
    """Objective on a latitude/longitude grid: rows ``(theta, phi, value)`` in radians.

    ``theta`` is the polar angle on ``[0, pi]`` inclusive and ``phi`` the
    azimuth on ``[0, 2 pi)``, both stepped by ``resolution`` degrees.
    """
    if obj.sigma.shape != (3, 3):
        raise ValueError("objective surfaces are only produced for 3-D systems")
    n_theta = int(round(180.0 / resolution))
    n_phi = int(round(360.0 / resolution))
    rows = []
    for i in range(n_theta + 1):
        th = math.pi * i / n_theta
        for j in range(n_phi):
            ph = 2 * math.pi * j / n_phi
            u = np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])
            rows.append((th, ph, objective_value(u, obj)))
    return rows
