"""Relative cost benchmarks.

Only scaling behaviour is of interest here: the collapse policy per decision
as the dimension grows, the DP baseline initialisation as the number of
samples grows, and the compiled kernels under each backend. Every timing is
the minimum over ``repeats`` runs.
"""
import json
import os
import subprocess
import sys
import time

import numpy as np

from . import _accel
from . import _kernels as K
from .dp import DpConfig, DpSampleSet, build_action_set, value_iteration
from .information import NoiseModel
from .policies import AscentConfig, CollapseObjective, CollapsePolicy, gradient_ascent
from .systems import AugmentedVanDerPol, VanDerPol


def min_time(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def fit_exponent(sizes, times):
    """Slope of log(time) against log(size)."""
    return float(np.polyfit(np.log(sizes), np.log(times), 1)[0])


def time_collapse_decisions(dims, decisions=10, horizon=10.0, repeats=5):
    """Seconds per collapse decision (Jacobian at ``horizon`` plus closed form) on the augmented oscillator."""
    out = []
    for m in dims:
        system = AugmentedVanDerPol(m)
        rng = np.random.default_rng(0)
        states = [rng.standard_normal(m) for _ in range(decisions)]
        sigma, noise = np.eye(m), NoiseModel.iid(m)
        policy = CollapsePolicy(horizon)
        policy.decide(system, states[0], sigma, noise, rng)  # warm-up / compile

        def run():
            for x in states:
                policy.decide(system, x, sigma, noise, rng)

        out.append((m, min_time(run, repeats) / decisions))
    return out


def time_ascent(dims, steps=100, repeats=5):
    out = []
    for m in dims:
        rng = np.random.default_rng(0)
        a = rng.standard_normal((m, m))
        v = np.zeros(m)
        v[0] = 1.0
        obj = CollapseObjective(a @ a.T / m + np.eye(m), NoiseModel.iid(m), v)
        cfg = AscentConfig(steps=steps, step_scale="auto")
        gradient_ascent(obj, cfg, rng)
        out.append((m, min_time(lambda: gradient_ascent(obj, cfg, rng), repeats)))
    return out


def time_dp_init(sizes, actions=31, iterations=100, d_max=1.0, dt=0.05, repeats=3):
    """Seconds to build the transition operator and run value iteration on Van der Pol."""
    system = VanDerPol(1.0)
    noise = NoiseModel.iid(2)
    cfg = DpConfig(0.99, d_max, build_action_set(2, np.pi / actions), iterations, dt)
    out = []
    for n in sizes:
        samples = DpSampleSet.draw(np.random.default_rng(n), 2, n, np.array([[1.0, 1.0]]))
        out.append((n, min_time(lambda: value_iteration(samples, cfg, system, noise), repeats)))
    return out


def time_kernels(repeats=5):
    """Per-call timings of the hot kernels under the active backend."""
    rng = np.random.default_rng(0)
    aug = AugmentedVanDerPol(16)
    x = rng.standard_normal(16)
    aug.flow_jacobian(x, 1.0)
    m = 8
    a = rng.standard_normal((m, m))
    d = a @ a.T / m + 2 * np.eye(m)
    g = (a @ a.T / m)[:1]
    u0 = np.ones(m) / np.sqrt(m)
    K.gradient_ascent(g, np.ones(1), d, u0, 1.0, 2.0 / 3.0, 10)
    pts = rng.standard_normal((2000, 9))
    q = rng.standard_normal(9)
    K.row_distances(pts, q)
    return [
        ("flow_jacobian_aug16_T10", min_time(lambda: aug.flow_jacobian(x, 10.0), repeats)),
        ("gradient_ascent_m8_c1000", min_time(lambda: K.gradient_ascent(g, np.ones(1), d, u0, 1.0, 2.0 / 3.0, 1000),
                                              repeats)),
        ("row_distances_2000x9", min_time(lambda: K.row_distances(pts, q), repeats)),
    ]


def compare_backends(repeats=5):
    """Run :func:`time_kernels` in one subprocess per backend; returns ``{backend: [(name, s)]}``."""
    results = {}
    for disable in ("0", "1"):
        env = dict(os.environ, **{_accel.ENV_FLAG: disable})
        code = ("import json, crlbdesign.bench as b, crlbdesign._accel as a;"
                f"print(json.dumps([a.BACKEND, b.time_kernels({int(repeats)})]))")
        proc = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        backend, rows = json.loads(proc.stdout.strip().splitlines()[-1])
        results[backend] = [tuple(r) for r in rows]
    return results


def bench(dims=(2, 8, 32), sizes=(50, 100, 200), backends=False, repeats=5):
    """Rows ``(benchmark, backend, size, seconds)`` for CSV emission."""
    rows = []
    for m, s in time_collapse_decisions(dims, repeats=repeats):
        rows.append(("collapse_decision", _accel.BACKEND, m, s))
    for m, s in time_ascent(dims, repeats=repeats):
        rows.append(("ascent_100_steps", _accel.BACKEND, m, s))
    for n, s in time_dp_init(sizes, repeats=min(repeats, 3)):
        rows.append(("dp_init", _accel.BACKEND, n, s))
    if backends:
        for backend, timings in compare_backends(repeats).items():
            for name, s in timings:
                rows.append((name, backend, 0, s))
    return rows
