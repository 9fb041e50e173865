"""Command line entry point: ``crlbdesign <command> [flags]``.

Settings are resolved as built-in defaults, then ``--config`` file entries
(``key=value`` per line, ``#`` comments, keys spelled like the long flags
with or without dashes), then flags given on the command line.

Exit status: 0 on success, 1 on runtime failure, 2 on usage errors.
"""
import argparse
import logging
import math
import sys
from dataclasses import replace

import numpy as np

from .harness import ExperimentConfig, emit_csv, emit_objective_surface, run_experiment, run_scaling_experiment, \
    surface_panel, SYSTEM_DEFAULTS

log = logging.getLogger("crlbdesign")


class UsageError(Exception):
    pass


def _floats(text):
    return [float(t) for t in str(text).split(",") if t.strip()]


def _ints(text):
    return [int(t) for t in str(text).split(",") if t.strip()]


def _bool(text):
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _common(p):
    p.add_argument("--config", help="key=value settings file")
    p.add_argument("--system", choices=sorted(SYSTEM_DEFAULTS))
    p.add_argument("--dim", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--out")


def build_parser():
    parser = argparse.ArgumentParser(prog="crlbdesign", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one measurement campaign and write per-step CSV")
    _common(p)
    p.add_argument("--policy", choices=["random", "collapse", "dp"])
    p.add_argument("--steps", type=int)
    p.add_argument("--mode", choices=["oracle", "ekf"])
    p.add_argument("--k", type=int, help="number of limiting directions for the collapse policy")
    p.add_argument("--sigma0", type=float, help="initial CRLB is sigma0 * I")
    p.add_argument("--x0", type=_floats, help="explicit initial state, comma separated")
    p.add_argument("--x0-variance", type=float)
    p.add_argument("--ascent-steps", type=int)
    p.add_argument("--table", help="value table written by dp-train (needed for --policy dp)")

    p = sub.add_parser("scaling", help="random vs collapse on the augmented oscillator across dimensions")
    _common(p)
    p.add_argument("--policy", help="comma separated policies (default random,collapse)")
    p.add_argument("--steps", type=int)
    p.add_argument("--dims", type=_ints)
    p.add_argument("--seeds", type=_ints)

    p = sub.add_parser("dp-train", help="run value iteration and save the value table")
    _common(p)
    p.add_argument("--psd-samples", type=int)
    p.add_argument("--state-samples", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--d-max", type=float)
    p.add_argument("--spacing", type=float, help="2-D action grid spacing in radians")
    p.add_argument("--actions", type=int, help="number of random actions for dimension >= 3")
    p.add_argument("--rate", type=float, help="exponential eigenvalue rate of PSD samples")

    p = sub.add_parser("surface", help="objective values on a latitude/longitude grid (3-D)")
    _common(p)
    p.add_argument("--panel", choices=["A", "B"])
    p.add_argument("--resolution", type=float, help="grid spacing in degrees")

    p = sub.add_parser("bench", help="relative timing of policies and kernels")
    _common(p)
    p.add_argument("--dims", type=_ints)
    p.add_argument("--sizes", type=_ints)
    p.add_argument("--repeats", type=int)
    p.add_argument("--backends", type=_bool, nargs="?", const=True,
                   help="also time the kernels under both numba and numpy backends")
    return parser


DEFAULTS = {
    "simulate": {"system": "linear2", "policy": "random", "steps": 1000, "sigma2": 1.0, "seed": 1234,
                 "mode": "oracle", "k": 1, "x0_variance": 4.0, "ascent_steps": 1000},
    "scaling": {"system": "augvdp", "policy": "random,collapse", "steps": 1000, "dt": 0.05, "sigma2": 1.0,
                "seed": 1234, "horizon": 10.0, "dims": [2, 4, 8, 16]},
    "dp-train": {"system": "linear2", "sigma2": 1.0, "seed": 1234, "psd_samples": 100, "state_samples": 1,
                 "iterations": 1000, "spacing": 0.1, "actions": 50, "rate": 1.0},
    "surface": {"panel": "A", "resolution": 1.0},
    "bench": {"dims": [2, 8, 32], "sizes": [50, 100, 200], "repeats": 5, "backends": False},
}


def read_config(path, sub_parser):
    """Parse a ``key=value`` file against the flags of ``sub_parser``."""
    actions = {a.dest: a for a in sub_parser._actions if a.option_strings and a.dest not in ("help", "config")}
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        dest = key.lstrip("-").replace("-", "_")
        if dest not in actions:
            raise UsageError(f"{path}:{n}: unknown key {key!r}")
        act = actions[dest]
        try:
            val = act.type(value) if act.type else value
        except ValueError as exc:
            raise UsageError(f"{path}:{n}: bad value for {key}: {exc}") from exc
        if act.choices and val not in act.choices:
            raise UsageError(f"{path}:{n}: {key} must be one of {sorted(act.choices)}")
        out[dest] = val
    return out


def resolve(command, args, sub_parser):
    settings = dict(DEFAULTS[command])
    if args.config:
        settings.update(read_config(args.config, sub_parser))
    for key, val in vars(args).items():
        if key in ("command", "config", "verbose") or val is None:
            continue
        settings[key] = val
    return settings


def _experiment_config(s):
    keys = ("system", "dim", "policy", "steps", "dt", "sigma2", "horizon", "sigma0", "x0", "x0_variance", "seed",
            "mode", "k", "ascent_steps", "gamma", "table")
    return ExperimentConfig(**{k: s[k] for k in keys if s.get(k) is not None})


def _write_rows(header, rows, path):
    def fmt(v):
        return format(v, ".17g") if isinstance(v, float) else str(v)

    text = header + "\n" + "".join(",".join(fmt(v) for v in r) + "\n" for r in rows)
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def cmd_simulate(s):
    if s["policy"] == "dp" and not s.get("table"):
        raise UsageError("--policy dp needs --table (train one with dp-train)")
    rec = run_experiment(_experiment_config(s))
    emit_csv(rec, s.get("out"))
    if rec.error:
        log.error("%s", rec.error)
        return 1
    return 0


def cmd_scaling(s):
    policies = [p.strip() for p in str(s["policy"]).split(",") if p.strip()]
    for p in policies:
        if p not in ("random", "collapse"):
            raise UsageError(f"scaling supports random and collapse policies, not {p!r}")
    base = ExperimentConfig(steps=s["steps"], dt=s["dt"], sigma2=s["sigma2"], horizon=s["horizon"], seed=s["seed"])
    table = run_scaling_experiment(s["dims"], base, policies, s.get("seeds"))
    _write_rows("dim,policy,seed,final_trace", [(r["dim"], r["policy"], r["seed"], r["final_trace"]) for r in table],
                s.get("out"))
    return 0


def dp_state_samples(system_id, system, rng, n, dt):
    """State samples: a fixed point for linear systems, Gaussian seeds advanced a few steps otherwise."""
    if system_id in ("linear2", "static2"):
        return np.ones((1, system.dimension))
    m = system.dimension
    seeds = max(1, n // 4) if system_id != "lorenz" else n
    pts = []
    for _ in range(seeds):
        x = rng.normal(0.0, 5.0, m)
        pts.append(x)
        if system_id != "lorenz":
            for _ in range(3):
                x = system.flow(x, dt)
                pts.append(x)
    return np.array(pts[:n])


def cmd_dp_train(s):
    from .dp import (DpConfig, DpSampleSet, build_action_set, expected_min_distance, psd_sampler, save_table,
                     value_iteration)
    from .information import NoiseModel
    from .systems import make_system

    if not s.get("out") or s["out"] == "-":
        raise UsageError("dp-train needs --out for the value table file")
    system_id = s["system"]
    system = make_system(system_id, s.get("dim"))
    m = system.dimension
    if m > 3:
        raise UsageError("the DP baseline is limited to dimension <= 3")
    d = SYSTEM_DEFAULTS[system_id]
    dt = s.get("dt") or d["dt"]
    gamma = s.get("gamma") or d["gamma"]
    rng = np.random.default_rng(s["seed"])
    states = dp_state_samples(system_id, system, rng, s["state_samples"], dt)
    samples = DpSampleSet.draw(rng, m, s["psd_samples"], states, s["rate"])
    d_max = s.get("d_max")
    if d_max is None:
        d_max = 2.0 * expected_min_distance(rng, psd_sampler(m, s["rate"]), s["psd_samples"], 200)
    actions = build_action_set(m, s["spacing"], s["actions"], rng)
    cfg = DpConfig(gamma, d_max, actions, s["iterations"], dt)
    table = value_iteration(samples, cfg, system, NoiseModel.iid(m, s["sigma2"]), system_id)
    save_table(table, s["out"])
    log.info("saved %d-sample value table to %s", samples.size, s["out"])
    return 0


def cmd_surface(s):
    rows = emit_objective_surface(surface_panel(s["panel"]), s["resolution"])
    _write_rows("theta,phi,value", rows, s.get("out"))
    return 0


def cmd_bench(s):
    from .bench import bench

    rows = bench(tuple(s["dims"]), tuple(s["sizes"]), bool(s["backends"]), s["repeats"])
    _write_rows("benchmark,backend,size,seconds", rows, s.get("out"))
    return 0


COMMANDS = {"simulate": cmd_simulate, "scaling": cmd_scaling, "dp-train": cmd_dp_train, "surface": cmd_surface,
            "bench": cmd_bench}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    sub_parser = parser._subparsers._group_actions[0].choices[args.command]
    try:
        settings = resolve(args.command, args, sub_parser)
        return COMMANDS[args.command](settings)
    except UsageError as exc:
        print(f"crlbdesign {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - surfaced as exit status 1
        print(f"crlbdesign {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
