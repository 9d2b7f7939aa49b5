"""Command-line front end: ``ri1d <subcommand> [options]``.

Every run writes its artifacts into ``--out`` and exits with 0 when all
verdicts pass, 1 when an audit fails and 2 on usage or configuration errors.
"""

import argparse
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import constructor, energy, hypotheses, incremental, integrator, regularity
from .errors import ConfigError, DomainError, Ri1dError
from .report import dumps
from .trajectory import Event, load_trajectory, write_events_csv, write_trajectory_csv

SUBCOMMANDS = ("solve-energetic", "solve-local", "check-hypotheses", "audit", "construct", "gap")
BUILTINS = {
    "zero": energy.zero_model,
    "quadratic": energy.quadratic_model,
    "double_well": energy.double_well_model,
    "stiffening": energy.stiffening_model,
    "crossing": energy.crossing_model,
}


@dataclass
class RunConfig:
    command: str
    model: str = None
    driver: list = field(default_factory=list)
    trajectory: str = None
    dt: float = 1e-3
    T: float = None
    x0: float = None
    box: tuple = None
    resolution: int = None
    state_resolution: int = 2001
    tol: float = None
    out: str = "."
    seed: int = 0
    which: tuple = hypotheses.HYPOTHESES
    sbv: bool = False
    balance: bool = False
    ladder: list = None
    fraction: float = 0.1
    M: float = None

    def validate(self):
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("--dt must be positive")
        if self.tol is not None and not self.tol > 0:
            raise ConfigError("--tol must be positive")
        if self.T is not None and not self.T > 0:
            raise ConfigError("--T must be positive")
        if self.resolution is not None and self.resolution < 2:
            raise ConfigError("--resolution must be at least 2")
        if not 0 < self.fraction < 1:
            raise ConfigError("--fraction must lie in (0, 1)")
        if self.model is not None and self.model not in BUILTINS and not os.path.isfile(self.model):
            raise ConfigError(f"model file not found: {self.model}")
        if self.trajectory is not None and not os.path.isfile(self.trajectory):
            raise ConfigError(f"trajectory file not found: {self.trajectory}")
        if self.command in ("solve-energetic", "solve-local", "check-hypotheses", "audit", "gap") and self.model is None:
            raise ConfigError(f"{self.command} needs --model")
        if self.command == "audit" and self.trajectory is None:
            raise ConfigError("audit needs --trajectory")
        if self.command == "construct" and not self.driver:
            raise ConfigError("construct needs --driver")
        return self


def _floats(text, n, name):
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"{name} needs {n} comma-separated numbers") from None
    if len(vals) != n:
        raise argparse.ArgumentTypeError(f"{name} needs {n} comma-separated numbers")
    return vals


def build_parser():
    p = argparse.ArgumentParser(prog="ri1d", description="One-dimensional rate-independent system laboratory.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=True):
        if model:
            sp.add_argument("--model", help="model description file or built-in name (" + ", ".join(BUILTINS) + ")")
        sp.add_argument("--tol", type=float, help="audit tolerance (default depends on the command)")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, default=0, help="seed for sampled audits")

    for name in ("solve-energetic", "solve-local"):
        sp = sub.add_parser(name, help=f"{name.split('-')[1]} solution on a uniform grid")
        common(sp)
        sp.add_argument("--dt", type=float, default=1e-3, help="time step")
        sp.add_argument("--T", type=float, help="horizon (default: model horizon)")
        sp.add_argument("--x0", type=float, default=0.0, help="initial state")
        sp.add_argument("--balance", action="store_true", help="also audit the energy balance")

    sp = sub.add_parser("check-hypotheses", help="scan H1-H5 and estimate the stationary gap")
    common(sp)
    sp.add_argument("--box", type=lambda v: _floats(v, 4, "--box"), help="t0,t1,x0,x1")
    sp.add_argument("--resolution", type=int, default=256, help="time slices")
    sp.add_argument("--state-resolution", type=int, default=2001, help="state samples per slice")
    sp.add_argument("--which", default=",".join(hypotheses.HYPOTHESES), help="comma-separated subset of H1..H5")

    sp = sub.add_parser("audit", help="audit a trajectory CSV against a model")
    common(sp)
    sp.add_argument("--trajectory", required=True, help="trajectory CSV")
    sp.add_argument("--sbv", action="store_true", help="add the AC / jump / Cantor split")
    sp.add_argument("--balance", action="store_true", help="also audit the energy balance")
    sp.add_argument("--ladder", type=lambda v: [int(x) for x in v.split(",")], help="interval counts, coarse to fine")
    sp.add_argument("--fraction", type=float, default=0.1, help="Cantor share allowed for an SBV verdict")

    sp = sub.add_parser("construct", help="energy whose energetic solution is a given monotone driver")
    common(sp, model=False)
    sp.add_argument("--driver", nargs="+", required=True, help="driver file, or tokens such as: cantor level=5")
    sp.add_argument("--M", type=float, help="state bound (default max(2, 1 + max|u|))")
    sp.add_argument("--resolution", type=int, help="grid intervals for the emitted trajectory")

    sp = sub.add_parser("gap", help="smallest spacing of the stationary set")
    common(sp)
    sp.add_argument("--box", type=lambda v: _floats(v, 4, "--box"), help="t0,t1,x0,x1")
    sp.add_argument("--resolution", type=int, default=201, help="time samples")
    sp.add_argument("--state-resolution", type=int, default=4001, help="state samples per time")
    return p


def config_from_args(args):
    cfg = RunConfig(args.command)
    for key in ("model", "dt", "T", "x0", "box", "resolution", "state_resolution", "tol", "out", "seed",
                "sbv", "balance", "ladder", "fraction", "M", "trajectory"):
        if hasattr(args, key):
            setattr(cfg, key, getattr(args, key))
    if getattr(args, "driver", None):
        cfg.driver = list(args.driver)
    if getattr(args, "which", None):
        which = tuple(w.strip().upper() for w in args.which.split(",") if w.strip())
        bad = [w for w in which if w not in hypotheses.HYPOTHESES]
        if bad:
            raise ConfigError(f"unknown hypotheses: {', '.join(bad)}")
        cfg.which = which
    return cfg.validate()


def load_model_arg(name):
    if name in BUILTINS and not os.path.isfile(name):
        return BUILTINS[name]()
    return energy.load_model(name)


def _load_driver(tokens):
    if len(tokens) == 1 and os.path.isfile(tokens[0]):
        return constructor.load_driver(tokens[0])
    return constructor.parse_driver_spec(tokens)


# artifacts


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_plot_data(traj, path):
    """Two columns t x; jumps as comment lines ``# jump t left right``."""
    lines = ["# t x"]
    lines += [f"# jump {j.t:.17g} {j.left:.17g} {j.right:.17g}" for j in traj.jumps]
    lines += [f"{t:.17g} {x:.17g}" for t, x in zip(traj.times, traj.values)]
    _write(path, "\n".join(lines) + "\n")


def write_trajectory_artifacts(traj, out):
    with open(os.path.join(out, "trajectory.csv"), "w", encoding="utf-8", newline="") as fh:
        write_trajectory_csv(traj, fh)
    with open(os.path.join(out, "events.csv"), "w", encoding="utf-8", newline="") as fh:
        write_events_csv(traj, fh)
    write_plot_data(traj, os.path.join(out, "plot.dat"))


def _weak_json(w):
    return {
        "stability": {"worst": w.stability, "t": w.stability_time, "tol": w.tol, "passed": w.stability_ok},
        "upper_bound": {"worst": w.upper_bound.worst, "t1": w.upper_bound.t1, "t2": w.upper_bound.t2,
                        "tol": w.upper_bound.tol, "passed": w.upper_bound.passed},
    }


def _jumps_json(jumps):
    return [{"t": j.t, "left": j.left, "right": j.right, "size": j.size} for j in jumps]


# pipelines


def run_solve(cfg):
    model = load_model_arg(cfg.model)
    T = model.T if cfg.T is None else cfg.T
    if T > model.T * (1 + 1e-12):
        raise ConfigError(f"--T {T!r} exceeds the model horizon {model.T!r}")
    n = int(round(T / cfg.dt))
    if n < 1 or abs(n * cfg.dt - T) > 1e-9 * max(1.0, T):
        raise ConfigError("--T must be a positive multiple of --dt")
    if cfg.command == "solve-energetic":
        grid = np.linspace(0.0, T, n + 1)
        traj = incremental.solve_energetic(model, cfg.x0, grid)
        traj.events = [Event(j.t, "jump", j.left, j.right) for j in traj.jumps]
        traj.events += [Event(t, "tie", c[0], c[1]) for t, c in traj.ties]
        traj.events.sort(key=lambda e: (e.t, e.kind))
        check_balance = True
    else:
        traj = integrator.solve_local(model, cfg.x0, horizon=T, dt=cfg.dt)
        check_balance = cfg.balance
    weak = regularity.verify_weak(model, traj, cfg.tol, seed=cfg.seed)
    report = {
        "command": cfg.command,
        "model": model.to_record(),
        "x0": cfg.x0,
        "dt": cfg.dt,
        "T": T,
        "samples": int(traj.times.size),
        "jumps": _jumps_json(traj.jumps),
        "ties": [{"t": t, "candidates": c} for t, c in traj.ties],
        **_weak_json(weak),
    }
    ok = weak.passed
    if check_balance:
        bal = incremental.check_energy_balance(model, traj, weak.tol)
        report["balance"] = {"worst": bal.max_abs, "t": bal.worst_time, "tol": bal.tol, "passed": bal.passed}
        ok = ok and bal.passed
    report["passed"] = ok
    write_trajectory_artifacts(traj, cfg.out)
    _write(os.path.join(cfg.out, "report.json"), dumps(report))
    return 0 if ok else 1


def run_hypotheses(cfg):
    model = load_model_arg(cfg.model)
    rep = hypotheses.check_hypotheses(
        model, cfg.box, cfg.resolution, cfg.which, cfg.state_resolution, 1e-8 if cfg.tol is None else cfg.tol
    )
    _write(os.path.join(cfg.out, "report.json"), rep.dumps())
    return 1 if any(e.verdict == "fails" for e in rep.entries.values()) else 0


def run_gap(cfg):
    model = load_model_arg(cfg.model)
    g = hypotheses.estimate_gap(model, cfg.box, cfg.resolution, cfg.state_resolution)
    _write(os.path.join(cfg.out, "report.json"), dumps({"command": "gap", "gap": g.to_json()}))
    return 0


def run_audit(cfg):
    model = load_model_arg(cfg.model)
    traj = load_trajectory(cfg.trajectory)
    rep = regularity.audit(model, traj, cfg.tol, balance=cfg.balance, sbv=cfg.sbv, ladder=cfg.ladder,
                           fraction=cfg.fraction, seed=cfg.seed)
    _write(os.path.join(cfg.out, "report.json"), rep.dumps())
    write_plot_data(traj, os.path.join(cfg.out, "plot.dat"))
    if not rep.passed:
        w = rep.weak
        if not w.stability_ok:
            print(f"stability fails: worst residual {w.stability:.17g} at t = {w.stability_time:.17g}", file=sys.stderr)
        if not w.upper_bound.passed:
            print(f"upper bound fails: {w.upper_bound.worst:.17g} on [{w.upper_bound.t1:.17g}, {w.upper_bound.t2:.17g}]", file=sys.stderr)
    return 0 if rep.passed else 1


def run_construct(cfg):
    driver = _load_driver(cfg.driver)
    model = constructor.construct(driver, cfg.M)
    if cfg.resolution is not None:
        m = cfg.resolution
    elif driver.kind == "cantor":
        # triadic grid so that sample cells align with the Cantor intervals
        m = 3**driver.level
    else:
        m = 1000
    grid = np.linspace(0.0, driver.T, m + 1)
    traj = driver.trajectory(grid)
    tol = 1e-6 if cfg.tol is None else cfg.tol
    ver = constructor.verify_energetic(model, driver, model.x0, grid, tol=tol)
    sign = constructor.sign_clause_check(model.field)
    report = {
        "command": "construct",
        "model": model.to_record(),
        "samples": int(grid.size),
        "energetic": {
            "worst_margin": ver.worst_margin,
            "worst_at": list(ver.worst_at),
            "uniqueness_margin": ver.uniqueness_margin,
            "dissipation": ver.dissipation,
            "dissipation_expected": ver.dissipation_expected,
            "tol": ver.tol,
            "passed": ver.passed,
        },
        "sign_clauses": {"violations": sign.violations, "checked": sign.checked, "max_abs": sign.max_abs,
                         "saturation_error": sign.saturation_error, "passed": sign.passed},
        "jumps": _jumps_json(traj.jumps),
    }
    ok = ver.passed and sign.passed
    report["passed"] = ok
    _write(os.path.join(cfg.out, "model.txt"), energy.dump_model(model))
    write_trajectory_artifacts(traj, cfg.out)
    _write(os.path.join(cfg.out, "report.json"), dumps(report))
    return 0 if ok else 1


RUNNERS = {
    "solve-energetic": run_solve,
    "solve-local": run_solve,
    "check-hypotheses": run_hypotheses,
    "audit": run_audit,
    "construct": run_construct,
    "gap": run_gap,
}


def run(cfg):
    """Execute one configured pipeline; returns the exit status."""
    os.makedirs(cfg.out, exist_ok=True)
    return RUNNERS[cfg.command](cfg)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(config_from_args(args))
    except (ConfigError, DomainError) as exc:
        print(f"ri1d: error: {exc}", file=sys.stderr)
        return 2
    except Ri1dError as exc:
        print(f"ri1d: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"ri1d: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
