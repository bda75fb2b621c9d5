"""Command-line entry point: config parsing, sweeps, single runs and self-checks.

Config files are flat ``section.key = value`` lines; ``#`` starts a comment.
Lists are comma separated, points are three comma-separated numbers.  Every
key has a default; together they give the reference operating point
(M, N, K) = (2, 32, 4), P_i = P_r = 30 dBm, sigma^2 = -80 dBm.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .bench import ALL_SCHEMES, SWEEP_VARIABLES, BaselineKind, run_baseline, sweep, trial_seeds, trial_setup
from .channel import Geometry
from .model import HybridConfig, first_k_mask
from .optimizer import InfeasibleConfiguration, InvariantViolation, OptimizerOptions

log = logging.getLogger("hybrid_irs")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_INVARIANT = 0, 1, 2, 3

DEFAULT_GRIDS = {
    "P_s": (10.0, 15.0, 20.0, 25.0, 30.0),
    "P_i": (20.0, 25.0, 30.0, 35.0, 40.0),
    "K": (0.0, 1.0, 2.0, 3.0, 4.0),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SystemBlock:
    M: int = 2
    N: int = 32
    K: int = 4
    P_s_dbm: float = 30.0
    P_i_dbm: float = 30.0
    P_r_dbm: float = 30.0
    sigma2_dbm: float = -80.0


@dataclass(frozen=True)
class OptimizerBlock:
    outer_tol: float = 1e-4
    max_outer: int = 50
    inner_tol: float = 1e-5
    max_inner: int = 30
    solver_tol: float = 1e-9
    init_active: str = "budget"


@dataclass(frozen=True)
class ExperimentBlock:
    sweep: str = "P_s"
    grid: tuple = DEFAULT_GRIDS["P_s"]
    trials: int = 100
    seed: int = 0
    schemes: tuple = tuple(k.value for k in ALL_SCHEMES)
    output: str = "results.csv"
    workers: int = 1


@dataclass(frozen=True)
class RunConfig:
    geometry: Geometry = field(default_factory=Geometry)
    system: SystemBlock = field(default_factory=SystemBlock)
    optimizer: OptimizerBlock = field(default_factory=OptimizerBlock)
    experiment: ExperimentBlock = field(default_factory=ExperimentBlock)

    def hybrid_config(self) -> HybridConfig:
        s = self.system
        return HybridConfig.from_dbm(s.M, s.N, first_k_mask(s.N, s.K), s.P_s_dbm, s.P_i_dbm, s.P_r_dbm,
                                     s.sigma2_dbm)

    def optimizer_options(self) -> OptimizerOptions:
        o = self.optimizer
        return OptimizerOptions(outer_tol=o.outer_tol, max_outer=o.max_outer, inner_tol=o.inner_tol,
                                max_inner=o.max_inner, solver_tol=o.solver_tol, init_active=o.init_active)

    def grid_for(self, variable: str) -> tuple:
        e = self.experiment
        return e.grid if e.sweep == variable else DEFAULT_GRIDS[variable]


_BLOCKS = {"geometry": Geometry, "system": SystemBlock, "optimizer": OptimizerBlock, "experiment": ExperimentBlock}


def _kind(block_cls, name):
    default = {f.name: f for f in fields(block_cls)}[name].default
    if name.startswith("pos_"):
        return "point"
    if isinstance(default, int):
        return "int"
    if isinstance(default, float):
        return "float"
    if isinstance(default, tuple):
        return "floats" if name == "grid" else "strs"
    return "str"


def _parse_value(kind: str, text: str):
    text = text.strip()
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind in ("point", "floats"):
        vals = tuple(float(t) for t in text.split(",") if t.strip())
        if kind == "point" and len(vals) != 3:
            raise ValueError("expected three comma-separated numbers")
        return vals
    if kind == "strs":
        return tuple(t.strip() for t in text.split(",") if t.strip())
    return text


def _format_value(kind: str, value) -> str:
    if kind in ("point", "floats"):
        return ", ".join(repr(float(v)) for v in value)
    if kind == "strs":
        return ", ".join(value)
    if kind == "float":
        return repr(float(value))
    return str(value)


def _validate(cfg: RunConfig) -> None:
    s, o, e = cfg.system, cfg.optimizer, cfg.experiment
    if s.M < 1 or s.N < 1:
        raise ConfigError("system.M and system.N must be >= 1")
    if not 0 <= s.K <= s.N:
        raise ConfigError(f"system.K = {s.K} must lie in 0..N = {s.N}")
    for name in ("P_s_dbm", "P_i_dbm", "P_r_dbm", "sigma2_dbm"):
        if not np.isfinite(getattr(s, name)):
            raise ConfigError(f"system.{name} must be finite")
    for name in ("outer_tol", "inner_tol", "solver_tol"):
        if not getattr(o, name) > 0:
            raise ConfigError(f"optimizer.{name} must be positive")
    if o.max_outer < 1 or o.max_inner < 1:
        raise ConfigError("optimizer.max_outer and optimizer.max_inner must be >= 1")
    if o.init_active not in ("budget", "unit"):
        raise ConfigError("optimizer.init_active must be 'budget' or 'unit'")
    if e.sweep not in SWEEP_VARIABLES:
        raise ConfigError(f"experiment.sweep must be one of {', '.join(SWEEP_VARIABLES)}")
    if not e.grid:
        raise ConfigError("experiment.grid must be nonempty")
    if e.sweep == "K" and any(k != int(k) or not 0 <= k <= s.N for k in e.grid):
        raise ConfigError(f"experiment.grid has K values outside 0..N = {s.N}")
    if e.trials < 1:
        raise ConfigError("experiment.trials must be >= 1")
    if not 0 <= e.seed < 2**64:
        raise ConfigError("experiment.seed must be an unsigned 64-bit integer")
    if e.workers < 1:
        raise ConfigError("experiment.workers must be >= 1")
    if not e.schemes:
        raise ConfigError("experiment.schemes must be nonempty")
    for name in e.schemes:
        try:
            BaselineKind(name)
        except ValueError:
            raise ConfigError(f"experiment.schemes: unknown scheme {name!r}") from None


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse config text; every problem is reported with its line and key."""
    values = {b: {} for b in _BLOCKS}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value', got {raw.strip()!r}")
        key, val = (t.strip() for t in line.split("=", 1))
        block, _, name = key.partition(".")
        if block not in _BLOCKS or name not in {f.name for f in fields(_BLOCKS[block])}:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if name in values[block]:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        kind = _kind(_BLOCKS[block], name)
        try:
            values[block][name] = _parse_value(kind, val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r} ({kind}): {exc}") from None
    try:
        blocks = {b: cls(**values[b]) for b, cls in _BLOCKS.items()}
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    cfg = RunConfig(**blocks)
    _validate(cfg)
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for block, cls in _BLOCKS.items():
        lines.append(f"# {block}")
        obj = getattr(cfg, block)
        for f in fields(cls):
            lines.append(f"{block}.{f.name} = {_format_value(_kind(cls, f.name), getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path)


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    exp = cfg.experiment
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.out is not None:
        changes["output"] = args.out
    if changes:
        cfg = replace(cfg, experiment=replace(exp, **changes))
        _validate(cfg)
    return cfg


def _write(path: str, text: str) -> None:
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from None


def run_sweep(cfg: RunConfig, variable: str, verbose: bool = False) -> int:
    """Run one sweep, write the CSV and its run log; returns an exit code."""
    exp = cfg.experiment
    grid = cfg.grid_for(variable)
    if variable == "K" and any(k != int(k) or not 0 <= k <= cfg.system.N for k in grid):
        raise ConfigError(f"K grid values must lie in 0..N = {cfg.system.N}")
    trials_log = []

    def on_trial(outcome):
        trials_log.append({"trial": outcome.trial, "scheme": outcome.kind, "rate": outcome.rate,
                           "error": outcome.error, "trace": outcome.detail})

    res = sweep(variable, grid, cfg.geometry, cfg.hybrid_config(), exp.trials, exp.seed, exp.schemes,
                cfg.optimizer_options(), exp.workers, on_trial=on_trial if verbose else None)
    _write(exp.output, res.to_csv())
    run_log = {
        "config": serialize_config(cfg),
        "sweep_variable": variable,
        "grid": list(grid),
        "rows": [
            {"sweep_value": r.sweep_value, "means": r.means, "stderrs": r.stderrs, "trials_used": r.trials_used,
             "trials_excluded": r.trials_excluded, "exclusions": r.exclusions}
            for r in res.rows
        ],
    }
    if variable == "K" and 0 in grid:
        run_log["note"] = "at K=0 the hybrid scheme is a passive IRS whose P_i budget goes unused"
    if verbose:
        run_log["trials"] = trials_log
    _write(exp.output + ".log.json", json.dumps(run_log, indent=1, default=_json_default))
    for r in res.rows:
        means = "  ".join(f"{k}={v:.4f}" for k, v in r.means.items())
        print(f"{variable}={r.sweep_value:g}  {means}  (used {r.trials_used}, excluded {r.trials_excluded})")
    if all(r.trials_used == 0 for r in res.rows):
        reasons = {e for r in res.rows for _, e in r.exclusions}
        print("error: every trial was infeasible: " + "; ".join(sorted(reasons)), file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def run_single(cfg: RunConfig, out: str | None) -> int:
    """Optimize every configured scheme on trial 0 of the seed; emit full traces."""
    exp = cfg.experiment
    seeds = trial_seeds(exp.seed, 1)[0]
    ch, hcfg = trial_setup(cfg.geometry, cfg.hybrid_config(), seeds)
    report = {"seed": exp.seed, "active": [int(i) for i in hcfg.active], "schemes": {}}
    opts = replace(cfg.optimizer_options(), seed=seeds.init)
    for name in exp.schemes:
        res = run_baseline(name, ch, hcfg, opts)
        report["schemes"][name] = res.to_dict()
        print(f"{name}: rate {res.rate:.6f} bits/s/Hz (relaxed {res.relaxed.rate:.6f})", file=sys.stderr)
    text = json.dumps(report, indent=1, default=_json_default)
    if out is not None:
        _write(out, text)
    else:
        print(text)
    return EXIT_OK


def run_validate(seed: int) -> int:
    from .validate import run_checks

    results = run_checks(seed)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_INVARIANT


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file (section.key = value lines)")
    common.add_argument("--seed", type=int, help="root seed, overrides experiment.seed")
    common.add_argument("--out", help="output path, overrides experiment.output")
    common.add_argument("--trials", type=int, help="Monte Carlo trials, overrides experiment.trials")
    common.add_argument("--verbose", "-v", action="store_true", help="per-trial traces in the run log")

    parser = argparse.ArgumentParser(prog="hybrid-irs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("single", parents=[common], help="optimize one channel draw and print its trace")
    sub.add_parser("sweep-ps", parents=[common], help="rate versus source power")
    sub.add_parser("sweep-pi", parents=[common], help="rate versus IRS power")
    sub.add_parser("sweep-k", parents=[common], help="rate versus number of active elements")
    sub.add_parser("validate", parents=[common], help="run oracle and invariant self-checks")
    sub.add_parser("show-config", parents=[common], help="print the effective config")
    return parser


_SWEEPS = {"sweep-ps": "P_s", "sweep-pi": "P_i", "sweep-k": "K"}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "show-config":
            print(serialize_config(cfg), end="")
            return EXIT_OK
        if args.command == "validate":
            return run_validate(cfg.experiment.seed)
        if args.command == "single":
            return run_single(cfg, args.out)
        return run_sweep(cfg, _SWEEPS[args.command], args.verbose)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleConfiguration as exc:
        print(f"infeasible configuration (budget {exc.budget}): {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InvariantViolation, AssertionError) as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
