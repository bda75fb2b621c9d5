"""Baseline schemes and the Monte Carlo harness.

Seeding: the root seed feeds ``numpy.random.SeedSequence``, which is split
into one child per trial; each trial child is split again into three streams
for the channels, the active-element mask and the optimizer start point.  The
channel draw depends only on ``(M, N)`` and the mask is the first K entries of
a random permutation, so points of a P_s, P_i or K sweep see the same channels
and nested masks (common random numbers).
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .channel import ChannelSet, Geometry, draw_channels
from .model import HybridConfig, dbm_to_watts, random_mask
from .optimizer import (
    InfeasibleConfiguration,
    OptimizeResult,
    OptimizerOptions,
    init_state,
    optimize,
)

log = logging.getLogger(__name__)


class BaselineKind(str, Enum):
    HYBRID = "hybrid"
    PASSIVE_IRS = "passive_irs"
    PASSIVE_IRS_RANDOM_PHASE = "passive_irs_random_phase"
    RELAY_ONLY = "relay_only"


ALL_SCHEMES = tuple(BaselineKind)


def baseline_config(kind: BaselineKind, cfg: HybridConfig) -> HybridConfig:
    """Config a scheme actually runs with: baselines get K=0 and P_R = P_i + P_r."""
    kind = BaselineKind(kind)
    if kind is BaselineKind.HYBRID:
        return cfg
    return cfg.all_passive().replace(P_r=cfg.P_i + cfg.P_r)


def run_baseline(kind, ch: ChannelSet, cfg: HybridConfig, opts: OptimizerOptions | None = None) -> OptimizeResult:
    """Run one scheme on one channel realization.

    ``cfg`` describes the hybrid system; baselines derive their own config with
    :func:`baseline_config`.  The random-phase scheme keeps the start phases of
    ``opts.seed`` and only optimizes A, as does the relay-only scheme on the
    IRS-free channels.
    """
    kind = BaselineKind(kind)
    opts = opts or OptimizerOptions()
    bcfg = baseline_config(kind, cfg)
    if kind in (BaselineKind.HYBRID, BaselineKind.PASSIVE_IRS):
        return optimize(ch, bcfg, opts)
    if kind is BaselineKind.RELAY_ONLY:
        ch = ch.without_irs()
    a_only = replace(opts, steps=("a",))
    return optimize(ch, bcfg, a_only, state=init_state(ch, bcfg, opts.seed, opts.init_active))


@dataclass(frozen=True)
class TrialSeeds:
    channel: np.random.SeedSequence
    mask: np.random.SeedSequence
    init: int


def trial_seeds(root_seed: int, trials: int) -> list[TrialSeeds]:
    out = []
    for child in np.random.SeedSequence(root_seed).spawn(trials):
        ch_ss, mask_ss, init_ss = child.spawn(3)
        out.append(TrialSeeds(ch_ss, mask_ss, int(init_ss.generate_state(1)[0])))
    return out


def trial_setup(geometry: Geometry, template: HybridConfig, seeds: TrialSeeds):
    """Channels and the per-trial hybrid config (mask of size ``template.K``)."""
    mask = random_mask(template.N, template.K, np.random.default_rng(seeds.mask))
    cfg = template.replace(active_mask=mask)
    ch = draw_channels(geometry, cfg, seeds.channel)
    return ch, cfg


@dataclass
class TrialOutcome:
    trial: int
    kind: str
    rate: float | None
    error: str | None = None
    detail: dict | None = None


def _cfg_key(cfg: HybridConfig) -> tuple:
    return (cfg.M, cfg.N, cfg.active_mask.tobytes(), cfg.P_s, cfg.P_i, cfg.P_r, cfg.sigma2)


def _opts_key(opts: OptimizerOptions) -> tuple:
    return (opts.outer_tol, opts.max_outer, opts.inner_tol, opts.max_inner, opts.solver_tol,
            opts.init_active, tuple(opts.steps))


def _run_trial(args) -> TrialOutcome:
    idx, kind, geometry, template, seeds, opts, keep_detail = args
    ch, cfg = trial_setup(geometry, template, seeds)
    try:
        res = run_baseline(kind, ch, cfg, replace(opts, seed=seeds.init))
    except InfeasibleConfiguration as exc:
        return TrialOutcome(idx, kind.value, None, f"infeasible ({exc.budget}): {exc}")
    return TrialOutcome(idx, kind.value, res.rate, None, res.to_dict() if keep_detail else None)


class RateCache:
    """Memo of per-trial outcomes keyed by everything that determines them.

    Baselines do not depend on the active mask, so a K sweep evaluates them once.
    """

    def __init__(self):
        self._store = {}

    @staticmethod
    def key(kind, geometry, template, seeds: TrialSeeds, opts):
        cfg = baseline_config(kind, template)
        mask_part = (template.K, seeds.mask.entropy, seeds.mask.spawn_key) if kind is BaselineKind.HYBRID else None
        cfg_part = _cfg_key(cfg.replace(active_mask=np.zeros(cfg.N, bool)))
        return (kind.value, geometry, cfg_part, mask_part, seeds.channel.entropy, seeds.channel.spawn_key,
                seeds.init, _opts_key(opts))

    def get(self, key):
        return self._store.get(key)

    def put(self, key, outcome: TrialOutcome):
        self._store[key] = outcome

    def __len__(self):
        return len(self._store)


@dataclass
class MonteCarloRow:
    """Per-scheme statistics at one operating point."""

    sweep_value: float
    means: dict
    stderrs: dict
    trials_used: int
    trials_excluded: int
    per_trial: dict = field(default_factory=dict)     # scheme -> list of rates (None if excluded)
    exclusions: list = field(default_factory=list)


def monte_carlo(geometry: Geometry, cfg_template: HybridConfig, kinds=ALL_SCHEMES, trials: int = 100,
                root_seed: int = 0, opts: OptimizerOptions | None = None, sweep_value: float = float("nan"),
                workers: int = 1, cache: RateCache | None = None, on_trial=None) -> MonteCarloRow:
    """Average every scheme over the same ``trials`` channel realizations.

    A trial that is infeasible for any scheme is dropped for all schemes and
    counted in ``trials_excluded``.  ``on_trial(outcome)`` is called in trial
    order, with per-step traces attached when given.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    kinds = [BaselineKind(k) for k in kinds]
    if not kinds:
        raise ValueError("need at least one scheme")
    opts = opts or OptimizerOptions()
    seeds = trial_seeds(root_seed, trials)
    keep_detail = on_trial is not None

    jobs, keys, outcomes = [], {}, {}
    for i, s in enumerate(seeds):
        for kind in kinds:
            key = RateCache.key(kind, geometry, cfg_template, s, opts)
            hit = cache.get(key) if cache is not None and not keep_detail else None
            if hit is not None:
                outcomes[i, kind] = replace(hit, trial=i)
            else:
                keys[i, kind] = key
                jobs.append((i, kind, geometry, cfg_template, s, opts, keep_detail))

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial, jobs))
    else:
        results = [_run_trial(j) for j in jobs]
    for job, out in zip(jobs, results):
        i, kind = job[0], job[1]
        outcomes[i, kind] = out
        if cache is not None:
            cache.put(keys[i, kind], replace(out, detail=None))

    per_trial = {k.value: [] for k in kinds}
    exclusions = []
    for i in range(trials):
        bad = [outcomes[i, k] for k in kinds if outcomes[i, k].rate is None]
        for kind in kinds:
            o = outcomes[i, kind]
            if on_trial is not None:
                on_trial(o)
            per_trial[kind.value].append(None if bad else o.rate)
        if bad:
            exclusions.append((i, "; ".join(f"{o.kind}: {o.error}" for o in bad)))
            log.warning("trial %d excluded: %s", i, exclusions[-1][1])

    means, stderrs = {}, {}
    used = trials - len(exclusions)
    for name, vals in per_trial.items():
        v = np.array([r for r in vals if r is not None])
        means[name] = float(np.mean(v)) if v.size else float("nan")
        stderrs[name] = float(np.std(v, ddof=1) / np.sqrt(v.size)) if v.size > 1 else float("nan")
    return MonteCarloRow(sweep_value, means, stderrs, used, len(exclusions), per_trial, exclusions)


SWEEP_VARIABLES = ("P_s", "P_i", "K")


@dataclass
class SweepResult:
    sweep_variable: str
    grid: list
    rows: list
    trials: int
    root_seed: int
    schemes: list

    CSV_HEADER = ("sweep_value", "scheme", "mean_rate_bps_hz", "stderr", "trials_used", "trials_excluded", "seed")

    def mean(self, scheme) -> np.ndarray:
        return np.array([r.means[BaselineKind(scheme).value] for r in self.rows])

    def gain_over(self, baseline, scheme=BaselineKind.HYBRID) -> np.ndarray:
        """Relative gain of ``scheme`` over ``baseline`` at every grid point."""
        b = self.mean(baseline)
        return (self.mean(scheme) - b) / b

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_HEADER)
        for row in self.rows:
            for scheme in self.schemes:
                w.writerow([
                    _fmt(row.sweep_value), scheme, _fmt(row.means[scheme]), _fmt(row.stderrs[scheme]),
                    row.trials_used, row.trials_excluded, self.root_seed,
                ])
        return buf.getvalue()


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def sweep(variable: str, grid, geometry: Geometry, cfg: HybridConfig, trials: int = 100, root_seed: int = 0,
          kinds=ALL_SCHEMES, opts: OptimizerOptions | None = None, workers: int = 1,
          cache: RateCache | None = None, on_trial=None) -> SweepResult:
    """One :func:`monte_carlo` row per grid point of P_s (dBm), P_i (dBm) or K.

    All points share the trial seeds; a fresh :class:`RateCache` is used unless
    one is passed, so baselines are computed once across a K sweep.
    """
    if variable not in SWEEP_VARIABLES:
        raise ValueError(f"sweep variable must be one of {SWEEP_VARIABLES}, got {variable!r}")
    grid = list(grid)
    if not grid:
        raise ValueError("grid must be nonempty")
    cache = RateCache() if cache is None else cache
    rows = []
    for value in grid:
        if variable == "K":
            K = int(value)
            if K != value or not 0 <= K <= cfg.N:
                raise ValueError(f"K grid value {value!r} outside 0..N={cfg.N}")
            point = cfg.replace(active_mask=np.arange(cfg.N) < K)
        else:
            if not np.isfinite(value):
                raise ValueError(f"invalid {variable} grid value {value!r}")
            point = cfg.replace(**{variable: dbm_to_watts(float(value))})
        rows.append(monte_carlo(geometry, point, kinds, trials, root_seed, opts, float(value), workers, cache,
                                on_trial))
    kinds = [BaselineKind(k).value for k in kinds]
    return SweepResult(variable, grid, rows, trials, root_seed, kinds)
