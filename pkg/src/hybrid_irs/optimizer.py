"""Alternating SCA + Dinkelbach optimization of (A, u1, u2).

Each block update works on a :class:`~hybrid_irs.forms.StepForms` whose true
objective is ``numerator(x) / denominator(x)`` with convex numerator.  One
inner iteration

1. linearizes the numerator at the current point ``x~`` (a global minorant),
2. solves ``max  lin(x) - mu * denominator(x)`` over the block's convex
   feasible set,
3. sets ``mu <- lin(x) / denominator(x)`` and ``x~ <- x``.

``mu`` starts at the true ratio of the entry point.  Because the subproblem
objective at ``x~`` is nonnegative, every new ``mu`` is at least the previous
one, and the true ratio dominates ``mu``.  The inner loop stops when the
relative change of ``mu`` is at most ``inner_tol``.

The passive-element unit-modulus rule is relaxed to ``|u_i| <= 1`` during the
iterations and restored by :func:`project_passive` at the end.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import forms as F
from .channel import ChannelSet
from .model import (
    RELAXED,
    STRICT,
    HybridConfig,
    ReflectionState,
    check_feasible,
    irs_power_slot2,
    rate,
    relay_power,
    snr_direct,
)
from .qcqp import INFEASIBLE, ComplexQcqp, solve

log = logging.getLogger(__name__)

_MONOTONE_SLACK = 1e-8
_FEASIBILITY_TOL = 1e-6


class InvariantViolation(RuntimeError):
    """A recorded AO state broke monotonicity or feasibility beyond tolerance."""


class InfeasibleConfiguration(ValueError):
    """Budgets cannot accommodate even the unavoidable fixed power terms."""

    def __init__(self, budget: str, message: str):
        super().__init__(message)
        self.budget = budget


@dataclass
class OptimizerOptions:
    outer_tol: float = 1e-4
    max_outer: int = 50
    inner_tol: float = 1e-5
    max_inner: int = 30
    solver_tol: float = 1e-9
    seed: int = 0
    # "budget": active slot-1 gains start at 90% of the IRS budget; "unit": modulus 1
    init_active: str = "budget"
    steps: tuple = ("a", "u1", "u2")


@dataclass(frozen=True, eq=False)
class AoState:
    A: np.ndarray
    refl: ReflectionState
    snr: float
    rate: float
    iteration: int = 0

    @classmethod
    def evaluate(cls, A, refl, ch, cfg, iteration=0) -> "AoState":
        snr = snr_direct(ch, A, refl, cfg).snr
        return cls(np.array(A, dtype=complex), refl, snr, rate(snr), iteration)


@dataclass
class StepTrace:
    step: str
    dinkelbach_values: list = field(default_factory=list)
    inner_objectives: list = field(default_factory=list)
    sca_gaps: list = field(default_factory=list)
    converged: bool = False
    snr_before: float = 0.0
    snr_after: float = 0.0
    status: str = "ok"

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "dinkelbach_values": [float(v) for v in self.dinkelbach_values],
            "inner_objectives": [float(v) for v in self.inner_objectives],
            "converged": self.converged,
            "snr_before": float(self.snr_before),
            "snr_after": float(self.snr_after),
            "status": self.status,
        }


@dataclass
class OptimizeResult:
    state: AoState
    relaxed: AoState
    traces: list
    rates: list
    diagnostics: list = field(default_factory=list)
    history: list = field(default_factory=list)    # relaxed state after every step

    @property
    def rate(self) -> float:
        return self.state.rate

    def to_dict(self) -> dict:
        return {
            "rate": self.state.rate,
            "rate_relaxed": self.relaxed.rate,
            "snr": self.state.snr,
            "outer_rates": [float(r) for r in self.rates],
            "steps": [t.to_dict() for t in self.traces],
            "diagnostics": list(self.diagnostics),
        }


def _fractional_ascent(forms: F.StepForms, x_entry, inner_tol, max_inner, solver_tol, trace: StepTrace):
    """Interleaved SCA/Dinkelbach loop; returns the best point by true ratio."""
    num, den = forms.numerator, forms.denominator
    cons = list(forms.constraints.values())
    x_t = np.asarray(x_entry, dtype=complex)
    mu = forms.ratio(x_t)
    trace.dinkelbach_values.append(mu)
    trace.inner_objectives.append(mu)
    best_x, best = x_t, mu
    for _ in range(max_inner):
        lin = num.minorant(x_t)
        sol = solve(ComplexQcqp(lin - den.scaled(mu), cons, forms.modulus_indices), x0=x_t, tol=solver_tol)
        if sol.status == INFEASIBLE:
            trace.status = "infeasible"
            break
        x_new = sol.x
        mu_new = lin.value(x_new) / den.value(x_new)
        true_new = forms.ratio(x_new)
        trace.sca_gaps.append((num.value(x_new) - lin.value(x_new)) / max(abs(num.value(x_new)), 1e-300))
        if mu_new < mu:
            # the subproblem returned a point no better than x~ (roundoff); x~ is a fixed point
            trace.converged = True
            break
        trace.dinkelbach_values.append(mu_new)
        trace.inner_objectives.append(true_new)
        if true_new >= best:
            best_x, best = x_new, true_new
        x_t = x_new
        if mu_new - mu <= inner_tol * max(abs(mu), 1e-300):
            trace.converged = True
            break
        mu = mu_new
    return best_x


def _accept(state: AoState, A, refl, ch, cfg, trace: StepTrace) -> AoState:
    cand = AoState.evaluate(A, refl, ch, cfg, state.iteration)
    trace.snr_before = state.snr
    if cand.snr >= state.snr:
        trace.snr_after = cand.snr
        return cand
    trace.snr_after = state.snr
    return state


def a_step(state: AoState, ch: ChannelSet, cfg: HybridConfig, inner_tol=1e-5, max_inner=30, solver_tol=1e-9):
    trace = StepTrace("a")
    forms = F.build_a_step(ch, state.refl.u1, state.refl.u2, cfg)
    a = _fractional_ascent(forms, F.vec(state.A), inner_tol, max_inner, solver_tol, trace)
    return _accept(state, F.unvec(a, cfg.M), state.refl, ch, cfg, trace), trace


def u1_step(state: AoState, ch: ChannelSet, cfg: HybridConfig, inner_tol=1e-5, max_inner=30, solver_tol=1e-9):
    trace = StepTrace("u1")
    forms = F.build_u1_step(ch, state.A, state.refl.u2, cfg)
    u1 = _fractional_ascent(forms, state.refl.u1, inner_tol, max_inner, solver_tol, trace)
    refl = ReflectionState(u1, state.refl.u2, RELAXED)
    return _accept(state, state.A, refl, ch, cfg, trace), trace


def u2_step(state: AoState, ch: ChannelSet, cfg: HybridConfig, inner_tol=1e-5, max_inner=30, solver_tol=1e-9):
    trace = StepTrace("u2")
    forms = F.build_u2_step(ch, state.A, state.refl.u1, cfg)
    x = _fractional_ascent(forms, F.u2_to_variable(state.refl.u2), inner_tol, max_inner, solver_tol, trace)
    refl = ReflectionState(state.refl.u1, F.u2_from_variable(x), RELAXED)
    return _accept(state, state.A, refl, ch, cfg, trace), trace


_STEPS = {"a": a_step, "u1": u1_step, "u2": u2_step}


def init_state(ch: ChannelSet, cfg: HybridConfig, seed=0, init_active: str = "budget") -> AoState:
    """Random unit-modulus phases, then a scaled matched-filter relay matrix.

    Active slot-1 gains are raised to 90% of the IRS budget when
    ``init_active == "budget"``.  ``A = c h_rd h_sr^H`` with the largest ``c``
    leaving 10% margin on both the relay budget and the slot-2 IRS budget.
    """
    if init_active not in ("budget", "unit"):
        raise ValueError(f"unknown init_active {init_active!r}")
    rng = np.random.default_rng(seed)
    N = cfg.N
    u1 = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, N))
    u2 = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, N))
    act = cfg.active
    if act.size:
        per = cfg.gamma_s * np.abs(ch.h_si[act]) ** 2 + 1.0
        if init_active == "budget" or per.sum() > 0.9 * cfg.gamma_i:
            u1[act] *= np.sqrt(0.9 * cfg.gamma_i / per.sum())
        if act.size > 0.9 * cfg.gamma_i:
            u2[act] *= np.sqrt(0.9 * cfg.gamma_i / act.size)
    refl = ReflectionState(u1, u2, RELAXED)

    A1 = np.outer(ch.h_rd, ch.h_sr.conj())
    if not np.any(A1):
        A1 = np.eye(cfg.M, dtype=complex)
    # both powers are quadratic in c; the slot-2 IRS power has a c-free term
    p_relay = relay_power(A1, refl, ch, cfg)
    fixed2 = irs_power_slot2(u2, np.zeros_like(A1), u1, ch, cfg)
    p_irs2 = irs_power_slot2(u2, A1, u1, ch, cfg) - fixed2
    room2 = 0.9 * (cfg.gamma_i - fixed2)
    if room2 <= 0:
        raise InfeasibleConfiguration("P_i", "IRS budget cannot cover slot-2 amplifier noise")
    c2 = 0.9 * cfg.gamma_r / p_relay
    if p_irs2 > 0:
        c2 = min(c2, room2 / p_irs2)
    A = np.sqrt(c2) * A1
    state = AoState.evaluate(A, refl, ch, cfg)
    rep = check_feasible(A, refl, ch, cfg)
    if not rep.feasible:
        raise InfeasibleConfiguration(",".join(rep.violated()), "initial point infeasible")
    return state


def project_passive(state: AoState, ch: ChannelSet, cfg: HybridConfig) -> AoState:
    """Restore unit modulus on passive elements; shrink A if a power budget breaks."""
    u1, u2 = state.refl.u1.copy(), state.refl.u2.copy()
    for u in (u1, u2):
        p = cfg.passive
        mag = np.abs(u[p])
        u[p] = np.where(mag > 0, u[p] / np.where(mag > 0, mag, 1.0), 1.0)
    refl = ReflectionState(u1, u2, STRICT)
    A = state.A

    def fits(s):
        return (relay_power(s * A, refl, ch, cfg) <= cfg.gamma_r
                and irs_power_slot2(u2, s * A, u1, ch, cfg) <= cfg.gamma_i)

    if not fits(1.0):
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if fits(mid) else (lo, mid)
        A = lo * A
    return AoState.evaluate(A, refl, ch, cfg, state.iteration)


def _degenerate(ch: ChannelSet) -> bool:
    relay_path = np.any(ch.h_sr) and np.any(ch.h_rd)
    irs_path = np.any(ch.H_ir) and (np.any(ch.h_si) or np.any(ch.h_id))
    return not (relay_path or irs_path)


def _audit(prev_rate, state: AoState, ch, cfg, where: str) -> None:
    if state.rate < prev_rate - _MONOTONE_SLACK:
        raise InvariantViolation(f"{where}: rate fell from {prev_rate!r} to {state.rate!r}")
    rep = check_feasible(state.A, state.refl, ch, cfg, tol=_FEASIBILITY_TOL)
    if not rep.feasible:
        raise InvariantViolation(f"{where}: infeasible ({', '.join(rep.violated())})")


def optimize(ch: ChannelSet, cfg: HybridConfig, opts: OptimizerOptions | None = None,
             state: AoState | None = None) -> OptimizeResult:
    """Alternate the block steps in ``opts.steps`` until the rate settles.

    Returns the projected (strict-mode) state; the relaxed state and the full
    per-step trace are kept alongside.
    """
    opts = opts or OptimizerOptions()
    if (ch.M, ch.N) != (cfg.M, cfg.N):
        raise ValueError(f"channel dims {(ch.M, ch.N)} != config dims {(cfg.M, cfg.N)}")
    diagnostics = []
    if state is None:
        state = init_state(ch, cfg, opts.seed, opts.init_active)
    else:
        rep = check_feasible(state.A, state.refl, ch, cfg)
        if not rep.feasible:
            raise InfeasibleConfiguration(",".join(rep.violated()), "supplied start state infeasible")
    if _degenerate(ch):
        diagnostics.append("degenerate channels: no usable path, rate is 0")
        zero = AoState.evaluate(np.zeros((cfg.M, cfg.M)), state.refl, ch, cfg)
        return OptimizeResult(zero, zero, [], [zero.rate], diagnostics)

    traces = []
    history = [state]
    rates = [state.rate]
    for it in range(1, opts.max_outer + 1):
        for name in opts.steps:
            prev = state.rate
            state, tr = _STEPS[name](state, ch, cfg, opts.inner_tol, opts.max_inner, opts.solver_tol)
            traces.append(tr)
            _audit(prev, state, ch, cfg, f"outer {it} {name}-step")
            history.append(state)
            if tr.status != "ok":
                diagnostics.append(f"outer {it}: {name}-step {tr.status}")
        state = AoState(state.A, state.refl, state.snr, state.rate, it)
        rates.append(state.rate)
        if rates[-1] - rates[-2] <= opts.outer_tol * max(rates[-2], 1e-300):
            break
    else:
        diagnostics.append(f"max_outer={opts.max_outer} reached")

    relaxed = state
    projected = project_passive(relaxed, ch, cfg)
    if projected.rate != relaxed.rate:
        log.debug("projection changed rate %.6g -> %.6g", relaxed.rate, projected.rate)
    diagnostics.append(f"rate relaxed={relaxed.rate:.9g} projected={projected.rate:.9g}")
    return OptimizeResult(projected, relaxed, traces, rates, diagnostics, history)
