"""Independent oracles and the self-check suite behind ``hybrid-irs validate``.

The oracles only use the direct evaluators of :mod:`model`, never the
quadratic forms or the barrier solver, so they can referee both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, Geometry, draw_channels
from .model import (
    HybridConfig,
    ReflectionState,
    check_feasible,
    irs_power_slot2,
    random_mask,
    relay_input,
    relay_output_row,
    relay_power,
    snr_direct,
)

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _largest_feasible_scale(fits, hi=1.0) -> float:
    while fits(hi):
        hi *= 2.0
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if fits(mid) else (lo, mid)
        if hi - lo <= 1e-15 * hi:
            break
    return lo


def matched_filter_oracle(ch: ChannelSet, refl: ReflectionState, cfg: HybridConfig, iters: int = 200):
    """Best SNR over the rank-one family ``A = c g s^H`` by golden-section search on c.

    ``s`` and ``g`` are the effective relay input and output channels for the
    given reflection state.  Returns ``(snr, c, A)``.
    """
    s = relay_input(ch, refl.u1)
    g = relay_output_row(ch, refl.u2).conj()
    A1 = np.outer(g, s.conj())
    if not np.any(A1):
        return 0.0, 0.0, np.zeros_like(A1)

    def fits(c):
        return (relay_power(c * A1, refl, ch, cfg) <= cfg.gamma_r
                and irs_power_slot2(refl.u2, c * A1, refl.u1, ch, cfg) <= cfg.gamma_i)

    c_max = _largest_feasible_scale(fits, 1.0 / np.linalg.norm(A1))

    def f(c):
        return snr_direct(ch, c * A1, refl, cfg).snr

    lo, hi = 0.0, c_max
    x1, x2 = hi - _GOLDEN * (hi - lo), lo + _GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = f(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = f(x1)
    cands = [(f(c_max), c_max), (f1, x1), (f2, x2)]
    best, c = max(cands)
    return best, c, c * A1


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _forms_check(rng) -> CheckResult:
    from . import forms as F

    worst = 0.0
    for _ in range(20):
        N = int(rng.choice([3, 8]))
        K = int(rng.integers(0, 3))
        cfg = HybridConfig.from_dbm(2, N, random_mask(N, K, rng), 30, 30, 30)
        ch = draw_channels(Geometry(), cfg, rng.integers(2**32))
        u1 = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        u2 = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        A = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) * 1e3
        refl = ReflectionState(u1, u2)
        snr = snr_direct(ch, A, refl, cfg).snr
        for sf, x in (
            (F.build_a_step(ch, u1, u2, cfg), F.vec(A)),
            (F.build_u1_step(ch, A, u2, cfg), u1),
            (F.build_u2_step(ch, A, u1, cfg), F.u2_to_variable(u2)),
        ):
            worst = max(worst, abs(sf.ratio(x) - snr) / snr)
    return CheckResult("forms match direct SNR", worst <= 1e-10, f"worst relative error {worst:.2e}")


def _relay_only_check(rng) -> CheckResult:
    from .optimizer import OptimizerOptions, init_state, optimize

    worst = 0.0
    for _ in range(5):
        cfg = HybridConfig.from_dbm(2, 8, np.zeros(8, bool), 30, 30, 33)
        ch = draw_channels(Geometry(), cfg, rng.integers(2**32)).without_irs()
        st = init_state(ch, cfg, 0)
        res = optimize(ch, cfg, OptimizerOptions(steps=("a",)), state=st)
        ref, _, _ = matched_filter_oracle(ch, res.state.refl, cfg)
        worst = max(worst, (ref - res.state.snr) / ref)
    return CheckResult("relay-only A-step reaches matched-filter optimum", worst <= 1e-3,
                       f"worst relative shortfall {worst:.2e}")


def _monotone_check(rng) -> CheckResult:
    from .optimizer import OptimizerOptions, optimize

    bad = []
    for _ in range(3):
        cfg = HybridConfig.from_dbm(2, 8, random_mask(8, 2, rng), 30, 30, 30)
        ch = draw_channels(Geometry(), cfg, rng.integers(2**32))
        res = optimize(ch, cfg, OptimizerOptions(seed=int(rng.integers(2**31))))
        rates = [s.rate for s in res.history]
        if np.any(np.diff(rates) < -1e-8):
            bad.append("rate")
        for tr in res.traces:
            if np.any(np.diff(tr.dinkelbach_values) < -1e-9):
                bad.append(tr.step)
        if not all(check_feasible(s.A, s.refl, ch, cfg).feasible for s in res.history):
            bad.append("feasibility")
    return CheckResult("AO monotone and feasible", not bad, ", ".join(bad) or "ok")


def run_checks(seed: int = 0) -> list[CheckResult]:
    """Quick self-checks of forms, the AO invariants and the relay-only oracle."""
    rng = np.random.default_rng(seed)
    return [_forms_check(rng), _monotone_check(rng), _relay_only_check(rng)]
