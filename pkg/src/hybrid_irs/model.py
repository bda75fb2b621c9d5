"""System configuration and exact end-to-end SNR / power evaluation.

Everything here is computed by plain matrix arithmetic on the signal model and
serves as the reference that the quadratic-form machinery in :mod:`forms` is
checked against.  Powers are in units of the noise power sigma^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet

STRICT = "strict"
RELAXED = "relaxed"


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(w: float) -> float:
    return 10.0 * np.log10(w) + 30.0


@dataclass(frozen=True, eq=False)
class HybridConfig:
    """Dimensions, active-element mask, power budgets (W) and noise power (W).

    ``active_mask`` is the diagonal of E_K; ``K`` is its number of true entries.
    """

    M: int
    N: int
    active_mask: np.ndarray
    P_s: float
    P_i: float
    P_r: float
    sigma2: float

    def __post_init__(self):
        mask = np.array(self.active_mask, dtype=bool).reshape(-1)
        if mask.shape != (self.N,):
            raise ValueError(f"active_mask must have length N={self.N}")
        mask.setflags(write=False)
        object.__setattr__(self, "active_mask", mask)
        if self.M < 1 or self.N < 0:
            raise ValueError("need M >= 1 and N >= 0")
        for name in ("P_s", "P_i", "P_r", "sigma2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_dbm(cls, M, N, active_mask, P_s_dbm, P_i_dbm, P_r_dbm, sigma2_dbm=-80.0):
        return cls(
            M=M,
            N=N,
            active_mask=active_mask,
            P_s=dbm_to_watts(P_s_dbm),
            P_i=dbm_to_watts(P_i_dbm),
            P_r=dbm_to_watts(P_r_dbm),
            sigma2=dbm_to_watts(sigma2_dbm),
        )

    @property
    def K(self) -> int:
        return int(self.active_mask.sum())

    @property
    def E(self) -> np.ndarray:
        """E_K as a 0/1 float vector."""
        return self.active_mask.astype(float)

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.active_mask)

    @property
    def passive(self) -> np.ndarray:
        return np.flatnonzero(~self.active_mask)

    @property
    def gamma_s(self) -> float:
        return self.P_s / self.sigma2

    @property
    def gamma_i(self) -> float:
        return self.P_i / self.sigma2

    @property
    def gamma_r(self) -> float:
        return self.P_r / self.sigma2

    def replace(self, **changes) -> "HybridConfig":
        fields = dict(
            M=self.M, N=self.N, active_mask=self.active_mask, P_s=self.P_s,
            P_i=self.P_i, P_r=self.P_r, sigma2=self.sigma2,
        )
        fields.update(changes)
        return HybridConfig(**fields)

    def all_passive(self) -> "HybridConfig":
        return self.replace(active_mask=np.zeros(self.N, dtype=bool))


def first_k_mask(N: int, K: int) -> np.ndarray:
    if not 0 <= K <= N:
        raise ValueError(f"need 0 <= K <= N, got K={K}, N={N}")
    mask = np.zeros(N, dtype=bool)
    mask[:K] = True
    return mask


def random_mask(N: int, K: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform size-K subset; masks for different K from the same rng state are nested."""
    if not 0 <= K <= N:
        raise ValueError(f"need 0 <= K <= N, got K={K}, N={N}")
    mask = np.zeros(N, dtype=bool)
    mask[rng.permutation(N)[:K]] = True
    return mask


@dataclass(frozen=True, eq=False)
class ReflectionState:
    """Per-slot reflection coefficients (diagonals of Theta_1 and Theta_2)."""

    u1: np.ndarray
    u2: np.ndarray
    mode: str = RELAXED

    def __post_init__(self):
        u1 = np.array(self.u1, dtype=complex).reshape(-1)
        u2 = np.array(self.u2, dtype=complex).reshape(-1)
        if u1.shape != u2.shape:
            raise ValueError("u1 and u2 must have the same length")
        if self.mode not in (STRICT, RELAXED):
            raise ValueError(f"unknown mode {self.mode!r}")
        u1.setflags(write=False)
        u2.setflags(write=False)
        object.__setattr__(self, "u1", u1)
        object.__setattr__(self, "u2", u2)

    def passive_violation(self, cfg: HybridConfig) -> float:
        """Largest breach of the passive modulus rule for this state's mode."""
        idx = cfg.passive
        if idx.size == 0:
            return 0.0
        mods = np.abs(np.concatenate([self.u1[idx], self.u2[idx]]))
        if self.mode == STRICT:
            return float(np.max(np.abs(mods - 1.0)))
        return float(max(np.max(mods - 1.0), 0.0))

    def validate(self, cfg: HybridConfig, tol: float = 1e-9) -> None:
        if self.u1.shape != (cfg.N,):
            raise ValueError("reflection vectors do not match N")
        if self.passive_violation(cfg) > tol:
            raise ValueError(f"passive modulus rule violated ({self.mode} mode)")


@dataclass(frozen=True)
class SnrBreakdown:
    signal_power: float
    noise_slot1: float
    noise_relay: float
    noise_slot2: float

    @property
    def noise_total(self) -> float:
        return self.noise_slot1 + self.noise_relay + self.noise_slot2 + 1.0

    @property
    def snr(self) -> float:
        return self.signal_power / self.noise_total


def _check_dims(ch: ChannelSet, A: np.ndarray, refl: ReflectionState, cfg: HybridConfig):
    if (ch.M, ch.N) != (cfg.M, cfg.N):
        raise ValueError(f"channel dims {(ch.M, ch.N)} != config dims {(cfg.M, cfg.N)}")
    if np.shape(A) != (cfg.M, cfg.M):
        raise ValueError(f"A must be {cfg.M}x{cfg.M}")
    if refl.u1.shape != (cfg.N,):
        raise ValueError("reflection vectors do not match N")


def relay_input(ch: ChannelSet, u1: np.ndarray) -> np.ndarray:
    """Effective source-to-relay channel ``h_sr + H_ir Theta_1 h_si``."""
    return ch.h_sr + ch.H_ir @ np.diag(u1) @ ch.h_si


def relay_output_row(ch: ChannelSet, u2: np.ndarray) -> np.ndarray:
    """Effective relay-to-destination row ``h_rd^H + h_id^H Theta_2 H_ir^H``."""
    return ch.h_rd.conj() + ch.h_id.conj() @ np.diag(u2) @ ch.H_ir.conj().T


def snr_direct(ch: ChannelSet, A: np.ndarray, refl: ReflectionState, cfg: HybridConfig) -> SnrBreakdown:
    _check_dims(ch, A, refl, cfg)
    A = np.asarray(A, dtype=complex)
    EK = np.diag(cfg.E)
    Th1, Th2 = np.diag(refl.u1), np.diag(refl.u2)
    g = relay_output_row(ch, refl.u2)
    s = relay_input(ch, refl.u1)
    gA = g @ A
    return SnrBreakdown(
        signal_power=float(cfg.gamma_s * abs(gA @ s) ** 2),
        noise_slot1=float(np.linalg.norm(gA @ ch.H_ir @ EK @ Th1) ** 2),
        noise_relay=float(np.linalg.norm(gA) ** 2),
        noise_slot2=float(np.linalg.norm(ch.h_id.conj() @ EK @ Th2) ** 2),
    )


def rate(snr: float) -> float:
    """Achievable rate in bits/s/Hz over the two-slot link."""
    if snr < 0:
        raise ValueError(f"SNR must be nonnegative, got {snr}")
    return 0.5 * float(np.log2(1.0 + snr))


def irs_power_slot1(refl: ReflectionState, ch: ChannelSet, cfg: HybridConfig) -> float:
    EK = np.diag(cfg.E)
    Th1 = np.diag(refl.u1)
    return float(
        cfg.gamma_s * np.linalg.norm(EK @ Th1 @ ch.h_si) ** 2
        + np.linalg.norm(EK @ Th1, "fro") ** 2
    )


def relay_power(A: np.ndarray, refl: ReflectionState, ch: ChannelSet, cfg: HybridConfig) -> float:
    A = np.asarray(A, dtype=complex)
    EK = np.diag(cfg.E)
    s = relay_input(ch, refl.u1)
    return float(
        cfg.gamma_s * np.linalg.norm(A @ s) ** 2
        + np.linalg.norm(A @ ch.H_ir @ EK @ np.diag(refl.u1), "fro") ** 2
        + np.linalg.norm(A, "fro") ** 2
    )


def irs_power_slot2(u2: np.ndarray, A: np.ndarray, u1: np.ndarray, ch: ChannelSet, cfg: HybridConfig) -> float:
    A = np.asarray(A, dtype=complex)
    EK = np.diag(cfg.E)
    F = EK @ np.diag(u2) @ ch.H_ir.conj().T  # E_K Theta_2 H_ir^H
    s = relay_input(ch, u1)
    return float(
        cfg.gamma_s * np.linalg.norm(F @ A @ s) ** 2
        + np.linalg.norm(F @ A @ ch.H_ir @ EK @ np.diag(u1), "fro") ** 2
        + np.linalg.norm(F @ A, "fro") ** 2
        + np.linalg.norm(EK @ np.diag(u2), "fro") ** 2
    )


@dataclass
class FeasibilityReport:
    """Margins of the modulus and power constraints.

    ``margins`` are absolute (budget minus usage, in units of sigma^2; for the
    modulus rule, minus the largest breach).  ``relative`` divides each power
    margin by its budget.  ``feasible`` is judged on the relative margins.
    """

    margins: dict = field(default_factory=dict)
    relative: dict = field(default_factory=dict)
    tol: float = 1e-6

    @property
    def feasible(self) -> bool:
        return all(v >= -self.tol for v in self.relative.values())

    def violated(self) -> list[str]:
        return [k for k, v in self.relative.items() if v < -self.tol]


def check_feasible(A, refl: ReflectionState, ch: ChannelSet, cfg: HybridConfig, tol: float = 1e-6) -> FeasibilityReport:
    rep = FeasibilityReport(tol=tol)
    mod = -refl.passive_violation(cfg)
    rep.margins["modulus"] = mod
    rep.relative["modulus"] = mod
    for key, used, budget in (
        ("irs_slot1", irs_power_slot1(refl, ch, cfg), cfg.gamma_i),
        ("relay", relay_power(A, refl, ch, cfg), cfg.gamma_r),
        ("irs_slot2", irs_power_slot2(refl.u2, A, refl.u1, ch, cfg), cfg.gamma_i),
    ):
        rep.margins[key] = budget - used
        rep.relative[key] = (budget - used) / budget
    return rep
