"""Quadratic-form representations of the three alternating subproblems.

A :class:`QuadForm` stores ``value(x) = x^H M0 x + 2 Re{q^H x} + r``.  The
builders below rewrite the SNR numerator/denominator and each power constraint
as such forms in the variable of one subproblem (``a = vec(A)``, ``u1``, or
``u2``) with the other two blocks held fixed.

Variable conventions
--------------------
* A-step: ``x = vec(A)``, column-major.
* u1-step: ``x = diag(Theta_1)``.
* u2-step: ``x = conj(diag(Theta_2))``.  With this choice
  ``h_id^H Theta_2 y = x^H (conj(h_id) * y)``, which gives the vectors h3, Q1,
  Q2, Q3 their linear-in-``x^H`` shape.  :func:`u2_from_variable` maps back.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet
from .model import HybridConfig, relay_input, relay_output_row


def vec(X: np.ndarray) -> np.ndarray:
    """Column-major stacking."""
    return np.asarray(X).reshape(-1, order="F")


def unvec(x: np.ndarray, rows: int, cols: int | None = None) -> np.ndarray:
    return np.asarray(x).reshape((rows, rows if cols is None else cols), order="F")


def kron(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return np.kron(X, Y)


def hadamard(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    X, Y = np.asarray(X), np.asarray(Y)
    if X.shape != Y.shape:
        raise ValueError(f"hadamard shape mismatch {X.shape} vs {Y.shape}")
    return X * Y


def _herm(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.conj().T)


@dataclass(frozen=True, eq=False)
class QuadForm:
    """``x^H M0 x + 2 Re{q^H x} + r`` with Hermitian ``M0`` (symmetrized on construction)."""

    M0: np.ndarray
    q: np.ndarray
    r: float = 0.0

    def __post_init__(self):
        M0 = _herm(np.atleast_2d(np.asarray(self.M0, dtype=complex)))
        q = np.asarray(self.q, dtype=complex).reshape(-1)
        if M0.shape != (q.size, q.size):
            raise ValueError(f"M0 shape {M0.shape} does not match q length {q.size}")
        object.__setattr__(self, "M0", M0)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", float(np.real(self.r)))

    @property
    def dim(self) -> int:
        return self.q.size

    @classmethod
    def zeros(cls, n: int) -> "QuadForm":
        return cls(np.zeros((n, n), complex), np.zeros(n, complex), 0.0)

    @classmethod
    def constant(cls, n: int, r: float) -> "QuadForm":
        return cls(np.zeros((n, n), complex), np.zeros(n, complex), r)

    @classmethod
    def affine_sq(cls, w: np.ndarray, c: complex = 0.0, weight: float = 1.0) -> "QuadForm":
        """``weight * |c + w^H x|^2``."""
        w = np.asarray(w, dtype=complex).reshape(-1)
        return cls(weight * np.outer(w, w.conj()), weight * c * w, weight * abs(c) ** 2)

    @classmethod
    def norm_sq(cls, P: np.ndarray, y: np.ndarray | None = None, weight: float = 1.0) -> "QuadForm":
        """``weight * ||y + P x||^2``."""
        P = np.asarray(P, dtype=complex)
        y = np.zeros(P.shape[0], complex) if y is None else np.asarray(y, dtype=complex)
        return cls(weight * P.conj().T @ P, weight * P.conj().T @ y, weight * np.vdot(y, y).real)

    @classmethod
    def diagonal(cls, d: np.ndarray, r: float = 0.0) -> "QuadForm":
        d = np.asarray(d, dtype=float)
        return cls(np.diag(d).astype(complex), np.zeros(d.size, complex), r)

    def value(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=complex)
        return float(np.vdot(x, self.M0 @ x).real + 2.0 * np.vdot(self.q, x).real + self.r)

    def minorant(self, x_tilde: np.ndarray) -> "QuadForm":
        """First-order Taylor expansion at ``x_tilde``; a global minorant when M0 is PSD."""
        xt = np.asarray(x_tilde, dtype=complex)
        n = self.dim
        return QuadForm(
            np.zeros((n, n), complex),
            self.M0 @ xt + self.q,
            self.r - np.vdot(xt, self.M0 @ xt).real,
        )

    def __add__(self, other: "QuadForm") -> "QuadForm":
        return QuadForm(self.M0 + other.M0, self.q + other.q, self.r + other.r)

    def __sub__(self, other: "QuadForm") -> "QuadForm":
        return self + other.scaled(-1.0)

    def scaled(self, s: float) -> "QuadForm":
        return QuadForm(s * self.M0, s * self.q, s * self.r)

    def shifted(self, dr: float) -> "QuadForm":
        return QuadForm(self.M0, self.q, self.r + dr)

    def is_constant(self) -> bool:
        return not (np.any(self.M0) or np.any(self.q))


@dataclass
class StepForms:
    """Everything one subproblem needs.

    The true subproblem objective is ``numerator(x) / denominator(x)`` and must
    equal the direct SNR.  ``constraints`` maps a name to ``(form, bound)``
    meaning ``form(x) <= bound``.  ``modulus_indices`` lists entries with the
    relaxed passive rule ``|x_i|^2 <= 1``.  ``parts`` holds the named
    intermediate quantities (B1, h1, Q1, ...) for inspection.
    """

    numerator: QuadForm
    denominator: QuadForm
    constraints: dict[str, tuple[QuadForm, float]]
    modulus_indices: np.ndarray
    parts: dict = field(default_factory=dict)

    def ratio(self, x: np.ndarray) -> float:
        return self.numerator.value(x) / self.denominator.value(x)


def build_a_step(ch: ChannelSet, u1: np.ndarray, u2: np.ndarray, cfg: HybridConfig) -> StepForms:
    """Forms in ``a = vec(A)``: SNR = gamma_s a^H B1 a / (a^H (B2 + B3) a + const)."""
    M = cfg.M
    E = cfg.E
    I_M = np.eye(M)
    s = relay_input(ch, u1)                      # h_sr + H_ir Theta_1 h_si
    g = relay_output_row(ch, u2)                 # h_rd^H + h_id^H Theta_2 H_ir^H
    T = ch.H_ir @ np.diag(E * u1)                # H_ir E_K Theta_1
    F = np.diag(E * u2) @ ch.H_ir.conj().T       # E_K Theta_2 H_ir^H
    Sss = np.outer(s.conj(), s)
    Stt = T.conj() @ T.T
    Ggg = np.outer(g.conj(), g)
    Gff = F.conj().T @ F

    B1 = kron(Sss, Ggg)
    B2 = kron(Stt, Ggg)
    B3 = kron(I_M, Ggg)
    C1 = kron(Sss, I_M)
    C2 = kron(Stt, I_M)
    D1 = kron(Sss, Gff)
    D2 = kron(Stt, Gff)
    D3 = kron(I_M, Gff)

    n = M * M
    zero = np.zeros(n, complex)
    slot2_noise = float(np.sum(E * np.abs(ch.h_id * u2) ** 2))   # ||h_id^H E_K Theta_2||^2
    fixed_irs2 = float(np.sum(E * np.abs(u2) ** 2))              # ||E_K Theta_2||_F^2
    gs = cfg.gamma_s
    return StepForms(
        numerator=QuadForm(gs * B1, zero, 0.0),
        denominator=QuadForm(B2 + B3, zero, slot2_noise + 1.0),
        constraints={
            "relay": (QuadForm(gs * C1 + C2 + np.eye(n), zero, 0.0), cfg.gamma_r),
            "irs_slot2": (QuadForm(gs * D1 + D2 + D3, zero, 0.0), cfg.gamma_i - fixed_irs2),
        },
        modulus_indices=np.array([], dtype=int),
        parts=dict(B1=B1, B2=B2, B3=B3, C1=C1, C2=C2, D1=D1, D2=D2, D3=D3,
                   irs_slot2_fixed=fixed_irs2),
    )


def build_u1_step(ch: ChannelSet, A: np.ndarray, u2: np.ndarray, cfg: HybridConfig) -> StepForms:
    """Forms in ``u1``.

    The slot-1 noise weight uses ``h_rid^H = (h_rd^H + h_id^H Theta_2 H_ir^H) A``,
    i.e. the relay-forwarding row including A, so the denominator reproduces
    ``||h_rid^H H_ir E_K Theta_1||^2`` exactly.
    """
    A = np.asarray(A, dtype=complex)
    E = cfg.E
    gs = cfg.gamma_s
    g = relay_output_row(ch, u2)
    gA = g @ A                                    # h_rid^H
    AH = A @ ch.H_ir
    w = gA @ ch.H_ir                              # h_rid^H H_ir
    h1 = (w * ch.h_si).conj()
    a = complex(gA @ ch.h_sr)
    noise_diag = E * np.abs(w) ** 2
    b = float(np.vdot(gA, gA).real + np.sum(E * np.abs(ch.h_id * u2) ** 2) + 1.0)

    F = np.diag(E * u2) @ ch.H_ir.conj().T        # E_K Theta_2 H_ir^H
    P1 = AH @ np.diag(ch.h_si)
    P3 = F @ AH
    P2 = P3 @ np.diag(ch.h_si)
    h2 = F @ A @ ch.h_sr
    fixed_irs2 = float(np.linalg.norm(F @ A, "fro") ** 2 + np.sum(E * np.abs(u2) ** 2))
    gamma_i_tilde = cfg.gamma_i - fixed_irs2

    irs1 = QuadForm.diagonal(E * (gs * np.abs(ch.h_si) ** 2 + 1.0))
    relay = (
        QuadForm.norm_sq(P1, A @ ch.h_sr, weight=gs)
        + QuadForm.diagonal(E * np.sum(np.abs(AH) ** 2, axis=0))
    ).shifted(np.linalg.norm(A, "fro") ** 2)
    irs2 = QuadForm.norm_sq(P2, h2, weight=gs) + QuadForm.diagonal(E * np.sum(np.abs(P3) ** 2, axis=0))
    return StepForms(
        numerator=QuadForm.affine_sq(h1, a, weight=gs),
        denominator=QuadForm.diagonal(noise_diag, b),
        constraints={
            "irs_slot1": (irs1, cfg.gamma_i),
            "relay": (relay, cfg.gamma_r),
            "irs_slot2": (irs2, float(gamma_i_tilde)),
        },
        modulus_indices=cfg.passive,
        parts=dict(h1=h1, a=a, b=b, noise_diag=noise_diag, h2=h2, P1=P1, P2=P2, P3=P3,
                   gamma_i_tilde=float(gamma_i_tilde), irs_slot2_fixed=fixed_irs2),
    )


def u2_from_variable(x: np.ndarray) -> np.ndarray:
    return np.conj(x)


def u2_to_variable(u2: np.ndarray) -> np.ndarray:
    return np.conj(u2)


def build_u2_step(ch: ChannelSet, A: np.ndarray, u1: np.ndarray, cfg: HybridConfig) -> StepForms:
    """Forms in ``x = conj(diag(Theta_2))``.

    With ``v = A (h_sr + H_ir Theta_1 h_si)`` the slot-2 IRS power is
    ``x^H [gamma_s H3^H H3 + (H4 H4^H + H_ir^H A A^H H_ir + I) ⊙ E_K] x`` where
    ``H3 = E_K diag(H_ir^H v)`` and ``H4 = H_ir^H A H_ir E_K Theta_1``.  The
    constraint is assembled from the per-element expansion of the power and
    asserted equal to the H3/H4 form.
    """
    A = np.asarray(A, dtype=complex)
    E = cfg.E
    gs = cfg.gamma_s
    EK = np.diag(E)
    HirH = ch.H_ir.conj().T
    s = relay_input(ch, u1)
    v = A @ s
    Dh = np.diag(ch.h_id.conj())                  # diag{h_id^H}
    T = ch.H_ir @ EK @ np.diag(u1)                # H_ir E_K Theta_1
    rdA = ch.h_rd.conj() @ A                      # h_rd^H A

    h3 = Dh @ HirH @ v
    c = complex(rdA @ s)
    h4 = (rdA @ T).conj()
    Q1 = Dh @ HirH @ A @ T
    Q2 = Dh @ HirH @ A
    Q3 = np.diag((ch.h_id * E).conj())

    den = (
        QuadForm.norm_sq(Q1.conj().T, h4)          # ||x^H Q1 + h4^H||^2
        + QuadForm.norm_sq(Q2.conj().T, rdA.conj())
        + QuadForm.norm_sq(Q3.conj().T)
    ).shifted(1.0)

    HA = HirH @ A
    H4 = HA @ T
    per_elem = gs * np.abs(HirH @ v) ** 2 + np.sum(np.abs(H4) ** 2, axis=1) + np.sum(np.abs(HA) ** 2, axis=1) + 1.0
    power = QuadForm.diagonal(E * per_elem)
    H3 = EK @ np.diag(HirH @ v)
    power_matrix = gs * H3.conj().T @ H3 + hadamard(H4 @ H4.conj().T + HA @ HA.conj().T + np.eye(cfg.N), EK)
    scale = max(np.max(np.abs(power_matrix)), 1.0)
    if not np.allclose(power.M0, power_matrix, rtol=0.0, atol=1e-12 * scale):
        raise AssertionError("u2 power form disagrees with its H3/H4 expansion")

    return StepForms(
        numerator=QuadForm.affine_sq(h3, np.conj(c), weight=gs),
        denominator=den,
        constraints={"irs_slot2": (power, cfg.gamma_i)},
        modulus_indices=cfg.passive,
        parts=dict(h3=h3, h4=h4, c=c, Q1=Q1, Q2=Q2, Q3=Q3, H3=H3, H4=H4, power_matrix=power_matrix),
    )
