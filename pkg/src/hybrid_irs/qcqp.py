"""Concave-quadratic maximization under convex quadratic constraints.

Problems are stated over complex vectors and solved in the real embedding
``z = [Re x; Im x]`` by a feasible-start log-barrier method with damped Newton
centering.

Algorithm
---------
1. Normalize: each constraint ``c_k(x) <= b_k`` is divided by ``b_k - c_k(0)``
   (so the origin has normalized slack 1), the variable is rescaled by the
   inverse square root of the summed constraint curvature (Jacobi scaling), and
   the objective is divided by ``||Q|| + ||p||`` of the scaled problem.  Newton
   steps are affine invariant, so this only affects floating point conditioning
   and the meaning of ``tol``: the returned point is within ``tol`` times that
   objective scale of the optimum.
2. Start from ``x0`` pulled 10% toward the origin when the origin is strictly
   feasible, otherwise from ``x0`` itself.  An infeasible ``x0`` is shrunk by
   bisection on ``tau * x0``.
3. Barrier parameter ``mu_b = 1/t`` starts at 10 and is divided by 10 after each
   centering until the duality-gap bound ``m / t`` falls below ``tol``.
4. Centering is Newton on ``t*phi(z) - sum log(-h_k(z))`` with an exact
   fraction-to-boundary step (constraints are quadratic along a line, so the
   largest feasible step solves a scalar quadratic) followed by Armijo
   backtracking (``c1 = 0.25``, halving).  A centering stops when half the
   squared Newton decrement drops below ``1e-4`` while the gap bound exceeds
   ``1e-5`` and below ``1e-10`` afterwards (so the center objectives stay
   monotone to roundoff), or when the line search stalls at roundoff level.
   The reported duals are the barrier estimates ``1 / (t |h_k|)`` or a
   least-squares refit on the near-active set, whichever leaves the smaller
   KKT residual.
5. Each centering after the second starts from an extrapolation of the last
   two centers along ``z(t) ~ z* - c / t``; the target center is unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .forms import QuadForm

OPTIMAL = "optimal"
MAX_ITER = "max_iter"
INFEASIBLE = "infeasible"

_ARMIJO = 0.25
_BACKTRACK = 0.5
_FRACTION_TO_BOUNDARY = 0.99
_CENTERING_TOL = 1e-10
_LOOSE_CENTERING_TOL = 1e-4       # intermediate stages only need a rough center
_TIGHTEN_BELOW_GAP = 1e-5         # stages with a smaller gap bound are centered tightly
_MU_START = 10.0
_MU_FACTOR = 10.0


@dataclass(frozen=True, eq=False)
class ComplexQcqp:
    """maximize ``objective(x)`` s.t. ``form(x) <= bound`` and ``|x_i|^2 <= 1`` for i in ``modulus_indices``."""

    objective: QuadForm
    constraints: tuple = ()
    modulus_indices: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple((f, float(b)) for f, b in self.constraints))
        object.__setattr__(self, "modulus_indices", np.asarray(self.modulus_indices, dtype=int).reshape(-1))
        for f, _ in self.constraints:
            if f.dim != self.dim:
                raise ValueError("constraint dimension mismatch")

    @property
    def dim(self) -> int:
        return self.objective.dim

    def all_constraints(self) -> list[tuple[QuadForm, float]]:
        """Dense constraints followed by the modulus rules written as diagonal forms."""
        out = list(self.constraints)
        for i in self.modulus_indices:
            d = np.zeros(self.dim)
            d[i] = 1.0
            out.append((QuadForm.diagonal(d), 1.0))
        return out

    def check_convex(self, rtol: float = 1e-10) -> None:
        M0 = self.objective.M0
        ev = np.linalg.eigvalsh(M0) if M0.size else np.zeros(1)
        if ev.max() > rtol * max(np.abs(ev).sum(), 1e-300):
            raise ValueError("objective is not concave")
        for f, _ in self.constraints:
            ev = np.linalg.eigvalsh(f.M0)
            if ev.min() < -rtol * max(np.abs(ev).sum(), 1e-300):
                raise ValueError("constraint is not convex")


@dataclass
class QcqpSolution:
    x: np.ndarray
    objective_value: float
    kkt_residual: float
    barrier_iterations: int
    status: str
    duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    newton_iterations: int = 0
    center_objectives: list = field(default_factory=list)
    objective_scale: float = 1.0


@dataclass
class RealQcqp:
    """Real embedding: maximize ``z^T Q z + 2 p^T z + r`` s.t. ``z^T G_k z + 2 g_k^T z + c_k <= b_k``."""

    Q: np.ndarray
    p: np.ndarray
    r: float
    G: np.ndarray  # (m, n, n)
    g: np.ndarray  # (m, n)
    c: np.ndarray  # (m,)
    b: np.ndarray  # (m,)

    def objective(self, z: np.ndarray) -> float:
        return float(z @ self.Q @ z + 2.0 * self.p @ z + self.r)

    def constraint_values(self, z: np.ndarray) -> np.ndarray:
        return np.einsum("i,kij,j->k", z, self.G, z) + 2.0 * self.g @ z + self.c


def embed_matrix(M: np.ndarray) -> np.ndarray:
    return np.block([[M.real, -M.imag], [M.imag, M.real]])


def embed_vector(x: np.ndarray) -> np.ndarray:
    return np.concatenate([np.real(x), np.imag(x)])


def unembed_vector(z: np.ndarray) -> np.ndarray:
    n = z.size // 2
    return z[:n] + 1j * z[n:]


def to_real(qcqp: ComplexQcqp) -> RealQcqp:
    for f in [qcqp.objective] + [f for f, _ in qcqp.constraints]:
        if not np.allclose(f.M0, f.M0.conj().T, rtol=0, atol=1e-12 * max(np.abs(f.M0).max(initial=0), 1e-300)):
            raise ValueError("quadratic part is not Hermitian")
    cons = qcqp.all_constraints()
    n2 = 2 * qcqp.dim
    m = len(cons)
    G = np.empty((m, n2, n2))
    g = np.empty((m, n2))
    for k, (f, _) in enumerate(cons):
        G[k] = embed_matrix(f.M0)
        g[k] = embed_vector(f.q)
    return RealQcqp(
        Q=embed_matrix(qcqp.objective.M0),
        p=embed_vector(qcqp.objective.q),
        r=qcqp.objective.r,
        G=G,
        g=g,
        c=np.array([f.r for f, _ in cons]),
        b=np.array([b for _, b in cons]),
    )


def kkt_residual(qcqp: ComplexQcqp, x: np.ndarray, duals) -> float:
    """Stationarity norm + complementarity + primal infeasibility, in the problem's own units.

    ``duals`` follow the order of :meth:`ComplexQcqp.all_constraints`.
    """
    rp = to_real(qcqp)
    z = embed_vector(np.asarray(x, dtype=complex))
    lam = np.asarray(duals, dtype=float).reshape(-1)
    if lam.size != rp.b.size:
        raise ValueError("one dual per constraint required")
    if np.any(lam < 0):
        raise ValueError("duals must be nonnegative")
    grad_f = 2.0 * (rp.Q @ z + rp.p)
    grad_h = 2.0 * (np.einsum("kij,j->ki", rp.G, z) + rp.g)
    stat = grad_f - lam @ grad_h if lam.size else grad_f
    slack = rp.b - rp.constraint_values(z)
    return float(np.linalg.norm(stat) + np.sum(np.abs(lam * slack)) + np.sum(np.maximum(-slack, 0.0)))


class _Scaled:
    """Normalized problem in ``y = z / d``.

    minimize ``y^T P y + 2 w^T y`` subject to dense constraints
    ``y^T G_k y + 2 g_k^T y <= beta_k`` and modulus constraints
    ``rho_i (y_a^2 + y_b^2) <= 1`` on the real/imaginary pairs ``(a, b)``.
    """

    def __init__(self, qcqp: ComplexQcqp):
        n = qcqp.dim
        n2 = 2 * n
        dense = [(f, b) for f, b in qcqp.constraints]
        keep = np.array([not f.is_constant() for f, _ in dense], dtype=bool)
        c0 = np.array([b - f.r for f, b in dense])
        self.n_dense_total = len(dense)
        self.dropped_slack = c0[~keep] if len(dense) else np.zeros(0)
        self.keep = keep
        kept = [dense[k] for k in np.flatnonzero(keep)]
        G = np.array([embed_matrix(f.M0) for f, _ in kept]).reshape(len(kept), n2, n2)
        g = np.array([embed_vector(f.q) for f, _ in kept]).reshape(len(kept), n2)
        beta = c0[keep] if len(dense) else np.zeros(0)
        scale_b = np.array([abs(b) + abs(f.r) for f, b in kept])
        norm = np.where(beta > 0, beta, scale_b + 1e-300)
        G = G / norm[:, None, None]
        g = g / norm[:, None]
        beta = beta / norm

        mod = qcqp.modulus_indices
        self.ia, self.ib = mod, mod + n
        self.flat_pairs = np.concatenate([
            self.ia * n2 + self.ia, self.ib * n2 + self.ib, self.ia * n2 + self.ib, self.ib * n2 + self.ia,
        ])
        curv = np.einsum("kii->i", G) if G.size else np.zeros(n2)
        curv[self.ia] += 1.0
        curv[self.ib] += 1.0
        d = np.where(curv > 0, 1.0 / np.sqrt(np.where(curv > 0, curv, 1.0)), 1.0)
        self.d = d
        self.rho = d[self.ia] ** 2               # equal for the re/im pair of a Hermitian embedding
        self.G = G * d[None, :, None] * d[None, None, :]
        self.g = g * d[None, :]
        self.beta = beta
        self.norm = norm
        Q = embed_matrix(qcqp.objective.M0) * d[:, None] * d[None, :]
        p = embed_vector(qcqp.objective.q) * d
        self.obj_scale = float(np.linalg.norm(Q, 2) + np.linalg.norm(p)) if n else 0.0
        s = self.obj_scale if self.obj_scale > 0 else 1.0
        self.P = -Q / s
        self.w = -p / s
        self.r = qcqp.objective.r
        self.origin_interior = bool(np.all(beta > 0))

    @property
    def m(self) -> int:
        return self.beta.size + self.ia.size

    def h(self, y):
        """Constraint values (dense first, then modulus) and the products G_k y."""
        Gy = self.G @ y
        hd = Gy @ y + 2.0 * self.g @ y - self.beta
        hm = self.rho * (y[self.ia] ** 2 + y[self.ib] ** 2) - 1.0
        return np.concatenate([hd, hm]), Gy

    def phi(self, y):
        return float(y @ self.P @ y + 2.0 * self.w @ y)


def _max_step(sc: _Scaled, y, dy, hval, Gy):
    ia, ib = sc.ia, sc.ib
    Gdy = sc.G @ dy
    dya, dyb = dy[ia], dy[ib]
    a = np.concatenate([Gdy @ dy, sc.rho * (dya * dya + dyb * dyb)])
    b = 2.0 * np.concatenate([Gy @ dy + sc.g @ dy, sc.rho * (y[ia] * dya + y[ib] * dyb)])
    disc = np.sqrt(np.maximum(b * b - 4.0 * a * hval, 0.0))
    den = b + disc
    pos = den > 0
    if not pos.any():
        return np.inf
    return float(np.min(-2.0 * hval[pos] / den[pos]))


def _barrier_derivatives(sc: _Scaled, y, t, hval, Gy):
    md = sc.beta.size
    n = y.size
    inv = -1.0 / hval                          # positive
    inv_d, inv_m = inv[:md], inv[md:]
    J = 2.0 * (Gy + sc.g)                      # dense constraint gradients (md, n)
    grad = 2.0 * t * (sc.P @ y + sc.w) + inv_d @ J
    H = (2.0 * t) * sc.P + (2.0 * inv_d @ sc.G.reshape(md, n * n)).reshape(n, n)
    H += (J.T * (inv_d * inv_d)) @ J
    if sc.ia.size:
        ga = 2.0 * sc.rho * y[sc.ia]
        gb = 2.0 * sc.rho * y[sc.ib]
        grad[sc.ia] += inv_m * ga
        grad[sc.ib] += inv_m * gb
        w2 = inv_m * inv_m
        diag = 2.0 * sc.rho * inv_m
        cross = w2 * ga * gb
        H.reshape(-1)[sc.flat_pairs] += np.concatenate([diag + w2 * ga * ga, diag + w2 * gb * gb, cross, cross])
    return grad, H, inv


def _center(sc: _Scaled, y, t, budget, tol=_CENTERING_TOL):
    """Newton centering at barrier weight t; returns (y, newton_steps, converged)."""
    steps = 0
    n = y.size
    hval, Gy = sc.h(y)
    F0 = t * sc.phi(y) - np.sum(np.log(-hval))
    while steps < budget:
        grad, H, _ = _barrier_derivatives(sc, y, t, hval, Gy)
        try:
            dy = -np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            dy = -np.linalg.lstsq(H + 1e-14 * np.trace(H) / n * np.eye(n), grad, rcond=None)[0]
        dec2 = float(-grad @ dy)
        steps += 1
        if dec2 / 2.0 <= tol:
            return y, steps, True
        alpha = min(1.0, _FRACTION_TO_BOUNDARY * _max_step(sc, y, dy, hval, Gy))
        while True:
            yn = y + alpha * dy
            hn, Gyn = sc.h(yn)
            if np.all(hn < 0):
                Fn = t * sc.phi(yn) - np.sum(np.log(-hn))
                if Fn <= F0 + _ARMIJO * alpha * float(grad @ dy) + 1e-13 * abs(F0):
                    break
            alpha *= _BACKTRACK
            if alpha < 1e-6:
                return y, steps, dec2 < 1e-6    # stalled at roundoff level
        y, hval, Gy, F0 = yn, hn, Gyn, Fn
    return y, steps, False


def _predict(sc: _Scaled, y_prev, y):
    """Extrapolate along the central path, modelled as ``y* - c / t``.

    Only the starting point of the next centering changes, never its target.
    """
    dy = (y - y_prev) / _MU_FACTOR
    for _ in range(4):
        if np.all(sc.h(y + dy)[0] < 0):
            return y + dy
        dy *= 0.5
    return y


def _shrink_into_interior(sc: _Scaled, y0):
    """Largest tau in [0, 1] with tau*y0 strictly feasible, by bisection."""
    if np.all(sc.h(y0)[0] < 0):
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if np.all(sc.h(mid * y0)[0] < 0):
            lo = mid
        else:
            hi = mid
    return lo


def solve(qcqp: ComplexQcqp, x0: np.ndarray | None = None, tol: float = 1e-9, max_iter: int = 400) -> QcqpSolution:
    """Maximize a concave quadratic subject to convex quadratic constraints.

    Parameters
    ----------
    qcqp : ComplexQcqp
    x0 : complex array, optional
        Starting point (defaults to the origin).  Need not be strictly feasible
        if the origin is.
    tol : float
        Duality-gap target relative to the normalized objective scale.
    max_iter : int
        Cap on the total number of Newton steps.

    Returns
    -------
    QcqpSolution
        ``duals`` are in the original units and ordered as
        :meth:`ComplexQcqp.all_constraints`; ``kkt_residual`` is measured in the
        normalized problem.
    """
    n = qcqp.dim
    sc = _Scaled(qcqp)
    x_start = np.zeros(n, complex) if x0 is None else np.asarray(x0, dtype=complex)
    z0 = embed_vector(x_start)
    m = sc.m

    if np.any(sc.dropped_slack < 0):
        return QcqpSolution(x_start, qcqp.objective.value(x_start), np.inf, 0, INFEASIBLE)

    y0 = z0 / sc.d
    if sc.origin_interior:
        tau = _shrink_into_interior(sc, y0)
        y = 0.9 * tau * y0
    elif np.all(sc.h(y0)[0] < 0):
        y = y0
    else:
        return QcqpSolution(x_start, qcqp.objective.value(x_start), np.inf, 0, INFEASIBLE)

    if m == 0:
        # unconstrained concave quadratic: stationary point if bounded
        y = np.linalg.lstsq(sc.P, -sc.w, rcond=None)[0]
        if np.linalg.norm(sc.P @ y + sc.w) > 1e-9 * max(np.linalg.norm(sc.w), 1.0):
            raise ValueError("unbounded objective")
        x = unembed_vector(sc.d * y)
        duals = np.zeros(sc.n_dense_total)
        return QcqpSolution(x, qcqp.objective.value(x), 0.0, 0, OPTIMAL, duals, 0, [], sc.obj_scale)

    s = sc.obj_scale if sc.obj_scale > 0 else 1.0
    t = 1.0 / _MU_START
    newton = 0
    stages = 0
    centers = []
    status = MAX_ITER
    y_prev = None                      # center of the previous stage
    while newton < max_iter:
        y_center = y
        if y_prev is not None:
            y = _predict(sc, y_prev, y)
        final = m / t <= tol
        loose = not final and m / t > _TIGHTEN_BELOW_GAP
        y, k, ok = _center(sc, y, t, max_iter - newton, _LOOSE_CENTERING_TOL if loose else _CENTERING_TOL)
        newton += k
        stages += 1
        centers.append(-sc.phi(y) * s + sc.r)
        if not ok:
            break
        if final:
            status = OPTIMAL
            break
        y_prev = y_center if stages > 1 else None
        t *= _MU_FACTOR

    hval, Gy = sc.h(y)
    lam_hat = 1.0 / (t * -hval)
    resid = _kkt_residual(sc, y, lam_hat, hval, Gy)
    # The barrier estimate 1/(t |h|) carries the roundoff of h itself once the
    # slack is ~1e-10; a least-squares refit on the near-active set is sharper.
    lam_ls = _refit_duals(sc, y, hval, Gy)
    if lam_ls is not None:
        r_ls = _kkt_residual(sc, y, lam_ls, hval, Gy)
        if r_ls < resid:
            lam_hat, resid = lam_ls, r_ls
    if status == OPTIMAL and resid > 1e-6:
        status = MAX_ITER

    md = sc.beta.size
    dense_duals = np.zeros(sc.n_dense_total)
    dense_duals[sc.keep] = lam_hat[:md] * s / sc.norm
    # modulus rule |x_i|^2 <= 1 equals rho_i |y|^2 <= 1 without renormalization
    duals = np.concatenate([dense_duals, lam_hat[md:] * s])
    x = unembed_vector(sc.d * y)
    value = qcqp.objective.value(x)

    # never return something worse than a feasible starting point
    if x0 is not None and _feasible(qcqp, x_start):
        v0 = qcqp.objective.value(x_start)
        if v0 > value:
            x, value = x_start.copy(), v0
    return QcqpSolution(x, value, resid, stages, status, duals, newton, centers, sc.obj_scale)


def _constraint_jacobian(sc: _Scaled, y, Gy):
    """Rows are the gradients of the dense then the modulus constraints."""
    md, n = sc.beta.size, y.size
    J = np.zeros((sc.m, n))
    J[:md] = 2.0 * (Gy + sc.g)
    k = np.arange(sc.ia.size)
    J[md + k, sc.ia] = 2.0 * sc.rho * y[sc.ia]
    J[md + k, sc.ib] = 2.0 * sc.rho * y[sc.ib]
    return J


def _kkt_residual(sc: _Scaled, y, lam, hval, Gy) -> float:
    stat = 2.0 * (sc.P @ y + sc.w) + lam @ _constraint_jacobian(sc, y, Gy)
    return float(np.linalg.norm(stat) + np.sum(lam * -hval))


def _refit_duals(sc: _Scaled, y, hval, Gy, active_tol=1e-6):
    """Nonnegative least-squares duals supported on the near-active constraints."""
    act = np.flatnonzero(-hval <= active_tol)
    lam = np.zeros(sc.m)
    if act.size == 0:
        return lam
    J = _constraint_jacobian(sc, y, Gy)[act]
    rhs = -2.0 * (sc.P @ y + sc.w)
    # active-set pass: drop negative multipliers until all are nonnegative
    while act.size:
        sol = np.linalg.lstsq(J.T, rhs, rcond=None)[0]
        if np.all(sol >= 0):
            lam[act] = sol
            return lam
        keep = sol > np.min(sol)
        act, J = act[keep], J[keep]
    return lam


def _feasible(qcqp: ComplexQcqp, x) -> bool:
    if any(f.value(x) > b for f, b in qcqp.constraints):
        return False
    return bool(np.all(np.abs(x[qcqp.modulus_indices]) ** 2 <= 1.0))
