"""Blow-up criterion for the derivative Riccati system.

Along a characteristic, ``Y = (Q, P)`` with ``Y' = M Y`` and
``Y(0) = (1, q1, q2, s)`` linearizes the Riccati equation: the derivative
triple is ``P / Q``.  A classical solution breaks exactly when ``Q`` has a
root on ``theta > 0``.  :func:`blowup_verdict` finds the first root, or
certifies that none exists.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import schur
from scipy.optimize import brentq

from .spectral import EigenStructure, Params, build_matrix, eigenvalues

__all__ = [
    "DerivTriple",
    "QMode",
    "QFunction",
    "SingularBasis",
    "VerdictKind",
    "Verdict",
    "DomainError",
    "mode_coefficients",
    "make_q_fallback",
    "q_eval",
    "blowup_verdict",
    "nu0_margin",
    "nu0_criterion",
    "critical_k",
    "EPS_Q",
]

#: Band around zero for min Q reported as a boundary case.
EPS_Q = 1e-9

# spectral evaluation is only trusted up to this eigenvector condition number
SPECTRAL_COND_MAX = 1e8
# |C1| below this triggers the slow-limit edge handling
EPS_C1 = 1e-6
# longest horizon scanned before giving up with a boundary verdict
T_CAP = 2e5
_CHUNK = 8192
_ODE_RTOL = 1e-12
_ODE_ATOL = 1e-14


class SingularBasis(RuntimeError):
    pass


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class DerivTriple:
    """Initial spatial derivatives ``(dV1/drho, dV2/drho, dE/drho)`` at one point."""

    q1: float
    q2: float
    s: float

    def __post_init__(self):
        for name in ("q1", "q2", "s"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
            object.__setattr__(self, name, v + 0.0)

    def initial_state(self) -> np.ndarray:
        return np.array([1.0, self.q1, self.q2, self.s])


class QMode(str, enum.Enum):
    SPECTRAL = "spectral"
    FUNDAMENTAL_ODE = "fundamental_ode"


def _neumaier(terms):
    # compensated sum over the leading axis
    total = np.zeros_like(terms[0])
    comp = np.zeros_like(terms[0])
    for t in terms:
        s = total + t
        big = np.abs(total) >= np.abs(t)
        comp += np.where(big, (total - s) + t, (t - s) + total)
        total = s
    return total + comp


@dataclass(frozen=True)
class QFunction:
    """First component ``Q`` of the linearized solution, plus its companion ``P``.

    In spectral mode ``Y(theta) = sum_k C_k v_k exp(lam_k theta)``.  In
    fundamental-ODE mode ``Y' = M Y`` is integrated from ``Y(0)`` on every
    call; nothing is cached.
    """

    mode: QMode
    params: Params
    w0: DerivTriple
    basis: EigenStructure | None = None
    coeffs: np.ndarray | None = None

    @property
    def limit(self) -> float:
        """``lim Q`` as ``theta -> inf`` (``nu > 0``); equals the zero-mode weight."""
        if self.mode is QMode.SPECTRAL and self.params.nu > 0:
            return float((self.coeffs[0] * self.basis.vectors[0, 0]).real)
        if self.params.nu == 0:
            raise ValueError("Q has no limit for nu == 0")
        M22 = build_matrix(self.params)[1:, 1:]
        p0 = self.w0.initial_state()[1:]
        return float(1.0 - np.linalg.solve(M22, p0)[0])

    def mode_weights(self) -> np.ndarray:
        """Complex weights ``C_k v_k1`` of ``exp(lam_k theta)`` in ``Q``."""
        return self.coeffs * self.basis.vectors[0]

    def evaluate(self, theta):
        """Return ``(Q, dQ/dtheta)`` at ``theta`` (scalar or array)."""
        if self.mode is QMode.SPECTRAL:
            return _spectral_q(self.basis.lam, self.mode_weights(), theta)
        theta = np.asarray(theta, dtype=float)
        Y = self._integrate(theta)
        M = build_matrix(self.params)
        dY = np.tensordot(M, Y, axes=(1, 0))
        return Y[0], dY[0]

    def imag_residue(self, theta):
        """Imaginary part of the spectral mode sum (zero up to rounding)."""
        theta = np.asarray(theta, dtype=float)
        e = np.exp(np.multiply.outer(self.basis.lam, theta))
        return np.tensordot(self.mode_weights(), e, axes=(0, 0)).imag

    def state(self, theta) -> np.ndarray:
        """Full ``Y(theta) = (Q, P1, P2, P3)``; shape ``(4,) + theta.shape``."""
        theta = np.asarray(theta, dtype=float)
        if self.mode is QMode.SPECTRAL:
            e = np.exp(np.multiply.outer(self.basis.lam, theta))
            W = self.basis.vectors * self.coeffs
            return np.tensordot(W, e, axes=(1, 0)).real
        return self._integrate(theta)

    def _integrate(self, theta: np.ndarray) -> np.ndarray:
        flat = theta.ravel()
        if np.any(flat < 0):
            raise ValueError("theta must be non-negative")
        order = np.argsort(flat, kind="stable")
        ts = flat[order]
        y0 = self.w0.initial_state()
        out = np.empty((4, flat.size))
        t_end = float(ts[-1]) if ts.size else 0.0
        if t_end == 0.0:
            out[:] = y0[:, None]
        else:
            sol = _linear_solution(self.params, y0, t_end)
            out[:, order] = sol(ts)
        return out.reshape((4,) + theta.shape)

    def evaluator(self, t_end: float):
        """Vectorized ``theta -> (Q, dQ)`` valid on ``[0, t_end]``.

        For the ODE mode this integrates once with dense output; the closure
        is local to the caller.
        """
        if self.mode is QMode.SPECTRAL:
            lam, w = self.basis.lam, self.mode_weights()
            return lambda th: _spectral_q(lam, w, th)
        y0 = self.w0.initial_state()
        if t_end <= 0:
            return lambda th: (np.ones_like(np.asarray(th, float)), np.full_like(np.asarray(th, float), y0[1]))
        sol = _linear_solution(self.params, y0, t_end)

        def ev(th):
            Y = sol(np.asarray(th, dtype=float))
            return Y[0], Y[1]

        return ev


def _spectral_q(lam, w, theta):
    theta = np.asarray(theta, dtype=float)
    e = np.exp(np.multiply.outer(lam, theta))
    terms = w.reshape((4,) + (1,) * theta.ndim) * e
    q = _neumaier(terms.real)
    dq = _neumaier((terms * lam.reshape((4,) + (1,) * theta.ndim)).real)
    return q, dq


def _linear_solution(params: Params, y0: np.ndarray, t_end: float):
    M = build_matrix(params)
    sol = solve_ivp(
        lambda t, y: M @ y,
        (0.0, t_end),
        y0,
        method="DOP853",
        rtol=_ODE_RTOL,
        atol=_ODE_ATOL,
        dense_output=True,
    )
    if sol.status != 0:
        raise RuntimeError(f"linear integration failed: {sol.message}")
    return sol.sol


def mode_coefficients(w0: DerivTriple, basis: EigenStructure) -> QFunction:
    """Solve ``sum_k C_k v_k = (1, q1, q2, s)`` for the mode coefficients."""
    if basis.ill_conditioned:
        raise SingularBasis(f"eigenvector condition {basis.condition:.3e}")
    y0 = w0.initial_state()
    V = basis.vectors
    try:
        C = np.linalg.solve(V, y0.astype(complex))
    except np.linalg.LinAlgError as exc:
        raise SingularBasis(str(exc)) from exc
    lam = basis.lam
    if lam[2].imag != 0.0 and lam[3] == lam[2].conjugate():
        c3 = 0.5 * (C[2] + C[3].conjugate())
        C[2], C[3] = c3, c3.conjugate()
    if np.linalg.norm(V @ C - y0) > 1e-10 * max(1.0, np.linalg.norm(y0)):
        raise SingularBasis("mode coefficient residual above tolerance")
    return QFunction(QMode.SPECTRAL, basis.params, w0, basis, C)


def make_q_fallback(w0: DerivTriple, params: Params) -> QFunction:
    return QFunction(QMode.FUNDAMENTAL_ODE, params, w0)


def q_eval(q: QFunction, theta: float) -> tuple[float, float]:
    if theta < 0:
        raise ValueError("theta must be non-negative")
    Q, dQ = q.evaluate(theta)
    return float(Q), float(dQ)


# ---------------------------------------------------------------------------
# verdicts


class VerdictKind(str, enum.Enum):
    SMOOTH = "smooth"
    BLOWUP = "blowup"
    BOUNDARY = "boundary"


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    theta_star: float | None
    q_min: float
    horizon: float
    mode: QMode = QMode.SPECTRAL
    horizon_uncertain: bool = False

    @property
    def blows_up(self) -> bool:
        """Conservative reading: boundary cases count as blow-up."""
        return self.kind is not VerdictKind.SMOOTH

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "theta_star": self.theta_star,
            "q_min": self.q_min,
            "horizon": self.horizon,
            "mode": self.mode.value,
            "horizon_uncertain": self.horizon_uncertain,
        }


def _schur_tail_horizon(params: Params, w0: DerivTriple, a: float, thr: float) -> float:
    """Smallest T with |Q(theta) - lim Q| < thr for all theta >= T.

    Uses ||exp(A t)|| <= exp(a t) sum_j (||N|| t)^j / j! for the Schur form
    A = Z (D + N) Z^*.
    """
    M22 = build_matrix(params)[1:, 1:]
    T, _ = schur(M22, output="complex")
    n = np.linalg.norm(np.triu(T, 1), 2)
    r = np.linalg.solve(M22.T, np.array([1.0, 0.0, 0.0]))
    c = np.linalg.norm(r) * np.linalg.norm(w0.initial_state()[1:])
    if c == 0.0:
        return 0.0

    def log_bound(t):
        x = n * t
        return math.log(c) + a * t + math.log1p(x + 0.5 * x * x)

    def slope(t):
        x = n * t
        return a + (n + n * x) / (1 + x + 0.5 * x * x)

    t_peak = 0.0
    if slope(0.0) > 0:
        hi = 1.0 / abs(a)
        while slope(hi) > 0:
            hi *= 2
        t_peak = brentq(slope, 0.0, hi)
    target = math.log(thr)
    if log_bound(t_peak) < target:
        return t_peak
    hi = max(t_peak, 1.0 / abs(a))
    while log_bound(hi) >= target:
        hi *= 2
    return brentq(lambda t: log_bound(t) - target, t_peak, hi)


def _canonical(w0: DerivTriple, params: Params):
    # M(-b0) = T M(b0) T with T = diag(1, 1, -1, 1): flip q2 with b0
    if params.b0 < 0:
        return DerivTriple(w0.q1, -w0.q2, w0.s), Params(params.nu, -params.b0)
    # at b0 = 0 (either sign of zero) the flip is a symmetry on its own
    if params.b0 == 0 and (w0.q2 < 0 or math.copysign(1.0, params.b0) < 0):
        return DerivTriple(w0.q1, abs(w0.q2), w0.s), Params(params.nu, 0.0)
    return w0, params


def blowup_verdict(
    w0: DerivTriple, params: Params, basis: EigenStructure | None = None
) -> Verdict:
    """Decide whether ``Q`` has a root on ``theta > 0`` and locate the first one.

    ``basis`` may be passed to reuse an eigendecomposition across many
    points with the same parameters (it is recomputed if it does not match).
    """
    w0, params = _canonical(w0, params)
    if basis is None or basis.params != params:
        basis = eigenvalues(params)
    q = None
    if basis.condition <= SPECTRAL_COND_MAX:
        try:
            q = mode_coefficients(w0, basis)
        except SingularBasis:
            q = None
    if q is None:
        q = make_q_fallback(w0, params)

    nu = params.nu
    lam_abs = float(np.max(np.abs(basis.lam)))
    uncertain = False
    limit = None
    if nu == 0.0:
        horizon = 2 * math.pi / math.sqrt(1 + params.b0 ** 2)
    else:
        a = basis.max_real
        limit = q.limit
        if abs(limit) <= EPS_C1:
            if q.mode is QMode.SPECTRAL:
                q = make_q_fallback(w0, params)
            horizon = 4.0 / abs(a)
            uncertain = True
        elif q.mode is QMode.SPECTRAL:
            S = float(np.sum(np.abs(q.mode_weights()[1:])))
            horizon = max(0.0, math.log(S / (0.5 * abs(limit))) / abs(a)) if S > 0 else 0.0
        else:
            horizon = _schur_tail_horizon(params, w0, a, 0.5 * abs(limit))
        if horizon > T_CAP:
            horizon, uncertain = T_CAP, True

    h = 2 * math.pi / max(basis.max_imag, 1e-3) / 32
    if lam_abs > 0:
        h = min(h, 1.0 / (8 * lam_abs))
    if horizon > 0:
        h = min(h, horizon / 64)
    n_steps = max(1, math.ceil(horizon / h)) if horizon > 0 else 0
    ev = q.evaluator(n_steps * h)

    def fq(t):
        return float(ev(t)[0])

    def fdq(t):
        return float(ev(t)[1])

    q_min = 1.0 if limit is None else min(1.0, limit)
    root = None
    scanned = 0.0
    prev_t, prev_q, prev_dq = 0.0, 1.0, float(ev(0.0)[1])
    start = 1
    while start <= n_steps:
        stop = min(n_steps, start + _CHUNK - 1)
        t = np.arange(start, stop + 1) * h
        Qg, dQg = ev(t)
        tt = np.concatenate([[prev_t], t])
        qq = np.concatenate([[prev_q], Qg])
        dd = np.concatenate([[prev_dq], dQg])
        q_min = min(q_min, float(qq.min()))
        scanned = float(t[-1])
        if root is None:
            neg = np.flatnonzero(qq <= 0.0)
            first_neg = int(neg[0]) if neg.size else len(qq)
            minima = np.flatnonzero((dd[:-1] < 0) & (dd[1:] >= 0)) + 1
            for i in minima[minima <= first_neg]:
                tm = brentq(fdq, tt[i - 1], tt[i], xtol=1e-12 * (1 + tt[i]))
                qm = fq(tm)
                q_min = min(q_min, qm)
                if qm < 0 and qq[i - 1] > 0:
                    root = brentq(fq, tt[i - 1], tm, xtol=1e-10 * (1 + tm))
                    break
            if root is None and first_neg < len(qq):
                lo, hi = tt[first_neg - 1], tt[first_neg]
                root = hi if qq[first_neg] == 0.0 else brentq(fq, lo, hi, xtol=1e-10 * (1 + hi))
        if root is not None and q_min < -EPS_Q:
            break
        prev_t, prev_q, prev_dq = float(t[-1]), float(Qg[-1]), float(dQg[-1])
        start = stop + 1

    if abs(q_min) <= EPS_Q:
        kind = VerdictKind.BOUNDARY
    elif root is not None and q_min < -EPS_Q:
        kind = VerdictKind.BLOWUP
    elif uncertain:
        kind = VerdictKind.BOUNDARY
    else:
        kind = VerdictKind.SMOOTH
    return Verdict(
        kind,
        float(root) if kind is VerdictKind.BLOWUP else None,
        float(q_min),
        scanned,
        q.mode,
        uncertain,
    )


def nu0_margin(w0: DerivTriple, b0: float) -> float:
    """Left side of the collisionless criterion; negative means smooth."""
    return w0.q1 ** 2 + 2 * w0.s + 2 * b0 * w0.q2 - b0 ** 2 - 1


def nu0_criterion(w0: DerivTriple, b0: float) -> bool:
    """Closed-form smoothness test for ``nu == 0`` (True = globally smooth)."""
    return nu0_margin(w0, b0) < 0


def critical_k(nu: float) -> float:
    """Critical standard-pulse amplitude at ``b0 = 0`` for ``0 <= nu < 2``."""
    nu = float(nu)
    if not (0.0 <= nu < 2.0):
        raise DomainError(f"critical_k is defined for 0 <= nu < 2, got {nu!r}")
    return 1.0 / (1.0 + math.exp(-nu * math.pi / math.sqrt(4.0 - nu * nu)))
