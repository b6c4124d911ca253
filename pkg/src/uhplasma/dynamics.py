"""Characteristic ODEs of the upper-hybrid model.

State layout (axis 0 of every array): ``rho, v1, v2, e, q1, q2, s, jac``.
The velocity/field block and the derivative block evolve independently of
``rho``; ``jac`` is the Jacobian of the Lagrangian map and satisfies
``jac' = q1 jac``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .breaking import DerivTriple, SingularBasis, make_q_fallback, mode_coefficients
from .spectral import Params, eigenvalues

__all__ = [
    "CharacteristicState",
    "Outcome",
    "Trajectory",
    "rhs",
    "integrate",
    "EnsembleRun",
    "integrate_ensemble",
    "riccati_escape",
    "verify_linearization",
    "ESCAPE_Q1",
    "CSV_COLUMNS",
]

ESCAPE_Q1 = 1e6
J_MIN = 1e-12
DEFAULT_TOL = 1e-10
CSV_COLUMNS = ("theta", "rho", "v1", "v2", "e", "q1", "q2", "s", "jac")
_FIELDS = CSV_COLUMNS[1:]


@dataclass(frozen=True)
class CharacteristicState:
    theta: float = 0.0
    rho: float = 0.0
    v1: float = 0.0
    v2: float = 0.0
    e: float = 0.0
    q1: float = 0.0
    q2: float = 0.0
    s: float = 0.0
    jac: float = 1.0

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in _FIELDS], dtype=float)

    @classmethod
    def from_array(cls, theta: float, y) -> "CharacteristicState":
        return cls(float(theta), *(float(x) for x in y))

    @property
    def energy(self) -> float:
        return self.v1 ** 2 + self.v2 ** 2 + self.e ** 2


class Outcome(str, enum.Enum):
    COMPLETED = "completed"
    ESCAPED = "escaped"


@dataclass(frozen=True)
class Trajectory:
    theta: np.ndarray
    states: np.ndarray  # shape (n, 8)
    outcome: Outcome
    theta_escape: float | None = None
    step_underflow: bool = False
    tol: float = DEFAULT_TOL

    def __len__(self):
        return len(self.theta)

    def __getitem__(self, i) -> CharacteristicState:
        return CharacteristicState.from_array(self.theta[i], self.states[i])

    def column(self, name: str) -> np.ndarray:
        if name == "theta":
            return self.theta
        return self.states[:, _FIELDS.index(name)]

    def to_csv(self, path, header_lines=()):
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for t, row in zip(self.theta, self.states):
                fh.write(",".join("%.12e" % x for x in (t, *row)) + "\n")


def rhs(y: np.ndarray, params: Params) -> np.ndarray:
    """Right-hand side for one state ``(8,)`` or an ensemble ``(8, n)``."""
    nu, b0 = params.nu, params.b0
    rho, v1, v2, e, q1, q2, s, jac = y
    return np.array(
        [
            v1,
            -e - b0 * v2 - nu * v1,
            b0 * v1 - nu * v2,
            v1,
            -q1 * q1 - s - b0 * q2 - nu * q1,
            -q1 * q2 + b0 * q1 - nu * q2,
            q1 * (1.0 - s),
            q1 * jac,
        ]
    )


def _escape_events():
    def q1_escape(t, y):
        return ESCAPE_Q1 - np.max(np.abs(y[4::8]))

    def jac_collapse(t, y):
        return np.min(y[7::8]) - J_MIN

    q1_escape.terminal = jac_collapse.terminal = True
    return [q1_escape, jac_collapse]


def _solve(y0_flat, params, horizon, tol, n, t_eval=None):
    # ensemble state is stored interleaved: component c of member j at j*8 + c
    def f(t, y):
        return rhs(y.reshape(n, 8).T, params).T.ravel()

    return solve_ivp(
        f,
        (0.0, horizon),
        y0_flat,
        method="DOP853",
        rtol=tol,
        atol=tol,
        events=_escape_events(),
        t_eval=t_eval,
        dense_output=t_eval is None,
    )


def _finish(sol):
    """Outcome, escape time, escape state and underflow flag of a solve_ivp run."""
    if sol.status == 1:
        t_ev, y_ev = min(
            ((float(te[0]), ye[0]) for te, ye in zip(sol.t_events, sol.y_events) if len(te)),
            key=lambda pair: pair[0],
        )
        return Outcome.ESCAPED, t_ev, y_ev, False
    if sol.status == -1:
        return Outcome.ESCAPED, float(sol.t[-1]), sol.y[:, -1], True
    return Outcome.COMPLETED, None, None, False


def integrate(
    init: CharacteristicState,
    params: Params,
    horizon: float,
    tol: float = DEFAULT_TOL,
    sample_times=None,
) -> Trajectory:
    """Integrate one characteristic up to ``horizon`` or escape.

    Samples are taken at ``sample_times`` (default: 1001 uniform points); on
    escape the state at the escape time is appended.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if not (1e-13 <= tol <= 1e-6):
        raise ValueError("tol must lie in [1e-13, 1e-6]")
    times = np.linspace(0.0, horizon, 1001) if sample_times is None else np.asarray(sample_times, float)
    if np.any(np.diff(times) <= 0) or times[0] < 0 or times[-1] > horizon:
        raise ValueError("sample_times must be strictly increasing within [0, horizon]")
    y0 = init.as_array()
    sol = _solve(y0, params, horizon, tol, 1)
    outcome, t_esc, y_esc, underflow = _finish(sol)
    t_end = t_esc if outcome is Outcome.ESCAPED else horizon
    keep = times[times <= t_end]
    states = sol.sol(keep).T if keep.size else np.empty((0, 8))
    if outcome is Outcome.ESCAPED and (keep.size == 0 or keep[-1] < t_end):
        keep = np.append(keep, t_end)
        states = np.vstack([states, y_esc])
    return Trajectory(keep, states, outcome, t_esc, underflow, tol)


@dataclass(frozen=True)
class EnsembleRun:
    theta: np.ndarray
    states: np.ndarray  # shape (len(theta), 8, n)
    outcome: Outcome
    theta_escape: float | None
    escape_member: int | None
    step_underflow: bool


def integrate_ensemble(y0: np.ndarray, params: Params, horizon: float, sample_times,
                       tol: float = DEFAULT_TOL) -> EnsembleRun:
    """Integrate ``n`` characteristics ``y0`` (shape ``(8, n)``) in lockstep.

    The run stops at the first escape of any member; samples beyond it are
    dropped.
    """
    y0 = np.asarray(y0, dtype=float)
    n = y0.shape[1]
    times = np.asarray(sample_times, dtype=float)
    sol = _solve(y0.T.ravel(), params, horizon, tol, n, t_eval=times)
    outcome, t_esc, y_esc, underflow = _finish(sol)
    # solve_ivp hands back an empty list when the run ends before the first sample
    y = np.asarray(sol.y, dtype=float).reshape(8 * n, len(sol.t))
    states = y.T.reshape(len(sol.t), n, 8).transpose(0, 2, 1)
    member = None
    if outcome is Outcome.ESCAPED:
        ye = y_esc.reshape(n, 8).T
        member = int(np.argmax(np.abs(ye[4]))) if np.max(np.abs(ye[4])) >= 0.5 * ESCAPE_Q1 \
            else int(np.argmin(ye[7]))
    return EnsembleRun(sol.t, states, outcome, t_esc, member, underflow)


def riccati_escape(w0: DerivTriple, params: Params, horizon: float, tol: float = DEFAULT_TOL):
    """Integrate only the derivative block; return ``(escaped, theta)``.

    Stops early (not escaped) once the triple has decayed below 1e-8, after
    which the quadratic terms cannot drive a blow-up.
    """
    nu, b0 = params.nu, params.b0

    def f(t, y):
        q1, q2, s = y
        return [-q1 * q1 - s - b0 * q2 - nu * q1, -q1 * q2 + b0 * q1 - nu * q2, q1 * (1.0 - s)]

    def escape(t, y):
        return ESCAPE_Q1 - abs(y[0])

    def decayed(t, y):
        return math.sqrt(y[0] ** 2 + y[1] ** 2 + y[2] ** 2) - 1e-8

    escape.terminal = decayed.terminal = True
    escape.direction = -1
    decayed.direction = -1
    sol = solve_ivp(f, (0.0, horizon), [w0.q1, w0.q2, w0.s], method="DOP853",
                    rtol=tol, atol=tol, events=[escape, decayed])
    if sol.status == 1 and len(sol.t_events[0]):
        return True, float(sol.t_events[0][0])
    if sol.status == -1:
        return True, float(sol.t[-1])
    return False, float(sol.t[-1])


def verify_linearization(init: DerivTriple, params: Params, horizon: float, n_samples: int = 201) -> float:
    """Max deviation between the Riccati triple and ``P / Q`` from the linear system."""
    basis = eigenvalues(params)
    try:
        q = mode_coefficients(init, basis)
    except SingularBasis:
        q = make_q_fallback(init, params)
    times = np.linspace(0.0, horizon, n_samples)
    Y = q.state(times)
    if np.min(Y[0]) <= 0.05:
        raise ValueError("Q comes within 0.05 of zero on the horizon; linearization check undefined")
    traj = integrate(
        CharacteristicState(q1=init.q1, q2=init.q2, s=init.s), params, horizon, sample_times=times
    )
    if traj.outcome is Outcome.ESCAPED:
        raise RuntimeError("Riccati integration escaped although Q stays positive")
    ric = traj.states[:, 4:7].T
    lin = Y[1:] / Y[0]
    return float(np.max(np.linalg.norm(ric - lin, axis=0)))
