"""Initial profiles, field-level blow-up verdicts and Eulerian reconstruction."""

from __future__ import annotations

import csv
import enum
import functools
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.interpolate import PchipInterpolator

from ._parallel import ordered_map
from .breaking import DerivTriple, Verdict, VerdictKind, blowup_verdict
from .dynamics import Outcome, integrate_ensemble
from .spectral import Params, eigenvalues

__all__ = [
    "PulseSpec",
    "Provenance",
    "InitialField",
    "FieldVerdict",
    "FieldFrame",
    "ProfileError",
    "NonMonotoneMap",
    "standard_pulse",
    "tabulated_field",
    "read_profile",
    "field_verdict",
    "simulate_field",
]

DEFAULT_POINTS = 2048


class ProfileError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NonMonotoneMap(RuntimeError):
    pass


@dataclass(frozen=True)
class PulseSpec:
    """Standard pulse ``E0(rho) = k rho exp(-rho^2 / sigma)`` with zero velocities."""

    k: float
    sigma: float

    def __post_init__(self):
        if not (self.k > 0 and self.sigma > 0):
            raise ValueError("pulse needs k > 0 and sigma > 0")

    @classmethod
    def from_scales(cls, a_star: float, rho_star: float) -> "PulseSpec":
        if not (a_star > 0 and rho_star > 0):
            raise ValueError("a_star and rho_star must be positive")
        return cls((a_star / rho_star) ** 2, rho_star ** 2 / 2)

    @property
    def rho_at_max(self) -> float:
        return math.sqrt(self.sigma / 2)

    @property
    def e_max(self) -> float:
        return self.k * self.rho_at_max * math.exp(-0.5)

    def window(self) -> tuple[float, float]:
        w = 6 * math.sqrt(self.sigma)
        return -w, w

    def e0(self, rho):
        rho = np.asarray(rho, dtype=float)
        return self.k * rho * np.exp(-rho ** 2 / self.sigma)

    def s0(self, rho):
        rho = np.asarray(rho, dtype=float)
        return self.k * (1 - 2 * rho ** 2 / self.sigma) * np.exp(-rho ** 2 / self.sigma)


class Provenance(str, enum.Enum):
    ANALYTIC_PULSE = "analytic_pulse"
    TABULATED = "tabulated"


@dataclass(frozen=True)
class InitialField:
    rho: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    e: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    s: np.ndarray
    provenance: Provenance
    pulse: PulseSpec | None = None

    def __len__(self):
        return len(self.rho)

    def triple(self, i: int) -> DerivTriple:
        return DerivTriple(self.q1[i], self.q2[i], self.s[i])

    def initial_states(self) -> np.ndarray:
        """Characteristic states, shape ``(8, n)``, with unit Jacobian."""
        return np.vstack([self.rho, self.v1, self.v2, self.e, self.q1, self.q2, self.s,
                          np.ones_like(self.rho)])


def standard_pulse(spec: PulseSpec, rho_min: float | None = None, rho_max: float | None = None,
                   n: int = DEFAULT_POINTS) -> InitialField:
    lo, hi = spec.window()
    rho_min = lo if rho_min is None else rho_min
    rho_max = hi if rho_max is None else rho_max
    if n < 16 or not rho_min < rho_max:
        raise ValueError("need n >= 16 and rho_min < rho_max")
    rho = np.linspace(rho_min, rho_max, n)
    zero = np.zeros_like(rho)
    return InitialField(rho, zero, zero.copy(), spec.e0(rho), zero.copy(), zero.copy(),
                        spec.s0(rho), Provenance.ANALYTIC_PULSE, spec)


def _fd_weights(x0: float, x: np.ndarray) -> np.ndarray:
    """First-derivative weights at ``x0`` on nodes ``x`` (Fornberg's recursion)."""
    n = len(x)
    c = np.zeros((n, 2))
    c1, c4 = 1.0, x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, 1)
        c2, c5 = 1.0, c4
        c4 = x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, 1]


def _derivative(x: np.ndarray, f: np.ndarray) -> np.ndarray:
    # five-point stencils: centred inside, one-sided at the two ends
    n = len(x)
    out = np.empty(n)
    for i in range(n):
        lo = min(max(i - 2, 0), n - 5)
        idx = slice(lo, lo + 5)
        out[i] = _fd_weights(x[i], x[idx]) @ f[idx]
    return out


def tabulated_field(rho, v1, v2, e) -> InitialField:
    rho = np.asarray(rho, dtype=float)
    if rho.ndim != 1 or len(rho) < 5:
        raise ValueError("a tabulated profile needs at least 5 samples")
    if np.any(np.diff(rho) <= 0):
        raise ValueError("rho must be strictly increasing")
    v1, v2, e = (np.asarray(a, dtype=float) for a in (v1, v2, e))
    return InitialField(rho, v1, v2, e, _derivative(rho, v1), _derivative(rho, v2),
                        _derivative(rho, e), Provenance.TABULATED)


def read_profile(path) -> InitialField:
    """Read a ``rho,v1,v2,e`` CSV profile; ``#`` lines are comments."""
    rows = []
    header_seen = False
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            cells = [c.strip() for c in row]
            if not header_seen:
                if cells != ["rho", "v1", "v2", "e"]:
                    raise ProfileError(lineno, f"expected header 'rho,v1,v2,e', got {','.join(cells)!r}")
                header_seen = True
                continue
            if len(cells) != 4:
                raise ProfileError(lineno, f"expected 4 columns, got {len(cells)}")
            try:
                vals = [float(c) for c in cells]
            except ValueError:
                raise ProfileError(lineno, f"non-numeric value in {','.join(cells)!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise ProfileError(lineno, "non-finite value")
            if rows and vals[0] <= rows[-1][1][0]:
                raise ProfileError(lineno, "rho must be strictly increasing")
            rows.append((lineno, vals))
    if not header_seen:
        raise ProfileError(1, "missing header 'rho,v1,v2,e'")
    if len(rows) < 5:
        raise ProfileError(rows[-1][0] if rows else 1, "need at least 5 data rows")
    data = np.array([v for _, v in rows])
    return tabulated_field(data[:, 0], data[:, 1], data[:, 2], data[:, 3])


# ---------------------------------------------------------------------------
# verdicts


@dataclass(frozen=True)
class FieldVerdict:
    kind: VerdictKind
    t_c: float | None
    argmin_rho: float | None
    per_point: tuple = dc_field(default=(), repr=False)
    boundary_points: int = 0
    observed: bool = False
    notes: tuple = ()

    @property
    def n_blowup_points(self) -> int:
        return sum(1 for _, v in self.per_point if v.kind is not VerdictKind.SMOOTH)

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind.value,
            "t_c": self.t_c,
            "argmin_rho": self.argmin_rho,
            "n_points": len(self.per_point),
            "n_blowup_points": self.n_blowup_points,
        }
        if self.observed:
            d["observed"] = True
        if self.boundary_points:
            d["boundary_points"] = self.boundary_points
        if self.notes:
            d["notes"] = list(self.notes)
        return d


def _point_verdict(params: Params, triple: tuple) -> Verdict:
    return blowup_verdict(DerivTriple(*triple), params, _basis(params))


@functools.lru_cache(maxsize=64)
def _basis(params: Params):
    b = params if params.b0 >= 0 else Params(params.nu, -params.b0)
    return eigenvalues(b)


def _verdict_chunk(args):
    params, triples = args
    return [_point_verdict(params, t) for t in triples]


def field_verdict(field: InitialField, params: Params, workers: int = 1) -> FieldVerdict:
    """Aggregate per-point verdicts; boundary cases count as blow-up."""
    rho = list(field.rho)
    triples = [(field.q1[i], field.q2[i], field.s[i]) for i in range(len(field))]
    if field.provenance is Provenance.ANALYTIC_PULSE and 0.0 not in rho:
        rho.append(0.0)
        triples.append((0.0, 0.0, field.pulse.k))
    unique = sorted(set(triples))
    size = max(1, math.ceil(len(unique) / max(1, 4 * workers)))
    chunks = [(params, unique[i:i + size]) for i in range(0, len(unique), size)]
    results = [v for chunk in ordered_map(_verdict_chunk, chunks, workers) for v in chunk]
    lookup = dict(zip(unique, results))
    per_point = tuple((float(r), lookup[t]) for r, t in zip(rho, triples))

    blow = [(v.theta_star, r) for r, v in per_point if v.kind is VerdictKind.BLOWUP]
    n_boundary = sum(1 for _, v in per_point if v.kind is VerdictKind.BOUNDARY)
    if blow:
        t_c, arg = min(blow)
        return FieldVerdict(VerdictKind.BLOWUP, t_c, arg, per_point, n_boundary)
    if n_boundary:
        arg = min(r for r, v in per_point if v.kind is VerdictKind.BOUNDARY)
        return FieldVerdict(VerdictKind.BLOWUP, None, arg, per_point, n_boundary,
                            notes=("boundary cases counted as blow-up",))
    return FieldVerdict(VerdictKind.SMOOTH, None, None, per_point)


# ---------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class FieldFrame:
    theta: float
    rho: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    e: np.ndarray
    n: np.ndarray

    def mass(self) -> float:
        return float(np.trapezoid(self.n, self.rho))

    def amplitude(self) -> float:
        return float(np.max(np.abs(self.v1) + np.abs(self.v2) + np.abs(self.e)))

    def to_csv(self, path, header_lines=()):
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            fh.write("rho,v1,v2,e,n\n")
            for row in zip(self.rho, self.v1, self.v2, self.e, self.n):
                fh.write(",".join("%.12e" % x for x in row) + "\n")


def _reconstruct(theta, y, grid) -> FieldFrame:
    x = y[0]
    if np.any(np.diff(x) <= 0):
        raise NonMonotoneMap(f"characteristics crossed by theta={theta}")
    vals = [PchipInterpolator(x, y[c], extrapolate=True)(grid) for c in (1, 2, 3, 6)]
    v1, v2, e, s = vals
    return FieldFrame(float(theta), grid, v1, v2, e, 1.0 - s)


def simulate_field(field: InitialField, params: Params, horizon: float, frame_times=(),
                   tol: float = 1e-9, out_grid=None):
    """Integrate the characteristic ensemble and reconstruct Eulerian frames.

    Returns ``(frames, observed)`` where ``observed`` is a :class:`FieldVerdict`
    with ``observed=True``.  Frames requested after breaking are omitted.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if not (1e-13 <= tol <= 1e-6):
        raise ValueError("tol must lie in [1e-13, 1e-6]")
    grid = field.rho if out_grid is None else np.asarray(out_grid, dtype=float)
    times = sorted({float(t) for t in frame_times if 0 <= t <= horizon} | {float(horizon)})
    run = integrate_ensemble(field.initial_states(), params, horizon, times, tol)
    frames = []
    notes = []
    t_break = run.theta_escape if run.outcome is Outcome.ESCAPED else None
    arg = float(field.rho[run.escape_member]) if run.escape_member is not None else None
    wanted = {float(t) for t in frame_times}
    for t, y in zip(run.theta, run.states):
        if t not in wanted:
            continue
        try:
            frames.append(_reconstruct(t, y, grid))
        except NonMonotoneMap as exc:
            notes.append(str(exc))
            if t_break is None or t < t_break:
                t_break = float(t)
                arg = float(field.rho[int(np.argmin(np.diff(y[0])))])
            break
    if run.step_underflow:
        notes.append("step size underflow before the escape threshold")
    if t_break is None:
        return frames, FieldVerdict(VerdictKind.SMOOTH, None, None, observed=True, notes=tuple(notes))
    return frames, FieldVerdict(VerdictKind.BLOWUP, t_break, arg, observed=True, notes=tuple(notes))
