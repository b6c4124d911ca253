"""Parameter-plane sweeps: blow-up domains, regime maps and smooth-domain sections.

Every sweep is a rectangular grid of independent cells.  Cells are computed
in blocks; after each block the finished prefix is written to the output CSV
together with a JSON sidecar carrying the metadata and a completed-cell
watermark, so an interrupted run can be resumed and yields the same bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._parallel import ordered_map
from .breaking import EPS_Q, DerivTriple, VerdictKind, blowup_verdict
from .spectral import B0_BAR, Params, Regime, cubic_roots, regime, regime_boundary

__all__ = [
    "Axis",
    "SweepGrid",
    "CheckpointMismatch",
    "EmptyBoundary",
    "blowup_plane",
    "regime_plane",
    "smooth_domain_section",
    "trace_boundary",
    "load_grid",
    "CHECKPOINT_EVERY",
]

CHECKPOINT_EVERY = 10_000
CODE_SMOOTH, CODE_BLOWUP, CODE_BOUNDARY = 0, 1, 2
_VERDICT_CODE = {VerdictKind.SMOOTH: 0, VerdictKind.BLOWUP: 1, VerdictKind.BOUNDARY: 2}
_REGIME_CODE = {Regime.OSCILLATORY: 0, Regime.MONOTONE: 1, Regime.BOUNDARY: 2}


class CheckpointMismatch(RuntimeError):
    pass


class EmptyBoundary(ValueError):
    pass


@dataclass(frozen=True)
class Axis:
    name: str
    min: float
    max: float
    step: float

    def __post_init__(self):
        if not (self.step > 0 and self.max >= self.min):
            raise ValueError(f"bad axis {self.name}: [{self.min}, {self.max}] step {self.step}")

    @property
    def n(self) -> int:
        return math.floor((self.max - self.min) / self.step + 1e-9) + 1

    def values(self) -> np.ndarray:
        # snapped to 12 decimals so symmetric ranges give exactly mirrored values
        return np.array([round(self.min + i * self.step, 12) + 0.0 for i in range(self.n)])

    def to_dict(self) -> dict:
        return {"name": self.name, "min": self.min, "max": self.max, "step": self.step}


@dataclass
class SweepGrid:
    """Cell results in row-major order (``axis1`` outer, ``axis2`` inner)."""

    kind: str
    axis1: Axis
    axis2: Axis
    codes: np.ndarray
    margin: np.ndarray
    payload: np.ndarray
    meta: dict
    completed: int = 0
    overlay: list = field(default_factory=list)

    @property
    def shape(self) -> tuple[int, int]:
        return self.axis1.n, self.axis2.n

    @property
    def size(self) -> int:
        return self.axis1.n * self.axis2.n

    def matrix(self, which: str = "codes") -> np.ndarray:
        return getattr(self, which).reshape(self.shape)

    def cell(self, i1: int, i2: int) -> int:
        return int(self.codes[i1 * self.axis2.n + i2])

    def sidecar(self) -> dict:
        return {**self.meta, "completed": int(self.completed)}

    def csv_lines(self):
        a1, a2 = self.axis1.values(), self.axis2.values()
        n2 = self.axis2.n
        yield f"{self.axis1.name},{self.axis2.name},code,margin,payload\n"
        for idx in range(self.completed):
            i, j = divmod(idx, n2)
            yield "%.6f,%.6f,%d,%.6e,%.6e\n" % (
                a1[i], a2[j], self.codes[idx], self.margin[idx], self.payload[idx])

    def write(self, path, fmt: str = "csv"):
        path = Path(path)
        if fmt == "csv":
            tmp = path.with_name(path.name + ".tmp")
            with open(tmp, "w", newline="") as fh:
                fh.writelines(self.csv_lines())
            tmp.replace(path)
        elif fmt == "matrix":
            self.write_matrix(path)
        else:
            raise ValueError(f"unknown format {fmt!r}")
        with open(sidecar_path(path), "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_matrix(self, path, which: str = "codes"):
        """Gnuplot ``matrix nonuniform`` layout: axis2 along columns."""
        m = self.matrix(which)
        a1, a2 = self.axis1.values(), self.axis2.values()
        fmt = "%d" if which == "codes" else "%.6e"
        with open(path, "w", newline="") as fh:
            fh.write(" ".join(["%d" % len(a2)] + ["%.6f" % x for x in a2]) + "\n")
            for i, x in enumerate(a1):
                fh.write(" ".join(["%.6f" % x] + [fmt % v for v in m[i]]) + "\n")


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def load_grid(path) -> SweepGrid:
    """Read a CSV grid written by :meth:`SweepGrid.write` (with its sidecar).

    Any unreadable or inconsistent file raises :class:`CheckpointMismatch`.
    """
    path = Path(path)
    try:
        with open(sidecar_path(path)) as fh:
            meta = json.load(fh)
        completed = int(meta.pop("completed"))
        a1, a2 = Axis(**meta["axis1"]), Axis(**meta["axis2"])
        n = a1.n * a2.n
        codes = np.zeros(n, dtype=np.int8)
        margin = np.full(n, np.nan)
        payload = np.full(n, np.nan)
        with open(path) as fh:
            header = fh.readline()
            if not header.startswith(f"{a1.name},{a2.name},"):
                raise ValueError("unexpected header")
            rows = 0
            for idx, line in enumerate(fh):
                if idx >= completed:
                    break
                _, _, c, m, p = line.rstrip("\n").split(",")
                codes[idx], margin[idx], payload[idx] = int(c), float(m), float(p)
                rows += 1
        if rows != completed:
            raise ValueError(f"watermark {completed} but {rows} rows")
        grid = SweepGrid(meta["kind"], a1, a2, codes, margin, payload, meta, completed)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CheckpointMismatch(f"unreadable checkpoint {path}: {exc}") from exc
    return grid


# ---------------------------------------------------------------------------
# cell kernels (module level so worker processes can import them)


def _blowup_cells(task):
    s_fixed, cells = task
    out = []
    for nu, b0 in cells:
        v = blowup_verdict(DerivTriple(0.0, 0.0, s_fixed), Params(nu, b0))
        out.append((_VERDICT_CODE[v.kind], v.q_min, math.nan if v.theta_star is None else v.theta_star))
    return out


def _regime_cells(task):
    _, cells = task
    out = []
    for nu, b0 in cells:
        p = Params(nu, b0)
        r = regime(p)
        out.append((_REGIME_CODE[r.regime], r.K, float(np.max(np.abs(cubic_roots(p).imag)))))
    return out


def _section_cells(task):
    (nu, b0, q2), cells = task
    p = Params(nu, b0)
    out = []
    for q1, s in cells:
        v = blowup_verdict(DerivTriple(q1, q2, s), p)
        out.append((_VERDICT_CODE[v.kind], v.q_min, math.nan if v.theta_star is None else v.theta_star))
    return out


_KERNELS = {"blowup": _blowup_cells, "regime": _regime_cells, "section": _section_cells}


def _run(kind, context, axis1, axis2, fixed, workers, out, resume, checkpoint_every, stop_after,
         config=None):
    meta = {
        "kind": kind,
        "axis1": axis1.to_dict(),
        "axis2": axis2.to_dict(),
        "fixed": fixed,
        "tool_version": __version__,
        "tolerances": {"eps_q": EPS_Q, "eps_K": "1e-12*max(1,nu^4,b0^6)"},
        "codes": {"blowup": "0 smooth, 1 blow-up, 2 boundary",
                  "section": "0 smooth, 1 blow-up, 2 boundary",
                  "regime": "0 oscillatory, 1 monotone, 2 boundary"}[kind],
        "margin": "K" if kind == "regime" else "min Q",
        "payload": "max |Im lambda|" if kind == "regime" else "theta_star",
    }
    if config:
        meta["config"] = config
    n = axis1.n * axis2.n
    grid = SweepGrid(kind, axis1, axis2, np.zeros(n, dtype=np.int8), np.full(n, np.nan),
                     np.full(n, np.nan), meta, 0)
    if resume and out is not None and Path(out).exists():
        prev = load_grid(out)
        if prev.meta != json.loads(json.dumps(meta)):
            raise CheckpointMismatch("checkpoint was written with a different configuration")
        grid.codes[:], grid.margin[:], grid.payload[:] = prev.codes, prev.margin, prev.payload
        grid.completed = prev.completed

    v1, v2 = axis1.values(), axis2.values()
    n2 = axis2.n
    kernel = _KERNELS[kind]
    limit = n if stop_after is None else min(n, grid.completed + int(stop_after))
    while grid.completed < limit:
        start = grid.completed
        stop = min(limit, start + checkpoint_every)
        cells = [(v1[i // n2], v2[i % n2]) for i in range(start, stop)]
        size = max(1, math.ceil(len(cells) / (8 * max(1, workers or 1))))
        tasks = [(context, cells[i:i + size]) for i in range(0, len(cells), size)]
        results = [r for chunk in ordered_map(kernel, tasks, workers) for r in chunk]
        for off, (c, m, p) in enumerate(results):
            grid.codes[start + off] = c
            grid.margin[start + off] = m
            grid.payload[start + off] = p
        grid.completed = stop
        if out is not None:
            grid.write(out)
    return grid


def blowup_plane(k: float, nu_range=(0.0, 1.2), b0_range=(-0.6, 0.6), step: float = 0.01,
                 workers: int | None = 1, out=None, resume: bool = False,
                 checkpoint_every: int = CHECKPOINT_EVERY, stop_after: int | None = None,
                 config: dict | None = None) -> SweepGrid:
    """Blow-up domain in the ``(nu, b0)`` plane for the pulse peak ``(0, 0, k)``."""
    if not (0 < k < 1):
        raise ValueError("pulse amplitude k must lie in (0, 1)")
    return _run("blowup", float(k), Axis("nu", *nu_range, step), Axis("b0", *b0_range, step),
                {"k": k, "q1": 0.0, "q2": 0.0}, workers, out, resume, checkpoint_every, stop_after, config)


def regime_plane(nu_range=(0.0, 4.0), b0_range=(-0.6, 0.6), step: float = 0.01,
                 workers: int | None = 1, out=None, resume: bool = False,
                 checkpoint_every: int = CHECKPOINT_EVERY, stop_after: int | None = None,
                 config: dict | None = None) -> SweepGrid:
    """Oscillatory/monotone regime map with the analytic threshold curves as overlay."""
    grid = _run("regime", None, Axis("nu", *nu_range, step), Axis("b0", *b0_range, step), {},
                workers, out, resume, checkpoint_every, stop_after, config)
    for b0 in grid.axis2.values():
        if abs(b0) <= B0_BAR:
            nb = regime_boundary(b0)
            if nb is not None:
                grid.overlay.append((float(b0), nb[0], nb[1]))
    return grid


def smooth_domain_section(params: Params, q2_fixed: float, q1_range=(-1.0, 1.0),
                          s_range=(-1.0, 1.0), step: float = 0.02, workers: int | None = 1,
                          out=None, resume: bool = False,
                          checkpoint_every: int = CHECKPOINT_EVERY,
                          stop_after: int | None = None, config: dict | None = None) -> SweepGrid:
    """Section ``q2 = const`` of the smooth domain in derivative space."""
    return _run("section", (params.nu, params.b0, float(q2_fixed)), Axis("q1", *q1_range, step),
                Axis("s", *s_range, step), {"nu": params.nu, "b0": params.b0, "q2": q2_fixed},
                workers, out, resume, checkpoint_every, stop_after, config)


def trace_boundary(grid: SweepGrid) -> list[np.ndarray]:
    """Zero level set of the margin field as polylines in axis coordinates.

    Each polyline is an ``(m, 2)`` array of ``(axis1, axis2)`` points.
    """
    from skimage.measure import find_contours

    if grid.completed < grid.size:
        raise ValueError("grid is incomplete")
    codes = grid.codes[grid.codes != CODE_BOUNDARY]
    if codes.size == 0 or np.all(codes == codes[0]):
        raise EmptyBoundary("grid has a single class; no boundary to trace")
    m = grid.matrix("margin")
    lines = find_contours(m, 0.0)
    if not lines:
        raise EmptyBoundary("no zero crossing of the margin field")
    a1, a2 = grid.axis1, grid.axis2
    return [np.column_stack([a1.min + ln[:, 0] * a1.step, a2.min + ln[:, 1] * a2.step]) for ln in lines]
