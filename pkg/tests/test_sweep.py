import filecmp
import json
import math

import numpy as np
import pytest

from uhplasma.spectral import B0_BAR, Params, regime_boundary
from uhplasma.sweep import (
    Axis,
    CheckpointMismatch,
    EmptyBoundary,
    blowup_plane,
    load_grid,
    regime_plane,
    smooth_domain_section,
    trace_boundary,
)


def test_axis_cell_count():
    assert Axis("nu", 0, 1.2, 0.01).n == 121
    assert Axis("b0", -0.6, 0.6, 0.01).n == 121
    assert Axis("x", 0, 1, 0.3).n == 4
    assert Axis("x", 2, 2, 0.1).n == 1
    with pytest.raises(ValueError):
        Axis("x", 1, 0, 0.1)


def test_symmetric_axis_values_mirror_exactly():
    v = Axis("b0", -0.6, 0.6, 0.01).values()
    assert np.array_equal(v, -v[::-1])
    assert v[60] == 0.0


def test_subcritical_plane_is_empty():
    g = blowup_plane(0.4, nu_range=(0, 1.2), b0_range=(-0.6, 0.6), step=0.1)
    assert np.all(g.codes == 0)
    with pytest.raises(EmptyBoundary):
        trace_boundary(g)


def test_pulse_plane_column_transition(pulse_planes, oracles):
    planes, _ = pulse_planes
    for case in oracles["k_cr_inverse"]:
        g = planes[float(case["k"])]
        col = g.matrix()[:, list(g.axis2.values()).index(0.0)]
        nu = g.axis1.values()
        blow = nu[col != 0]
        assert blow.size and np.all(blow <= blow.max())
        assert np.all(col[nu <= blow.max()] != 0)
        assert abs(blow.max() - float(case["nu"])) <= 0.01


def test_pulse_plane_symmetry_and_nesting(pulse_planes):
    planes, _ = pulse_planes
    sets = []
    for k in (0.6, 0.7, 0.8):
        m = planes[k].matrix()
        assert np.array_equal(m, m[:, ::-1])
        sets.append(m != 0)
    assert np.all(sets[0] <= sets[1]) and np.all(sets[1] <= sets[2])
    assert sets[0].sum() < sets[1].sum() < sets[2].sum()


def test_traced_boundary_crosses_axis_at_critical_rate(pulse_planes, oracles):
    planes, _ = pulse_planes
    target = float(oracles["k_cr_inverse"][1]["nu"])
    pts = np.vstack(trace_boundary(planes[0.7]))
    on_axis = pts[np.abs(pts[:, 1]) < 1e-9]
    assert on_axis.size
    assert np.min(np.abs(on_axis[:, 0] - target)) <= 0.02


def test_blowup_cells_are_oscillatory(pulse_planes):
    planes, _ = pulse_planes
    reg = regime_plane(nu_range=(0, 1.2), b0_range=(-0.6, 0.6), step=0.01)
    osc = reg.matrix() == 0
    for g in planes.values():
        assert np.all(osc[g.matrix() != 0])


def test_regime_cells():
    g = regime_plane(nu_range=(0, 4), b0_range=(-0.6, 0.6), step=0.1)
    nu, b0 = list(g.axis1.values()), list(g.axis2.values())
    assert g.cell(nu.index(1.0), b0.index(0.0)) == 0
    g2 = regime_plane(nu_range=(2.2, 2.2), b0_range=(0.1, 0.1), step=0.1)
    assert g2.codes[0] == 1


def test_regime_plane_consistency_and_overlay():
    g = regime_plane(nu_range=(0, 4), b0_range=(-0.6, 0.6), step=0.02)
    nu, b0 = g.axis1.values(), g.axis2.values()
    m = g.matrix()
    for j, b in enumerate(b0):
        if abs(b) > B0_BAR + 0.02:
            assert np.all(m[:, j] == 0)
        elif 0 < abs(b) < B0_BAR:
            lo, hi = regime_boundary(b)
            inside = (nu > lo) & (nu < hi)
            assert np.all(m[inside, j] == 1)
            assert np.all(m[(nu < lo) | (nu > hi), j] == 0)
    assert g.overlay and all(abs(b) <= B0_BAR for b, _, _ in g.overlay)
    lo, hi = regime_boundary(0.3)
    assert (0.3, lo, hi) in {(round(b, 12), x, y) for b, x, y in g.overlay}


def test_regime_contour_follows_threshold_curves():
    step = 0.02
    g = regime_plane(nu_range=(0, 4), b0_range=(0.04, 0.6), step=step)
    diag = math.hypot(step, step)
    for line in trace_boundary(g):
        for nu, b in line:
            if b <= 0.06 or nu >= 3.98:
                continue
            lo, hi = regime_boundary(min(b, B0_BAR))
            d = min(abs(nu - lo), abs(nu - hi), math.hypot(nu - 0.75 * math.sqrt(6), b - B0_BAR))
            # branches are steep in nu near the double point; compare in the plane
            bs = np.linspace(max(0.04, b - 2 * step), min(B0_BAR, b + 2 * step), 41)
            curve = [(x, bb) for bb in bs for x in regime_boundary(bb)]
            d = min([d] + [math.hypot(nu - x, b - bb) for x, bb in curve])
            assert d <= diag


def test_regime_boundary_cell_at_unmagnetized_threshold():
    g = regime_plane(nu_range=(1.9, 2.1), b0_range=(0, 0), step=0.1)
    assert list(g.codes) == [0, 2, 1]


@pytest.mark.parametrize("b0", [0.0, 0.5])
def test_collisionless_section_is_parabola_interior(b0):
    g = smooth_domain_section(Params(0, b0), 0.0, step=0.05)
    q1, s = np.meshgrid(g.axis1.values(), g.axis2.values(), indexing="ij")
    margin = q1 ** 2 + 2 * s - 1 - b0 ** 2
    codes = g.matrix()
    clear = np.abs(margin) > 1e-9
    assert np.array_equal(codes[clear] == 0, margin[clear] < 0)
    assert np.all(codes[~clear] == 2)


def test_section_blowup_area_grows_with_q2():
    counts = [int(np.sum(smooth_domain_section(Params(0.5, 0.2), q2, step=0.05).codes != 0))
              for q2 in (0.0, 0.3, 0.6)]
    assert counts[0] <= counts[1] <= counts[2]


def test_parallel_and_serial_grids_are_identical():
    kw = dict(nu_range=(0, 0.6), b0_range=(-0.3, 0.3), step=0.05)
    a = blowup_plane(0.7, workers=1, **kw)
    b = blowup_plane(0.7, workers=3, **kw)
    assert np.array_equal(a.codes, b.codes)
    assert np.array_equal(a.margin, b.margin)
    assert np.array_equal(a.payload, b.payload, equal_nan=True)


def test_resume_reproduces_uninterrupted_file(tmp_path):
    kw = dict(nu_range=(0, 0.6), b0_range=(-0.3, 0.3), step=0.05, checkpoint_every=50)
    full = tmp_path / "full.csv"
    part = tmp_path / "part.csv"
    blowup_plane(0.7, out=full, **kw)
    g = blowup_plane(0.7, out=part, stop_after=120, **kw)
    assert g.completed == 120
    assert json.loads((tmp_path / "part.csv.json").read_text())["completed"] == 120
    blowup_plane(0.7, out=part, resume=True, **kw)
    assert filecmp.cmp(full, part, shallow=False)
    assert filecmp.cmp(tmp_path / "full.csv.json", tmp_path / "part.csv.json", shallow=False)


def test_resume_rejects_other_configuration(tmp_path):
    out = tmp_path / "g.csv"
    blowup_plane(0.7, nu_range=(0, 0.2), b0_range=(0, 0.2), step=0.1, out=out)
    with pytest.raises(CheckpointMismatch):
        blowup_plane(0.6, nu_range=(0, 0.2), b0_range=(0, 0.2), step=0.1, out=out, resume=True)
    with pytest.raises(CheckpointMismatch):
        blowup_plane(0.7, nu_range=(0, 0.3), b0_range=(0, 0.2), step=0.1, out=out, resume=True)


def test_corrupt_checkpoint_is_rejected(tmp_path):
    out = tmp_path / "g.csv"
    blowup_plane(0.7, nu_range=(0, 0.2), b0_range=(0, 0.2), step=0.1, out=out)
    lines = out.read_text().splitlines()
    fields = lines[1].split(",")
    fields[2] = "zz"
    lines[1] = ",".join(fields)
    out.write_text("\n".join(lines) + "\n")
    with pytest.raises(CheckpointMismatch):
        load_grid(out)
    out.write_text("\n".join(lines[:3]) + "\n")
    with pytest.raises(CheckpointMismatch):
        load_grid(out)


def test_csv_round_trip_is_byte_exact(tmp_path):
    out = tmp_path / "g.csv"
    g = blowup_plane(0.7, nu_range=(0, 0.3), b0_range=(-0.2, 0.2), step=0.05, out=out)
    again = load_grid(out)
    assert again.size == g.size and np.array_equal(again.codes, g.codes)
    copy = tmp_path / "copy.csv"
    again.write(copy)
    assert filecmp.cmp(out, copy, shallow=False)
    first = out.read_text().splitlines()
    assert first[0] == "nu,b0,code,margin,payload"
    assert len(first) == 1 + g.size
    assert first[1].split(",")[0] == "0.000000"


def test_matrix_format(tmp_path):
    g = blowup_plane(0.7, nu_range=(0, 0.3), b0_range=(-0.2, 0.2), step=0.1)
    path = tmp_path / "g.dat"
    g.write_matrix(path)
    rows = [r.split() for r in path.read_text().splitlines()]
    assert int(rows[0][0]) == g.axis2.n
    assert len(rows) == 1 + g.axis1.n
    assert [int(x) for x in rows[1][1:]] == list(g.matrix()[0])


def test_sidecar_metadata(tmp_path):
    out = tmp_path / "g.csv"
    blowup_plane(0.7, nu_range=(0, 0.1), b0_range=(0, 0.1), step=0.1, out=out)
    meta = json.loads((tmp_path / "g.csv.json").read_text())
    assert meta["fixed"] == {"k": 0.7, "q1": 0.0, "q2": 0.0}
    assert {"tool_version", "tolerances", "axis1", "axis2", "completed"} <= meta.keys()


def test_blowup_plane_rejects_unphysical_amplitude():
    with pytest.raises(ValueError):
        blowup_plane(1.2, step=0.1)
