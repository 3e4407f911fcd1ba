import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spintwa.cmv import (
    G_MAX,
    R_PEAK,
    build_surface,
    choose_level,
    classify_shape,
    export_mesh,
    icosphere,
    q_value,
    radii_along,
)
from spintwa.correlations import eigensummary


def test_q_value_examples(rng):
    C = np.diag([1.0, 0, 0])
    assert q_value(C, np.zeros(3)) == 0.0
    assert q_value(C, [np.sqrt(2), 0, 0]) == pytest.approx(2 / 3**1.5)
    A = rng.normal(size=(3, 3))
    r = rng.normal(size=(10, 3))
    assert np.allclose(q_value(A, r), q_value(0.5 * (A + A.T), r))


def test_radii_examples():
    x = np.array([1.0, 0, 0])
    assert radii_along(np.zeros((3, 3)), 0.1, x) == ()
    C = np.diag([100.0, 0, 0])
    inner, outer = radii_along(C, 1.0, x)
    assert inner == pytest.approx(0.1, rel=0.02)
    assert outer == pytest.approx(100.0, rel=0.02)
    assert radii_along(np.diag([1.0, 0, 0]), G_MAX, x) == (R_PEAK,)
    with pytest.raises(ValueError):
        radii_along(C, 0.0, x)
    with pytest.raises(ValueError):
        radii_along(C, 1.0, [1, 1, 0])


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(0.01, 0.99))
def test_radii_solve_level(c, frac):
    P = frac * c * G_MAX
    inner, outer = radii_along(np.diag([c, 0, 0]), P, np.array([1.0, 0, 0]))
    assert 0 < inner < R_PEAK < outer
    for r in (inner, outer):
        assert abs(abs(q_value(np.diag([c, 0, 0]), [r, 0, 0])) - P) < 1e-8 * max(P, 1)


def test_choose_level():
    C = np.diag([1.0, 0, 0])
    P = choose_level(C)
    assert P == pytest.approx(0.5 * 2 / 3**1.5)
    assert P == pytest.approx(0.1925, abs=1e-4)
    s = build_surface(C, P, subdivisions=2)
    # lobes only around x
    assert np.all(np.abs(s.directions[s.covered, 0]) > 0.7)
    assert build_surface(C, kappa=1.5, subdivisions=2).is_empty
    # at kappa = 1 only the exact maximiser survives, as a tangent point
    edge = build_surface(C, kappa=1.0, subdivisions=2)
    assert edge.covered.sum() == 2
    assert np.all(edge.r_inner[edge.covered] == R_PEAK)
    with pytest.raises(ValueError):
        choose_level(np.zeros((3, 3)))


def test_isotropic_shell():
    s = build_surface(np.eye(3), subdivisions=3)
    assert s.covered.all()
    assert np.allclose(s.r_inner, s.r_inner[0]) and np.allclose(s.r_outer, s.r_outer[0])


def test_icosphere_counts():
    for k in range(4):
        v, f = icosphere(k)
        assert len(v) == 10 * 4**k + 2 and len(f) == 20 * 4**k
        assert np.allclose(np.linalg.norm(v, axis=1), 1)
    assert len(icosphere()[0]) == 2562


def test_zero_matrix_gives_empty_surface(tmp_path):
    s = build_surface(np.zeros((3, 3)), subdivisions=1)
    assert s.is_empty
    with pytest.raises(ValueError):
        export_mesh(s, tmp_path / "x.ply")


def test_clover_and_wheel():
    clover = build_surface(np.diag([1.0, -1.0, 0]), subdivisions=3)
    d = clover.directions[clover.covered]
    assert np.all(np.abs(d[:, 2]) < 0.8)
    signs = clover.sign[clover.covered]
    assert np.all(signs[np.abs(d[:, 0]) > np.abs(d[:, 1])] > 0)
    assert np.all(signs[np.abs(d[:, 1]) > np.abs(d[:, 0])] < 0)
    wheel = build_surface(np.diag([1.0, 1.0, -1.0]), subdivisions=3)
    assert set(np.unique(wheel.sign[wheel.covered])) == {-1, 1}
    assert classify_shape(np.diag([1.0, -1.0, 0])) == "clover"
    assert classify_shape(np.diag([1.0, 1.0, -1.0])) == "wheel_and_axle"


@pytest.mark.parametrize(
    "diag,shape",
    [
        ((1, 0.01, 0.01), "dumbbell"),
        ((1, -0.9, 0.02), "clover"),
        ((1, 0.9, 0.95), "ellipsoid"),
        ((1, 0.9, -0.95), "wheel_and_axle"),
        ((0, 0, 0), "degenerate"),
        ((1, 0.3, 0.0), "degenerate"),
    ],
)
def test_classify_shape(diag, shape):
    C = np.diag(np.array(diag, dtype=float))
    assert classify_shape(C) == shape
    assert classify_shape(eigensummary(C)) == shape


def test_residual_and_sign_invariants(rng):
    A = rng.normal(size=(3, 3))
    C = A + A.T
    s = build_surface(C, subdivisions=3)
    m = s.covered
    assert m.any()
    for r in (s.r_inner, s.r_outer):
        pts = s.directions[m] * r[m, None]
        assert np.max(np.abs(np.abs(q_value(C, pts)) - s.level)) < 1e-8
    assert np.all(s.r_inner[m] <= s.r_outer[m]) and np.all(s.r_inner[m] > 0)
    cnn = np.einsum("na,ab,nb->n", s.directions, C, s.directions)
    assert np.array_equal(s.sign, np.sign(cnn).astype(np.int8))


def test_rotation_covariance(rng):
    # a cyclic axis permutation maps the icosphere grid onto itself
    A = rng.normal(size=(3, 3))
    C = A + A.T
    R = np.array([[0, 0, 1], [1, 0, 0], [0, 1, 0]], dtype=float)
    s1 = build_surface(C, subdivisions=2)
    s2 = build_surface(R @ C @ R.T, s1.level, subdivisions=2)
    rotated = s1.directions @ R.T
    lookup = {tuple(np.round(d, 9)): k for k, d in enumerate(s2.directions)}
    idx = np.array([lookup[tuple(np.round(d, 9))] for d in rotated])
    assert np.array_equal(s1.covered, s2.covered[idx])
    m = s1.covered
    assert np.allclose(s1.r_inner[m], s2.r_inner[idx][m], rtol=1e-12)
    assert np.allclose(s1.r_outer[m], s2.r_outer[idx][m], rtol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(1e-4, 1e4))
def test_scale_invariance(scale):
    C = np.array([[0.3, 0.1, 0.0], [0.1, -0.2, 0.05], [0.0, 0.05, 0.1]])
    a = build_surface(C, subdivisions=1)
    b = build_surface(scale * C, subdivisions=1)
    assert b.level == pytest.approx(scale * a.level)
    assert np.array_equal(a.covered, b.covered)
    assert np.allclose(a.r_outer[a.covered], b.r_outer[b.covered], rtol=1e-9)


def test_export_is_byte_stable(tmp_path):
    C = np.diag([0.2, -0.1, 0.05])
    for fmt in ("ply", "csv"):
        p1 = export_mesh(build_surface(C, subdivisions=2), tmp_path / f"a.{fmt}", fmt)
        p2 = export_mesh(build_surface(C, subdivisions=2), tmp_path / f"b.{fmt}", fmt)
        assert p1.read_bytes() == p2.read_bytes()
    text = (tmp_path / "a.ply").read_text().splitlines()
    nv = int(next(line for line in text if line.startswith("element vertex")).split()[-1])
    start = text.index("end_header") + 1
    assert {tuple(line.split()[3:]) for line in text[start : start + nv]} <= {("220", "40", "40"), ("40", "70", "220")}
    rows = (tmp_path / "a.csv").read_text().splitlines()
    assert rows[0] == "dir_x,dir_y,dir_z,r_inner,r_outer,sign" and len(rows) == 163


def test_export_errors(tmp_path):
    s = build_surface(np.eye(3), subdivisions=1)
    with pytest.raises(ValueError):
        export_mesh(s, tmp_path / "a.obj", "obj")
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="cannot write"):
        export_mesh(s, blocker / "a.ply")
