"""Correlation-matrix visualisation surfaces.

The surface of a symmetric matrix ``C`` at level ``P`` is the set of points ``r``
with ``|Q(r)| = P`` where ``Q(r) = r.C.r / (1 + r^2)^{3/2}``. Along a unit
direction ``n`` this reduces to ``|C^nn| g(r) = P`` with
``g(r) = r^2 / (1 + r^2)^{3/2}``, which peaks at ``r = sqrt(2)`` with
``g = 2 / 3^{3/2}``. So every direction carries zero, one (tangent) or two radii.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .correlations import EigenSummary, eigensummary

G_MAX = 2.0 / 3.0**1.5
R_PEAK = np.sqrt(2.0)
TANGENCY_RTOL = 1e-9
SHAPES = ("dumbbell", "clover", "ellipsoid", "wheel_and_axle", "degenerate")
_BISECTION_STEPS = 200


def q_value(C: np.ndarray, r) -> np.ndarray:
    """``r.C.r / (1 + |r|^2)^{3/2}``; ``r`` may carry leading batch axes."""
    r = np.asarray(r, dtype=float)
    quad = np.einsum("...a,ab,...b->...", r, np.asarray(C, dtype=float), r)
    return quad / (1 + (r * r).sum(axis=-1)) ** 1.5


def _g(r):
    return r * r / (1 + r * r) ** 1.5


def _bisect(f, lo, hi):
    """Vectorised bisection for a sign change of ``f`` between ``lo`` and ``hi``."""
    lo, hi = np.array(lo, dtype=float), np.array(hi, dtype=float)
    f_lo = f(lo)
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        same = np.sign(f_mid) == np.sign(f_lo)
        lo = np.where(same, mid, lo)
        f_lo = np.where(same, f_mid, f_lo)
        hi = np.where(same, hi, mid)
        if np.all(hi - lo <= 4 * np.finfo(float).eps * np.maximum(hi, 1.0)):
            break
    return 0.5 * (lo + hi)


def _radii(cnn: np.ndarray, P: float):
    """Inner and outer roots of ``|cnn| g(r) = P`` (``nan`` where absent)."""
    a = np.abs(np.asarray(cnn, dtype=float))
    peak = a * G_MAX
    tangent = np.abs(peak - P) <= TANGENCY_RTOL * P
    two = (peak > P) & ~tangent
    inner = np.full(a.shape, np.nan)
    outer = np.full(a.shape, np.nan)
    if np.any(two):
        aa = a[two]

        def f(r):
            return aa * _g(r) - P

        inner[two] = _bisect(f, np.zeros_like(aa), np.full_like(aa, R_PEAK))
        # |c| g(r) < |c| / r, so the level is crossed before r = |c| / P
        outer[two] = _bisect(f, np.full_like(aa, R_PEAK), aa / P)
    inner[tangent] = R_PEAK
    return inner, outer, tangent


def radii_along(C: np.ndarray, P: float, n) -> tuple[float, ...]:
    """Positive radii where ``|Q(r n)| = P``: none, the tangent point, or an inner/outer pair."""
    if not P > 0:
        raise ValueError("level P must be positive")
    n = np.asarray(n, dtype=float)
    if n.shape != (3,) or abs(np.linalg.norm(n) - 1) > 1e-9:
        raise ValueError("direction must be a unit 3-vector")
    inner, outer, tangent = _radii(np.array([n @ np.asarray(C) @ n]), P)
    if tangent[0]:
        return (R_PEAK,)
    if np.isnan(inner[0]):
        return ()
    return (float(inner[0]), float(outer[0]))


def choose_level(C: np.ndarray, kappa: float = 0.5) -> float:
    """``P = kappa * max|lambda| * 2 / 3^{3/2}``; lobes exist along the top eigenvector for ``kappa < 1``."""
    lam = np.max(np.abs(np.linalg.eigvalsh(0.5 * (C + np.transpose(C)))))
    if lam == 0:
        raise ValueError("cannot choose a level for a zero matrix")
    return float(kappa * lam * G_MAX)


def icosphere(subdivisions: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Unit vertices and triangle faces of a subdivided icosahedron.

    ``10 * 4**s + 2`` vertices for ``s`` subdivisions (2562 at the default).
    """
    phi = (1 + 5**0.5) / 2
    verts = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return np.array(verts), np.array(faces, dtype=np.int64)


@dataclass(eq=False)
class CMVSurface:
    """Radial description of a surface on a fixed direction grid.

    ``r_inner``/``r_outer`` are ``nan`` where the level is not reached; at a
    tangency both equal ``sqrt(2)``. ``sign`` is the sign of ``n.C.n`` per
    direction (``+1`` drawn red, ``-1`` blue, ``0`` where ``C^nn`` vanishes).
    """

    level: float
    directions: np.ndarray
    faces: np.ndarray
    r_inner: np.ndarray
    r_outer: np.ndarray
    sign: np.ndarray

    @property
    def covered(self) -> np.ndarray:
        return ~np.isnan(self.r_inner)

    @property
    def is_empty(self) -> bool:
        return not np.any(self.covered)

    def points(self) -> np.ndarray:
        """All surface points (inner sheet then outer sheet)."""
        m = self.covered
        return np.concatenate(
            [self.directions[m] * self.r_inner[m, None], self.directions[m] * self.r_outer[m, None]]
        )

    def mesh(self):
        """Vertices, faces and per-vertex signs of the two radial sheets.

        A grid triangle enters a sheet when all three of its directions reach the level.
        """
        m = self.covered
        idx = np.full(len(self.directions), -1)
        idx[m] = np.arange(m.sum())
        tri = self.faces[np.all(m[self.faces], axis=1)]
        inner = self.directions[m] * self.r_inner[m, None]
        outer = self.directions[m] * self.r_outer[m, None]
        k = len(inner)
        verts = np.concatenate([inner, outer])
        faces = np.concatenate([idx[tri], idx[tri][:, ::-1] + k]) if len(tri) else np.zeros((0, 3), dtype=int)
        signs = np.concatenate([self.sign[m], self.sign[m]])
        return verts, faces, signs


def build_surface(C: np.ndarray, P: float | None = None, kappa: float = 0.5, subdivisions: int = 4) -> CMVSurface:
    """Surface of ``C`` at level ``P`` (or at :func:`choose_level` when ``P`` is omitted).

    A zero matrix gives an empty surface.
    """
    C = 0.5 * (np.asarray(C, dtype=float) + np.transpose(C))
    dirs, faces = icosphere(subdivisions)
    if P is None:
        P = choose_level(C, kappa) if np.any(C) else 1.0
    if not P > 0:
        raise ValueError("level P must be positive")
    cnn = np.einsum("na,ab,nb->n", dirs, C, dirs)
    inner, outer, tangent = _radii(cnn, P)
    outer[tangent] = R_PEAK
    return CMVSurface(float(P), dirs, faces, inner, outer, np.sign(cnn).astype(np.int8))


def classify_shape(summary: EigenSummary | np.ndarray, ratio_low: float = 0.2, ratio_high: float = 0.5) -> str:
    """Name the surface from the eigenvalue ratios ``|lambda_k| / |lambda_1|`` and their signs."""
    if not isinstance(summary, EigenSummary):
        summary = eigensummary(np.asarray(summary, dtype=float))
    lam = summary.values
    if lam[0] == 0:
        return "degenerate"
    r2, r3 = summary.ratios[1], summary.ratios[2]
    s = np.sign(lam)
    if r2 < ratio_low:
        return "dumbbell"
    if r2 >= ratio_high and s[1] != s[0] and r3 < ratio_low:
        return "clover"
    if r2 >= ratio_high and r3 >= ratio_high:
        return "ellipsoid" if s[1] == s[0] == s[2] else "wheel_and_axle"
    return "degenerate"


_RED = (220, 40, 40)
_BLUE = (40, 70, 220)
_GREY = (128, 128, 128)


def _color(sign: int) -> tuple[int, int, int]:
    return _RED if sign > 0 else _BLUE if sign < 0 else _GREY


def export_mesh(surface: CMVSurface, path, fmt: str = "ply") -> Path:
    """Write the surface as ASCII PLY (``fmt="ply"``) or as a radii table (``fmt="csv"``).

    PLY vertices carry ``red green blue`` properties: red where ``C^nn > 0`` and
    blue where it is negative. The CSV has one row per grid direction with
    columns ``dir_x, dir_y, dir_z, r_inner, r_outer, sign`` and empty radii where
    the level is not reached. Numbers are printed with ``%.12g`` so identical
    inputs give identical bytes.
    """
    path = Path(path)
    if fmt == "ply":
        if surface.is_empty:
            raise ValueError("cannot write a mesh for an empty surface")
        verts, faces, signs = surface.mesh()
        lines = [
            "ply", "format ascii 1.0", f"comment cmv level {surface.level:.12g}",
            f"element vertex {len(verts)}",
            "property double x", "property double y", "property double z",
            "property uchar red", "property uchar green", "property uchar blue",
            f"element face {len(faces)}", "property list uchar int vertex_indices", "end_header",
        ]
        lines += [
            "%.12g %.12g %.12g %d %d %d" % (*v, *_color(s)) for v, s in zip(verts, signs)
        ]
        lines += ["3 %d %d %d" % tuple(f) for f in faces]
    elif fmt == "csv":
        lines = ["dir_x,dir_y,dir_z,r_inner,r_outer,sign"]
        for d, ri, ro, s in zip(surface.directions, surface.r_inner, surface.r_outer, surface.sign):
            rin = "" if np.isnan(ri) else "%.12g" % ri
            rout = "" if np.isnan(ro) else "%.12g" % ro
            lines.append("%.12g,%.12g,%.12g,%s,%s,%d" % (*d, rin, rout, s))
    else:
        raise ValueError(f"unknown mesh format {fmt!r}; expected 'ply' or 'csv'")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {fmt} output to {path}: {exc}") from exc
    return path
