"""Connected spin-pair correlation matrices and the quantities derived from them.

Every backend (closed forms, state vectors, sampled trajectories) ends up as a
:class:`CorrelationMatrix`: the real symmetric 3x3 matrix
``C^{mu nu} = (c^{mu nu} + c^{nu mu}) / 2`` with
``c^{mu nu} = <S^mu_i S^nu_j> - <S^mu_i><S^nu_j>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

AXES = ("x", "y", "z")
NORM_METRICS = ("frobenius", "spectral")


@dataclass(frozen=True, eq=False)
class PairExpectations:
    """``<S^mu_i>``, ``<S^nu_j>`` and ``<S^mu_i S^nu_j>`` for one pair."""

    mean_i: np.ndarray
    mean_j: np.ndarray
    second: np.ndarray


def connected_pair(expectations: PairExpectations) -> np.ndarray:
    """``c^{mu nu} = <S^mu_i S^nu_j> - <S^mu_i><S^nu_j>`` (not symmetrised)."""
    return np.asarray(expectations.second) - np.multiply.outer(expectations.mean_i, expectations.mean_j)


def symmetrize(c: np.ndarray) -> np.ndarray:
    return 0.5 * (c + np.swapaxes(c, -1, -2))


def pm_to_cartesian(pm, tol: float = 1e-8) -> np.ndarray:
    """Connected, symmetrised Cartesian matrix from raising/lowering expectations.

    With ``S^+- = (S^x +- i S^y)/2`` and the symmetrised connected pieces
    ``C^{++}``, ``C^{+-}``, ``C^{+z}``::

        C^xx = 2 Re C^{++} + 2 Re C^{+-}     C^xy = 2 Im C^{++}
        C^yy = -2 Re (C^{++} - C^{+-})       C^xz = 2 Re C^{+z}
        C^zz = C^{zz}                        C^yz = 2 Im C^{+z}

    The lowering-operator terms are carried through explicitly so that an
    inconsistent input produces an imaginary residue; a residue above ``tol``
    raises ``ValueError``. Works elementwise over time arrays, returning
    ``(..., 3, 3)``.
    """
    # connected raising/lowering pieces, each ordered (site j, site k)
    pp = pm.pp - pm.sp_j * pm.sp_k
    mm = pm.mm - pm.sm_j * pm.sm_k
    pm_ = pm.pm - pm.sp_j * pm.sm_k
    mp = pm.mp - pm.sm_j * pm.sp_k
    pz = pm.pz - pm.sp_j * pm.sz_k
    mz = pm.mz - pm.sm_j * pm.sz_k
    zp = pm.zp - pm.sz_j * pm.sp_k
    zm = pm.zm - pm.sz_j * pm.sm_k
    zz = pm.zz - pm.sz_j * pm.sz_k

    # S^x = S^+ + S^-, S^y = -i (S^+ - S^-)
    xx = pp + pm_ + mp + mm
    yy = -(pp - pm_ - mp + mm)
    xy = -1j * (pp - pm_ + mp - mm)
    yx = -1j * (pp + pm_ - mp - mm)
    xz = pz + mz
    zx = zp + zm
    yz = -1j * (pz - mz)
    zy = -1j * (zp - zm)

    c = np.stack(
        [np.stack([xx, xy, xz], -1), np.stack([yx, yy, yz], -1), np.stack([zx, zy, zz], -1)], -2
    )
    c = np.asarray(c, dtype=complex)
    residue = float(np.max(np.abs(c.imag))) if c.size else 0.0
    if residue > tol:
        raise ValueError(f"imaginary residue {residue:.2e} in Cartesian correlations; check S+- conventions")
    return symmetrize(c.real)


@dataclass(eq=False)
class CorrelationMatrix:
    """Symmetric connected correlation matrix of one pair at one time."""

    C: np.ndarray
    pair: tuple[int, int]
    t: float
    method: str
    se: Optional[np.ndarray] = None

    def __post_init__(self):
        self.C = symmetrize(np.asarray(self.C, dtype=float))

    def component(self, name: str) -> float:
        a, b = (AXES.index(ch) for ch in name)
        return float(self.C[a, b])

    def along(self, n) -> float:
        return correlation_along(self.C, n)

    def eigensummary(self, rel_threshold: float = 0.05) -> "EigenSummary":
        return eigensummary(self.C, rel_threshold)


def _jackknife_deviation(w, a, b):
    """Delete-one shifts of the weighted connected correlation, shape ``(n, 3, 3)``.

    With ``A`` the full-sample mean of ``x_s`` the leave-one-out mean is
    ``A - (x_s - A)/(n - 1)``, which lets the shift be written without
    subtracting nearly equal numbers.
    """
    n = w.size
    wa, wb = w[:, None] * a, w[:, None] * b
    ma, mb = wa.mean(axis=0), wb.mean(axis=0)
    wab = w[:, None, None] * a[:, :, None] * b[:, None, :]
    M = wab.mean(axis=0)
    da = (wa - ma) / (n - 1)
    db = (wb - mb) / (n - 1)
    dM = (wab - M) / (n - 1)
    dev = -dM + da[:, :, None] * mb[None, None, :] + ma[None, :, None] * db[:, None, :] - da[:, :, None] * db[:, None, :]
    return M - np.outer(ma, mb), symmetrize(dev)


def weighted_correlation(spins_i: np.ndarray, spins_j: np.ndarray, weights: np.ndarray, jackknife: bool = True):
    """Signed-ensemble connected correlation and its jackknife standard error.

    Averages are ``sum_s w_s x_s / n`` with the per-sample estimator weights of
    the ensemble.
    """
    w = np.asarray(weights, dtype=float)
    n = w.size
    if n == 0:
        raise ValueError("cannot estimate correlations from zero samples")
    if not jackknife or n < 2:
        a, b = w[:, None] * spins_i, spins_j
        c = (a[:, :, None] * b[:, None, :]).mean(axis=0) - np.outer(a.mean(axis=0), (w[:, None] * b).mean(axis=0))
        return symmetrize(c), None
    c, dev = _jackknife_deviation(w, spins_i, spins_j)
    dev = dev - dev.mean(axis=0)
    se = np.sqrt((n - 1) / n * (dev**2).sum(axis=0))
    return symmetrize(c), se


def ensemble_correlation(trajectories, i: int, j: int, t: float, jackknife: bool = True) -> CorrelationMatrix:
    """Connected correlation of sites ``i, j`` at grid time ``t`` from a :class:`TrajectorySet`."""
    if i == j:
        raise ValueError("correlations need two distinct sites")
    if trajectories.n_samples == 0:
        raise ValueError("cannot estimate correlations from zero samples")
    C, se = weighted_correlation(
        trajectories.spins_at(t, i), trajectories.spins_at(t, j), trajectories.weights, jackknife
    )
    return CorrelationMatrix(C, (i, j), float(t), trajectories.scheme + "_sampled", se)


def correlation_along(C: np.ndarray, n) -> float:
    """``n . C . n`` for a unit vector ``n``."""
    n = np.asarray(n, dtype=float)
    if n.shape != (3,) or abs(np.linalg.norm(n) - 1) > 1e-9:
        raise ValueError("direction must be a unit 3-vector")
    return float(n @ np.asarray(C) @ n)


@dataclass(frozen=True, eq=False)
class EigenSummary:
    """Eigenpairs ordered by decreasing ``|lambda|``; ``vectors[:, k]`` belongs to ``values[k]``."""

    values: np.ndarray
    vectors: np.ndarray
    dimensionality: int
    rel_threshold: float = 0.05

    @property
    def ratios(self) -> np.ndarray:
        """``|lambda_k| / |lambda_1|`` (all zero for a zero matrix)."""
        top = abs(self.values[0])
        return np.abs(self.values) / top if top > 0 else np.zeros(3)


def eigensummary(C: np.ndarray, rel_threshold: float = 0.05) -> EigenSummary:
    C = np.asarray(C, dtype=float)
    if not np.allclose(C, C.T, atol=1e-12, rtol=0):
        raise ValueError("eigensummary needs a symmetric matrix")
    vals, vecs = np.linalg.eigh(symmetrize(C))
    order = np.argsort(-np.abs(vals), kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    top = np.abs(vals[0])
    dim = 0 if top == 0 else int(np.sum(np.abs(vals) >= rel_threshold * top))
    return EigenSummary(vals, vecs, dim, rel_threshold)


def delta_norm(C_exact: np.ndarray, C_approx: np.ndarray, metric: str = "frobenius") -> float:
    """Matrix norm of ``C_exact - C_approx`` (Frobenius by default, or spectral)."""
    d = np.asarray(C_exact, dtype=float) - np.asarray(C_approx, dtype=float)
    if metric == "frobenius":
        return float(np.linalg.norm(d, "fro"))
    if metric == "spectral":
        return float(np.linalg.norm(d, 2))
    raise ValueError(f"unknown norm {metric!r}; expected one of {NORM_METRICS}")


# ------------------------------------------------------------- short-time errors


def short_time_delta_nn(Jvec, theta: float, t, method: str):
    """Leading ``t^2`` deficit ``C^nn_exact - C^nn_approx`` along the initial spin direction.

    ``Jvec = (J^x, J^y, J^z)`` of the pair. Both branches are sums of squares,
    so the deficit is never negative.
    """
    Jx, Jy, Jz = (float(v) for v in Jvec)
    c2, s2 = np.cos(theta) ** 2, np.sin(theta) ** 2
    if method == "dtwa":
        inner = Jx * c2 - Jz * s2
    elif method == "twa":
        inner = Jx * c2 + Jz * s2
    else:
        raise ValueError(f"method must be 'dtwa' or 'twa', got {method!r}")
    t = np.asarray(t, dtype=float)
    return t**2 / 16 * (Jy**2 + inner**2)


def short_time_delta_components(Jvec, S_vec, t) -> np.ndarray:
    """Leading-order DTWA deficit matrix ``delta C`` (shape ``(..., 3, 3)``).

    ``S_vec`` is the initial single-spin expectation. The diagonal entries follow
    from the ``xx`` form and the off-diagonal ones from the ``xy`` form by cyclic
    relabelling of the axes.
    """
    J = np.asarray(Jvec, dtype=float)
    S = np.asarray(S_vec, dtype=float)
    t = np.asarray(t, dtype=float)
    D = np.zeros(t.shape + (3, 3))
    for shift in range(3):
        a, b, c = shift, (shift + 1) % 3, (shift + 2) % 3
        diag = S[a] ** 2 * (J[b] ** 2 + J[c] ** 2) - S[b] ** 2 * J[a] * J[b] - S[c] ** 2 * J[a] * J[c]
        off = S[a] * S[b] * J[c] * (J[c] - 2 * S[c] ** 2 * (J[a] + J[b]))
        D[..., a, a] = t**2 / 4 * diag
        D[..., a, b] = D[..., b, a] = t**2 / 4 * off
    return D


def richardson_t2(t0: float, values) -> float:
    """Extrapolate ``lim g(t)`` for ``g = delta/t^2`` sampled at ``t0, 2 t0, 4 t0``.

    Assumes ``g(t) = A + B t + C t^2 + ...`` and cancels the ``B`` and ``C`` terms.
    """
    d1, d2, d3 = values
    g1, g2, g3 = d1 / t0**2, d2 / (2 * t0) ** 2, d3 / (4 * t0) ** 2
    return 8 / 3 * g1 - 2 * g2 + g3 / 3


# ----------------------------------------------------- zero-eigenvalue directions

NULL_CASES = ("two_spin", "chain", "square")


def null_direction(method: str, case: str, theta: float, Jt: float) -> np.ndarray:
    """Predicted zero-eigenvalue direction of nearest-neighbour Ising correlations.

    ``case`` is ``two_spin`` (an isolated pair), ``chain`` (1D ring) or
    ``square`` (2D lattice). The returned vector is normalised; several forms
    are singular at ``theta = 0`` or ``Jt = pi``.
    """
    s, c = np.sin(theta), np.cos(theta)
    h = Jt / 2
    if method == "dtwa":
        if case == "two_spin":
            v = (s, 0.0, c * np.cos(h))
        elif case == "chain":
            v = (1.0, -c * np.tan(h), c / s * (1 - s**2 * np.sin(h) ** 2))
        elif case == "square":
            v = (
                s / c * (np.cos(h) ** 2 - 3 * c**2 * np.sin(h) ** 2),
                -s * np.tan(h) * (1 + 2 * np.cos(Jt) + np.sin(h) ** 2 * s**2),
                (1 - s**2 * np.sin(h) ** 2) ** 3,
            )
        else:
            raise ValueError(f"unknown case {case!r}")
    elif method == "twa":
        k = {"two_spin": 0.5, "chain": 1.0, "square": 2.0}.get(case)
        if k is None:
            raise ValueError(f"unknown case {case!r}")
        v = (np.cos(k * Jt * c), -np.sin(k * Jt * c), c / s * np.exp(-k * Jt**2 * s**2 / 4))
    else:
        raise ValueError("null directions exist only for 'dtwa' and 'twa'")
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def angle_between_axes(u, v) -> float:
    """Angle between the lines spanned by ``u`` and ``v`` (sign-insensitive)."""
    u = np.asarray(u, dtype=float) / np.linalg.norm(u)
    v = np.asarray(v, dtype=float) / np.linalg.norm(v)
    return float(np.arctan2(np.linalg.norm(np.cross(u, v)), abs(u @ v)))


# ------------------------------------------------------------------ time series


def half_max_time(t, y) -> float:
    """Earliest time at which ``|y|`` reaches half its first local maximum.

    Linear interpolation between grid points; ``nan`` if ``|y|`` never rises.
    """
    t = np.asarray(t, dtype=float)
    a = np.abs(np.asarray(y, dtype=float))
    k = 0
    while k + 1 < a.size and a[k + 1] >= a[k]:
        k += 1
    peak = a[k]
    if peak <= a[0]:
        return float("nan")
    half = a[0] + 0.5 * (peak - a[0]) if a[0] > 0 else 0.5 * peak
    m = int(np.argmax(a[: k + 1] >= half))
    if m == 0:
        return float(t[0])
    f = (half - a[m - 1]) / (a[m] - a[m - 1])
    return float(t[m - 1] + f * (t[m] - t[m - 1]))
