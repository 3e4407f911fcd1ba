"""Classical spin equations of motion ``dS_i/dt = S_i x (h + B_i)``.

Two integrators: a fixed-step classical RK4 that works for any
:class:`HamiltonianSpec`, and an exact rotation for field-free Ising models
where ``S^z`` is conserved and each spin precesses about z at the rate ``B^z_i``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Sequence

import numba as nb
import numpy as np

from .model import HamiltonianSpec
from .sampling import BLOCK_SIZE, PhaseEnsemble

DEFAULT_DT = 1e-3

if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    # probe OpenMP first; an old system TBB otherwise triggers a warning on every run
    nb.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]


@dataclass(eq=False)
class TrajectorySet:
    """Spin configurations on a time grid.

    ``states`` has shape ``(n_times, n_samples, len(sites), 3)`` where ``sites``
    lists the lattice sites that were kept (all of them unless requested otherwise).
    """

    times: np.ndarray
    states: np.ndarray
    weights: np.ndarray
    sites: np.ndarray
    scheme: str = ""

    @property
    def n_samples(self) -> int:
        return self.states.shape[1]

    def time_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[k], t, rel_tol=1e-12, abs_tol=1e-12):
            raise KeyError(f"t={t} is not on the trajectory grid")
        return k

    def site_index(self, i: int) -> int:
        hits = np.flatnonzero(self.sites == i)
        if hits.size == 0:
            raise KeyError(f"site {i} was not stored")
        return int(hits[0])

    def spins_at(self, t: float, i: int) -> np.ndarray:
        """``(n_samples, 3)`` array of spin ``i`` at time ``t``."""
        return self.states[self.time_index(t), :, self.site_index(i)]


def effective_fields(spins: np.ndarray, spec: HamiltonianSpec) -> np.ndarray:
    """``B^a_i = sum_j J^a_ij S^a_j`` for every site; ``spins`` is ``(..., N, 3)``."""
    B = np.zeros_like(spins)
    for a in range(3):
        Ja = spec.couplings[a]
        if Ja.any():
            B[..., a] = spins[..., a] @ Ja
    return B


def effective_field(config: np.ndarray, spec: HamiltonianSpec, i: int) -> np.ndarray:
    """Mean field acting on spin ``i`` of a single ``(N, 3)`` configuration."""
    config = np.asarray(config, dtype=float)
    return np.einsum("aj,ja->a", spec.couplings[:, i, :], config)


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def spin_rhs(spins: np.ndarray, spec: HamiltonianSpec) -> np.ndarray:
    """Time derivative ``S_i x (h + B_i)``."""
    return _cross(spins, effective_fields(spins, spec) + spec.field)


def classical_energy(spins: np.ndarray, spec: HamiltonianSpec) -> np.ndarray:
    """``-sum_i h.S_i - sum_{i<j} J^a_ij S^a_i S^a_j`` for each configuration."""
    B = effective_fields(spins, spec)
    return -(spins @ spec.field).sum(axis=-1) - 0.5 * (spins * B).sum(axis=(-1, -2))


def classical_energy_scale(spins: np.ndarray, spec: HamiltonianSpec) -> np.ndarray:
    """``sum_{i<j,a} |J^a_ij| |S_i||S_j| + sum_i |h| |S_i|``: a bound on the energy magnitude.

    Used to express energy drift relatively when the energy itself may vanish.
    """
    norms = np.linalg.norm(spins, axis=-1)
    pair = np.einsum("...i,ij,...j->...", norms, np.abs(spec.couplings).sum(axis=0), norms)
    return 0.5 * pair + np.linalg.norm(spec.field) * norms.sum(axis=-1)


def _rk4_steps(S: np.ndarray, spec: HamiltonianSpec, h: float, n_steps: int) -> None:
    for _ in range(n_steps):
        k1 = spin_rhs(S, spec)
        k2 = spin_rhs(S + 0.5 * h * k1, spec)
        k3 = spin_rhs(S + 0.5 * h * k2, spec)
        k4 = spin_rhs(S + h * k3, spec)
        S += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _neighbor_table(spec: HamiltonianSpec):
    """CSR-style neighbour list with per-axis couplings ``(nnz, 3)``."""
    mask = np.any(spec.couplings != 0, axis=0)
    indptr = np.concatenate([[0], np.cumsum(mask.sum(axis=1))]).astype(np.int64)
    rows, cols = np.nonzero(mask)
    weights = np.ascontiguousarray(spec.couplings[:, rows, cols].T)
    return indptr, cols.astype(np.int64), weights


@nb.njit(cache=True, fastmath=False)
def _rhs_one(S, indptr, indices, weights, field, out):
    n = S.shape[0]
    for i in range(n):
        bx = field[0]
        by = field[1]
        bz = field[2]
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            bx += weights[p, 0] * S[j, 0]
            by += weights[p, 1] * S[j, 1]
            bz += weights[p, 2] * S[j, 2]
        out[i, 0] = S[i, 1] * bz - S[i, 2] * by
        out[i, 1] = S[i, 2] * bx - S[i, 0] * bz
        out[i, 2] = S[i, 0] * by - S[i, 1] * bx


@nb.njit(cache=True, parallel=True)
def _rk4_kernel(S, indptr, indices, weights, field, h, n_steps):
    n_samples, n, _ = S.shape
    for s in nb.prange(n_samples):
        y = S[s]
        k1 = np.empty((n, 3))
        k2 = np.empty((n, 3))
        k3 = np.empty((n, 3))
        k4 = np.empty((n, 3))
        tmp = np.empty((n, 3))
        for _ in range(n_steps):
            _rhs_one(y, indptr, indices, weights, field, k1)
            for i in range(n):
                for a in range(3):
                    tmp[i, a] = y[i, a] + 0.5 * h * k1[i, a]
            _rhs_one(tmp, indptr, indices, weights, field, k2)
            for i in range(n):
                for a in range(3):
                    tmp[i, a] = y[i, a] + 0.5 * h * k2[i, a]
            _rhs_one(tmp, indptr, indices, weights, field, k3)
            for i in range(n):
                for a in range(3):
                    tmp[i, a] = y[i, a] + h * k3[i, a]
            _rhs_one(tmp, indptr, indices, weights, field, k4)
            for i in range(n):
                for a in range(3):
                    y[i, a] += (h / 6.0) * (k1[i, a] + 2.0 * k2[i, a] + 2.0 * k3[i, a] + k4[i, a])


def _check_times(times: Sequence[float]) -> np.ndarray:
    times = np.asarray(times, dtype=float).ravel()
    if times.size == 0:
        raise ValueError("empty time grid")
    if times[0] < 0 or np.any(np.diff(times) < 0):
        raise ValueError("time grid must be non-negative and non-decreasing")
    return times


def _sites(sites, n_spins: int) -> np.ndarray:
    if sites is None:
        return np.arange(n_spins)
    return np.asarray(sorted(set(int(s) for s in sites)), dtype=int)


def iter_generic(
    ensemble: PhaseEnsemble,
    spec: HamiltonianSpec,
    times: Sequence[float],
    dt: float = DEFAULT_DT,
    threads: int = 1,
    backend: str = "numba",
) -> Iterator[tuple[float, np.ndarray]]:
    """Yield ``(t, spins)`` for each grid time, advancing all samples with RK4.

    The yielded array is the live integrator state; copy it to keep it.
    Each interval between grid times is split into equal steps no longer than ``dt``.
    ``backend="numpy"`` runs the vectorised reference implementation instead of
    the compiled per-sample kernel; both give the same trajectories to rounding.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    times = _check_times(times)
    S = np.ascontiguousarray(ensemble.spins, dtype=float).copy()
    if backend == "numba":
        yield from _iter_numba(S, spec, times, dt, threads)
        return
    chunks = [slice(lo, min(lo + BLOCK_SIZE, len(S))) for lo in range(0, len(S), BLOCK_SIZE)]
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 and len(chunks) > 1 else None
    try:
        t_prev = 0.0
        for t in times:
            span = t - t_prev
            if span > 0:
                n_steps = max(1, math.ceil(span / dt - 1e-9))
                h = span / n_steps
                if pool is None:
                    for sl in chunks:
                        _rk4_steps(S[sl], spec, h, n_steps)
                else:
                    list(pool.map(lambda sl: _rk4_steps(S[sl], spec, h, n_steps), chunks))
            t_prev = t
            yield float(t), S
    finally:
        if pool is not None:
            pool.shutdown()


def _iter_numba(S, spec, times, dt, threads):
    table = _neighbor_table(spec)
    field = np.array(spec.field, dtype=float)
    if threads > 0:
        nb.set_num_threads(min(threads, nb.config.NUMBA_NUM_THREADS))
    t_prev = 0.0
    for t in times:
        span = t - t_prev
        if span > 0:
            n_steps = max(1, math.ceil(span / dt - 1e-9))
            _rk4_kernel(S, *table, field, span / n_steps, n_steps)
        t_prev = t
        yield float(t), S


def evolve_generic(
    ensemble: PhaseEnsemble,
    spec: HamiltonianSpec,
    times: Sequence[float],
    dt: float = DEFAULT_DT,
    sites=None,
    threads: int = 1,
    backend: str = "numba",
) -> TrajectorySet:
    """RK4 trajectories of every sample, stored at the requested times and sites."""
    times = _check_times(times)
    keep = _sites(sites, ensemble.n_spins)
    states = np.empty((len(times), ensemble.n_samples, len(keep), 3))
    for k, (_, S) in enumerate(iter_generic(ensemble, spec, times, dt, threads, backend)):
        states[k] = S[:, keep]
    return TrajectorySet(times, states, ensemble.weights, keep, ensemble.scheme)


def _require_field_free_ising(spec: HamiltonianSpec) -> None:
    if not spec.is_field_free_ising():
        raise ValueError("rotation integrator needs a field-free Ising spec (J^z couplings only)")


def rotate_ising(spins: np.ndarray, spec: HamiltonianSpec, t: float, sites=None) -> np.ndarray:
    """Exact field-free Ising evolution: rotate each spin about z by ``-B^z_i t``."""
    _require_field_free_ising(spec)
    keep = _sites(sites, spins.shape[-2])
    Bz = spins[..., 2] @ spec.Jz[:, keep]
    phi = Bz * t
    c, s = np.cos(phi), np.sin(phi)
    S0 = spins[..., keep, :]
    out = np.empty_like(S0)
    out[..., 0] = S0[..., 0] * c + S0[..., 1] * s
    out[..., 1] = S0[..., 1] * c - S0[..., 0] * s
    out[..., 2] = S0[..., 2]
    return out


def evolve_ising_rotation(
    ensemble: PhaseEnsemble, spec: HamiltonianSpec, times: Sequence[float], sites=None
) -> TrajectorySet:
    """Closed-form classical trajectories for field-free Ising couplings."""
    _require_field_free_ising(spec)
    times = _check_times(times)
    keep = _sites(sites, ensemble.n_spins)
    states = np.stack([rotate_ising(ensemble.spins, spec, t, keep) for t in times])
    return TrajectorySet(times, states, ensemble.weights, keep, ensemble.scheme)


def evolve(
    ensemble: PhaseEnsemble,
    spec: HamiltonianSpec,
    times: Sequence[float],
    dt: float = DEFAULT_DT,
    sites=None,
    threads: int = 1,
) -> TrajectorySet:
    """Dispatch to the rotation fast path when possible, RK4 otherwise."""
    if spec.is_field_free_ising():
        return evolve_ising_rotation(ensemble, spec, times, sites)
    return evolve_generic(ensemble, spec, times, dt, sites, threads)
