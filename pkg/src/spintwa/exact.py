"""Exact quantum reference results.

Closed-form Ising correlations for the exact, DTWA and TWA treatments, a sparse
Hamiltonian builder, a Lanczos time propagator and reduced-density-matrix
expectation values.

Basis states are tensor products with site 0 as the most significant bit;
bit value 0 is spin up. Raising/lowering operators follow
``S^+- = (S^x +- i S^y) / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .correlations import PairExpectations
from .model import HamiltonianSpec, InitialProductState

MAX_SITES = 14
CLOSED_FORM_METHODS = ("exact", "dtwa", "twa")

_SX = np.array([[0, 1], [1, 0]], dtype=complex) / 2
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
_SZ = np.array([[1, 0], [0, -1]], dtype=complex) / 2
_SP = np.array([[0, 1], [0, 0]], dtype=complex) / 2
SPIN_OPS = (_SX, _SY, _SZ)


class KrylovError(RuntimeError):
    """The Lanczos propagator could not meet its error tolerance."""


@dataclass(eq=False)
class PMCorrelationSet:
    """Raising-operator expectations for a site pair ``(j, k)``.

    Fields may be scalars or arrays over a time grid. Lowering-operator values
    default to the complex conjugates; they can be given explicitly (for
    instance from an independent computation), in which case
    :func:`~spintwa.correlations.pm_to_cartesian` checks they are consistent.
    """

    sp_j: np.ndarray
    sp_k: np.ndarray
    sz_j: np.ndarray
    sz_k: np.ndarray
    pp: np.ndarray
    pm: np.ndarray
    pz: np.ndarray
    zp: np.ndarray
    zz: np.ndarray
    sm_j: Optional[np.ndarray] = None
    sm_k: Optional[np.ndarray] = None
    mm: Optional[np.ndarray] = None
    mp: Optional[np.ndarray] = None
    mz: Optional[np.ndarray] = None
    zm: Optional[np.ndarray] = None

    def __post_init__(self):
        for name, src in (("sm_j", "sp_j"), ("sm_k", "sp_k"), ("mm", "pp"), ("mp", "pm"), ("mz", "pz"), ("zm", "zp")):
            if getattr(self, name) is None:
                setattr(self, name, np.conj(getattr(self, src)))

    def conjugation_residual(self) -> float:
        pairs = (
            (self.sm_j, self.sp_j), (self.sm_k, self.sp_k), (self.mm, self.pp),
            (self.mp, self.pm), (self.mz, self.pz), (self.zm, self.zp),
        )
        return float(max(np.max(np.abs(a - np.conj(b))) for a, b in pairs))


# ---------------------------------------------------------------- closed forms


def _ising_couplings(spec: HamiltonianSpec) -> np.ndarray:
    if not spec.is_field_free_ising():
        raise ValueError("closed forms need a field-free Ising spec (J^z couplings only)")
    return spec.Jz


def _prod(factor, args: np.ndarray, t: np.ndarray) -> np.ndarray:
    """``prod_l factor(args_l * t)`` for every time, skipping zero couplings."""
    args = args[args != 0]
    out = np.ones(t.shape, dtype=complex)
    for a in args:
        out *= factor(a * t)
    return out


def closed_form_ising(method: str, spec: HamiltonianSpec, theta: float, t, j: int, k: int) -> PMCorrelationSet:
    """Product formulas for an Ising spec, vectorised over ``t``.

    ``exact`` is the quantum result; ``dtwa`` differs from it only by a factor
    ``cos^2(J_jk t / 2)`` on ``<S+S+>`` and ``<S+S->``; ``twa`` replaces every
    cosine factor by a Gaussian envelope.
    """
    if method not in CLOSED_FORM_METHODS:
        raise ValueError(f"unknown closed-form method {method!r}; expected one of {CLOSED_FORM_METHODS}")
    if j == k:
        raise ValueError("closed forms need two distinct sites")
    J = _ising_couplings(spec)
    t = np.asarray(t, dtype=float)
    s, c = np.sin(theta), np.cos(theta)
    others = np.array([l for l in range(J.shape[0]) if l != j and l != k], dtype=int)
    Jj, Jk = J[j, others], J[k, others]
    a = J[j, k] * t

    if method == "twa":
        def f(x):
            return np.exp(-x**2 * s**2 / 8 - 1j * x * c / 2)

        pp_pref = (1 + 0.5j * a * c) ** 2 * f(a) ** 2
        pm_pref = (1 + a**2 * c**2 / 4) * np.exp(-a**2 * s**2 / 4)
        z_pref = (c - 0.5j * a * s**2) * f(a)
    else:
        def f(x):
            return np.cos(x / 2) - 1j * c * np.sin(x / 2)

        pp_pref = np.ones_like(a, dtype=complex)
        pm_pref = np.ones_like(a, dtype=complex)
        if method == "dtwa":
            pp_pref = pp_pref * np.cos(a / 2) ** 2
            pm_pref = pm_pref * np.cos(a / 2) ** 2
        z_pref = c * np.cos(a / 2) - 1j * np.sin(a / 2)

    fa = f(a)
    sp_j = 0.25 * s * fa * _prod(f, Jj, t)
    sp_k = 0.25 * s * fa * _prod(f, Jk, t)
    sz = np.full(t.shape, 0.5 * c)
    return PMCorrelationSet(
        sp_j=sp_j,
        sp_k=sp_k,
        sz_j=sz,
        sz_k=sz.copy(),
        pp=s**2 / 16 * pp_pref * _prod(f, Jj + Jk, t),
        pm=s**2 / 16 * pm_pref * _prod(f, Jj - Jk, t),
        pz=s / 8 * z_pref * _prod(f, Jj, t),
        zp=s / 8 * z_pref * _prod(f, Jk, t),
        zz=np.full(t.shape, 0.25 * c**2, dtype=complex),
    )


# ------------------------------------------------------------------ state vector


def _check_size(n: int) -> None:
    if n > MAX_SITES:
        raise ValueError(f"state-vector evolution is capped at N <= {MAX_SITES} sites, got {n}")


def build_hamiltonian(spec: HamiltonianSpec, pair_sum: str = "unordered") -> sp.csr_matrix:
    """Sparse ``H = -sum_i h.S_i - sum_pairs J^mu_ij S^mu_i S^mu_j``.

    ``pair_sum="unordered"`` counts each pair once, which generates exactly the
    classical equations of motion used elsewhere in the package.
    ``pair_sum="ordered"`` sums over ``i != j`` so every pair appears twice.
    """
    if pair_sum not in ("unordered", "ordered"):
        raise ValueError("pair_sum must be 'unordered' or 'ordered'")
    n = spec.n_sites
    _check_size(n)
    dim = 1 << n
    mult = 2.0 if pair_sum == "ordered" else 1.0
    states = np.arange(dim, dtype=np.int64)
    bits = (states[:, None] >> (n - 1 - np.arange(n))) & 1
    sz = 0.5 - bits  # +1/2 for up (bit 0)

    diag = np.zeros(dim)
    rows, cols, vals = [], [], []
    hx, hy, hz = spec.field
    diag -= hz * sz.sum(axis=1)
    for i in range(n):
        mask = 1 << (n - 1 - i)
        flipped = states ^ mask
        if hx or hy:
            # <flipped| S^x_i |s> = 1/2 ; <flipped| S^y_i |s> = +i/2 (up->down) or -i/2
            amp = -(0.5 * hx + 0.5j * hy * np.where(bits[:, i] == 0, 1, -1))
            rows.append(flipped)
            cols.append(states)
            vals.append(amp)
    for i in range(n):
        for jj in range(i + 1, n):
            Jx, Jy, Jz = spec.couplings[:, i, jj] * mult
            same = bits[:, i] == bits[:, jj]
            if Jz:
                diag -= Jz * np.where(same, 0.25, -0.25)
            if Jx or Jy:
                flipped = states ^ ((1 << (n - 1 - i)) | (1 << (n - 1 - jj)))
                amp = -(Jx * 0.25 + Jy * np.where(same, -0.25, 0.25))
                rows.append(flipped)
                cols.append(states)
                vals.append(amp.astype(complex))
    rows.append(states)
    cols.append(states)
    vals.append(diag.astype(complex))
    H = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    ).tocsr()
    H.sum_duplicates()
    H.eliminate_zeros()
    return H


def product_state(theta: float, n_sites: int) -> np.ndarray:
    """``|theta theta ...>`` as a dense state vector."""
    _check_size(n_sites)
    ket = InitialProductState(theta).single_site_ket()
    psi = np.ones(1, dtype=complex)
    for _ in range(n_sites):
        psi = np.kron(psi, ket)
    return psi


def _lanczos(H, v0: np.ndarray, m: int):
    """Orthonormal Krylov basis (rows of ``V``), tridiagonal ``T`` and the next ``beta``."""
    dim = v0.size
    m = min(m, dim)
    V = np.zeros((m, dim), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    V[0] = v0 / np.linalg.norm(v0)
    scale = 1.0
    for k in range(m):
        w = H @ V[k]
        alpha[k] = np.vdot(V[k], w).real
        # full reorthogonalisation, applied twice for stability
        for _ in range(2):
            w -= V[: k + 1].T @ (V[: k + 1].conj() @ w)
        b = np.linalg.norm(w)
        scale = max(scale, abs(alpha[k]), b)
        beta[k] = b
        if b < 1e-13 * scale:
            k += 1
            T = np.diag(alpha[:k]) + np.diag(beta[: k - 1], 1) + np.diag(beta[: k - 1], -1)
            return V[:k], T, 0.0
        if k + 1 < m:
            V[k + 1] = w / b
    T = np.diag(alpha) + np.diag(beta[:-1], 1) + np.diag(beta[:-1], -1)
    return V, T, beta[-1]


def _advance(H, psi: np.ndarray, span: float, tol: float, m: int) -> np.ndarray:
    remaining = span
    tau = span
    floor = 1e-12 * max(span, 1.0)
    while remaining > 0:
        V, T, beta = _lanczos(H, psi, m)
        evals, evecs = np.linalg.eigh(T)
        while True:
            tau = min(tau, remaining)
            c = evecs @ (np.exp(-1j * evals * tau) * evecs[0])
            err = beta * abs(c[-1])
            if err <= tol * tau:
                break
            tau *= 0.5
            if tau < floor:
                raise KrylovError(
                    f"Krylov step shrank below {floor:.1e} (error estimate {err:.2e}, tol {tol:.1e})"
                )
        psi = c @ V
        remaining -= tau
        if remaining < floor:
            remaining = 0.0
        if err < 0.1 * tol * tau:
            tau *= 2.0
    return psi


def evolve_state(psi0: np.ndarray, H, t_grid: Sequence[float], tol: float = 1e-12, krylov_dim: int = 20) -> np.ndarray:
    """``exp(-iHt)|psi0>`` at every grid time, shape ``(len(t_grid), dim)``.

    Lanczos propagation with full reorthogonalisation. Each substep is accepted
    when the a-posteriori error estimate is below ``tol`` per unit time;
    otherwise the step is halved, and a :class:`KrylovError` is raised if it
    collapses.
    """
    psi = np.asarray(psi0, dtype=complex).copy()
    norm = np.linalg.norm(psi)
    if abs(norm - 1) > 1e-10:
        raise ValueError(f"initial state must have unit norm, got {norm}")
    t_grid = np.asarray(t_grid, dtype=float).ravel()
    if t_grid.size and (t_grid[0] < 0 or np.any(np.diff(t_grid) < 0)):
        raise ValueError("time grid must be non-negative and non-decreasing")
    out = np.empty((t_grid.size, psi.size), dtype=complex)
    t_prev = 0.0
    for n, t in enumerate(t_grid):
        if t > t_prev:
            psi = _advance(H, psi, t - t_prev, tol, krylov_dim)
            drift = abs(np.linalg.norm(psi) - 1)
            if drift > 1e-10 * max(t, 1.0):
                raise KrylovError(f"norm drift {drift:.2e} at t={t}")
        out[n] = psi
        t_prev = t
    return out


def _pair_density(psi: np.ndarray, i: int, j: int) -> np.ndarray:
    n = int(np.log2(psi.size))
    if 1 << n != psi.size:
        raise ValueError("state length must be a power of two")
    if i == j:
        raise ValueError("pair expectations need i != j")
    T = np.moveaxis(psi.reshape((2,) * n), [i, j], [0, 1]).reshape(4, -1)
    return T @ T.conj().T


def quantum_pair_expectations(psi: np.ndarray, i: int, j: int) -> PairExpectations:
    """All ``<S^mu_i>``, ``<S^mu_j>`` and ``<S^mu_i S^nu_j>`` from the two-site reduced density matrix."""
    rho = _pair_density(np.asarray(psi, dtype=complex), i, j)
    eye = np.eye(2)
    mean_i = np.array([np.trace(rho @ np.kron(o, eye)).real for o in SPIN_OPS])
    mean_j = np.array([np.trace(rho @ np.kron(eye, o)).real for o in SPIN_OPS])
    second = np.array([[np.trace(rho @ np.kron(a, b)).real for b in SPIN_OPS] for a in SPIN_OPS])
    return PairExpectations(mean_i, mean_j, second)


def quantum_pm_expectations(psi: np.ndarray, j: int, k: int) -> PMCorrelationSet:
    """Raising-operator expectations of a state, lowering ones computed independently."""
    rho = _pair_density(np.asarray(psi, dtype=complex), j, k)
    eye = np.eye(2)
    sm = _SP.conj().T

    def ev(a, b):
        return np.trace(rho @ np.kron(a, b))

    return PMCorrelationSet(
        sp_j=ev(_SP, eye), sp_k=ev(eye, _SP), sz_j=ev(_SZ, eye).real, sz_k=ev(eye, _SZ).real,
        pp=ev(_SP, _SP), pm=ev(_SP, sm), pz=ev(_SP, _SZ), zp=ev(_SZ, _SP), zz=ev(_SZ, _SZ),
        sm_j=ev(sm, eye), sm_k=ev(eye, sm), mm=ev(sm, sm), mp=ev(sm, _SP), mz=ev(sm, _SZ), zm=ev(_SZ, sm),
    )


def statevector_expectations(spec: HamiltonianSpec, theta: float, t_grid, pairs, pair_sum: str = "unordered", tol: float = 1e-12):
    """Evolve the tilted product state and return ``{(i, j): [PairExpectations per time]}``."""
    H = build_hamiltonian(spec, pair_sum)
    states = evolve_state(product_state(theta, spec.n_sites), H, t_grid, tol=tol)
    return {(i, j): [quantum_pair_expectations(psi, i, j) for psi in states] for i, j in pairs}
