"""Lattices, coupling matrices, Hamiltonian specifications and product states.

Conventions used throughout the package:

* ``H = -sum_i h . S_i - sum_{i<j} sum_mu J^mu_ij S^mu_i S^mu_j``; every
  unordered pair enters once, so the classical and Heisenberg equations of
  motion read ``dS_i/dt = S_i x (h + B_i)`` with ``B^mu_i = sum_j J^mu_ij S^mu_j``.
* Energies are in units of ``J`` and times are the dimensionless ``tJ``.
* The initial product state tilts every spin by ``theta`` from ``+z`` towards
  ``+x`` so the Bloch vector is ``n = (sin theta, 0, cos theta)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

AXES = ("x", "y", "z")

GEOMETRIES = ("chain", "square")
COUPLING_RULES = ("nearest_neighbor", "power_law", "infinite_range")
PRESETS = ("ising", "transverse_ising", "xx")


class ModelError(ValueError):
    """Invalid lattice, coupling rule or preset."""


@dataclass(frozen=True)
class LatticeSpec:
    """Periodic chain (``extent = N``) or square lattice (``extent = L``, ``N = L*L``)."""

    geometry: str = "chain"
    extent: int = 11
    coupling_rule: str = "nearest_neighbor"
    exponent: float = 3.0
    J: float = 1.0
    boundary: str = "periodic"

    def __post_init__(self):
        if self.geometry not in GEOMETRIES:
            raise ModelError(f"unknown geometry {self.geometry!r}; expected one of {GEOMETRIES}")
        if self.coupling_rule not in COUPLING_RULES:
            raise ModelError(
                f"unknown coupling rule {self.coupling_rule!r}; expected one of {COUPLING_RULES}"
            )
        if int(self.extent) != self.extent or self.extent < 2:
            raise ModelError(f"lattice extent must be an integer >= 2, got {self.extent}")
        if self.boundary != "periodic":
            raise ModelError("only periodic boundaries are supported")
        if self.coupling_rule == "power_law" and not self.exponent > 0:
            raise ModelError(f"power-law exponent must be > 0, got {self.exponent}")

    @property
    def n_sites(self) -> int:
        return self.extent if self.geometry == "chain" else self.extent**2

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.extent,) if self.geometry == "chain" else (self.extent, self.extent)

    def coordinates(self) -> np.ndarray:
        """Integer lattice coordinates, shape ``(N, dim)``; site index is row-major."""
        return np.array(list(itertools.product(*(range(n) for n in self.shape))), dtype=int)

    def displacement(self, i: int, j: int) -> np.ndarray:
        """Minimum-image displacement vector from site ``i`` to site ``j``."""
        coords = self.coordinates()
        d = coords[j] - coords[i]
        L = np.array(self.shape)
        return d - L * np.round(d / L).astype(int)

    def distance_matrix(self, metric: str = "euclidean") -> np.ndarray:
        """Pairwise minimum-image distances (``euclidean`` or ``manhattan``)."""
        coords = self.coordinates()
        L = np.array(self.shape)
        d = coords[None, :, :] - coords[:, None, :]
        d = np.abs(d - L * np.round(d / L))
        if metric == "euclidean":
            return np.sqrt((d**2).sum(axis=-1))
        if metric == "manhattan":
            return d.sum(axis=-1)
        raise ModelError(f"unknown metric {metric!r}")


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    """Per-axis couplings ``J^mu_ij`` (shape ``(3, N, N)``) and uniform field ``h``."""

    couplings: np.ndarray
    field: np.ndarray = field(default_factory=lambda: np.zeros(3))
    name: str = "custom"

    def __post_init__(self):
        J = np.array(self.couplings, dtype=float)
        if J.ndim != 3 or J.shape[0] != 3 or J.shape[1] != J.shape[2]:
            raise ModelError(f"couplings must have shape (3, N, N), got {J.shape}")
        if not np.array_equal(J, J.transpose(0, 2, 1)):
            raise ModelError("coupling matrices must be symmetric")
        if np.any(np.diagonal(J, axis1=1, axis2=2) != 0):
            raise ModelError("coupling matrices must have zero diagonal")
        h = np.array(self.field, dtype=float).reshape(3)
        J.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "couplings", J)
        object.__setattr__(self, "field", h)

    @property
    def n_sites(self) -> int:
        return self.couplings.shape[1]

    @property
    def Jx(self) -> np.ndarray:
        return self.couplings[0]

    @property
    def Jy(self) -> np.ndarray:
        return self.couplings[1]

    @property
    def Jz(self) -> np.ndarray:
        return self.couplings[2]

    def is_field_free_ising(self) -> bool:
        return not np.any(self.couplings[:2]) and not np.any(self.field)

    def pair_couplings(self, i: int, j: int) -> np.ndarray:
        """``(J^x_ij, J^y_ij, J^z_ij)``."""
        return self.couplings[:, i, j].copy()


def build_couplings(lattice: LatticeSpec) -> np.ndarray:
    """Symmetric, zero-diagonal coupling matrix for the lattice's coupling rule.

    Power-law couplings ``J / r^p`` use the minimum-image Euclidean distance.
    Infinite-range couplings are ``J`` for every pair, with no ``1/N`` factor.
    """
    n = lattice.n_sites
    if lattice.coupling_rule == "infinite_range":
        J = np.full((n, n), float(lattice.J))
    else:
        r = lattice.distance_matrix("euclidean")
        np.fill_diagonal(r, np.inf)
        if lattice.coupling_rule == "nearest_neighbor":
            J = np.where(np.isclose(r, 1.0), float(lattice.J), 0.0)
        else:
            J = lattice.J / r**lattice.exponent
    np.fill_diagonal(J, 0.0)
    return J


def model_preset(name: str, lattice: LatticeSpec, h: float | None = None) -> HamiltonianSpec:
    """Ising, transverse Ising (field ``h`` along x, default ``J/3``) or XX model."""
    J = build_couplings(lattice)
    zero = np.zeros_like(J)
    if name == "ising":
        couplings, fld = np.stack([zero, zero, J]), np.zeros(3)
    elif name == "transverse_ising":
        hx = lattice.J / 3.0 if h is None else float(h)
        couplings, fld = np.stack([zero, zero, J]), np.array([hx, 0.0, 0.0])
    elif name == "xx":
        couplings, fld = np.stack([J, J, zero]), np.zeros(3)
    else:
        raise ModelError(f"unknown model preset {name!r}; expected one of {PRESETS}")
    return HamiltonianSpec(couplings, fld, name=name)


@dataclass(frozen=True)
class InitialProductState:
    """Every spin along ``n = (sin theta, 0, cos theta)``."""

    theta: float

    @property
    def bloch(self) -> np.ndarray:
        return np.array([np.sin(self.theta), 0.0, np.cos(self.theta)])

    @property
    def spin(self) -> np.ndarray:
        return 0.5 * self.bloch

    def single_site_ket(self) -> np.ndarray:
        # half-angle amplitudes give Bloch vector (sin theta, 0, cos theta)
        return np.array([np.cos(self.theta / 2), np.sin(self.theta / 2)], dtype=complex)
