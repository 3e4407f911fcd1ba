"""Spin-pair correlation dynamics of lattice spin-1/2 models.

Exact quantum evolution, the continuous truncated Wigner approximation (TWA)
and its discrete eight-point variant (DTWA), with tools to compare the three
through correlation-matrix eigenanalysis and isosurface geometry.
"""

__version__ = "0.1.0"
