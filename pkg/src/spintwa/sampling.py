"""Initial phase-space ensembles for the continuous (TWA) and discrete (DTWA) schemes.

Samples are drawn in fixed-size blocks. Block ``b`` of a run seeded with ``seed``
always uses the counter-based stream ``Philox(SeedSequence(seed, spawn_key=(b,)))``,
so an ensemble is bit-identical whatever the number of worker threads.

DTWA ensembles at tilts other than 0 or pi/2 carry signed weights. The unbiased
estimator of ``<O>`` is ``(alpha**N / n) * sum_s sign_s * O_s``; the constant
``alpha**N`` is stored on the ensemble as ``weight_scale``.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

BLOCK_SIZE = 4096

# The eight discrete phase points of a single spin-1/2.
DTWA_POINTS = 0.5 * np.array(
    [
        [1, 1, 1],
        [-1, -1, 1],
        [1, -1, -1],
        [-1, 1, -1],
        [-1, -1, -1],
        [1, 1, -1],
        [-1, 1, 1],
        [1, -1, 1],
    ],
    dtype=float,
)

SCHEMES = ("twa", "dtwa")
_SCHEME_CODES = {"twa": 0, "dtwa": 1}
_MAGIC = b"SPWE"
_HEADER = struct.Struct("<4sBdIQQ")


def _check_theta(theta: float) -> None:
    if not -1e-12 <= theta <= np.pi / 2 + 1e-12:
        raise ValueError(f"theta must lie in [0, pi/2], got {theta}")


def dtwa_raw_weights(theta: float) -> np.ndarray:
    """Discrete Wigner weights ``1/4 + alpha.n/2`` of the eight points (sum to 2)."""
    n = np.array([np.sin(theta), 0.0, np.cos(theta)])
    return 0.25 + DTWA_POINTS @ n / 2


def dtwa_single_spin_weights(theta: float) -> tuple[np.ndarray, np.ndarray]:
    """Sampling probabilities ``|w|/sum|w|`` and signs of the eight phase points."""
    _check_theta(theta)
    w = dtwa_raw_weights(theta)
    # exact zeros at theta in {0, pi/2} come out as ~1e-17
    w = np.where(np.abs(w) < 1e-14, 0.0, w)
    a = np.abs(w)
    return a / a.sum(), np.where(w < 0, -1, 1).astype(np.int8)


def sign_problem_factor(theta: float) -> float:
    """Per-spin absolute weight sum ``alpha = sum|W| / sum W`` (1 iff no negative weights)."""
    _check_theta(theta)
    w = dtwa_raw_weights(theta)
    w = np.where(np.abs(w) < 1e-14, 0.0, w)
    return float(np.abs(w).sum() / w.sum())


@dataclass(frozen=True)
class PhasePoint:
    spins: np.ndarray
    sign: int


@dataclass(eq=False)
class PhaseEnsemble:
    """Batch of classical spin configurations.

    ``spins`` has shape ``(n_samples, N, 3)``; ``signs`` is ``+-1`` per sample.
    """

    scheme: str
    theta: float
    n_spins: int
    seed: int
    spins: np.ndarray
    signs: np.ndarray
    weight_scale: float = 1.0

    @property
    def n_samples(self) -> int:
        return self.spins.shape[0]

    @property
    def weights(self) -> np.ndarray:
        """Per-sample estimator weights; ``mean(weights * O)`` is unbiased for ``<O>``."""
        return self.signs.astype(float) * self.weight_scale

    def __len__(self) -> int:
        return self.n_samples

    def __getitem__(self, k: int) -> PhasePoint:
        return PhasePoint(self.spins[k], int(self.signs[k]))

    def signed_mean(self, values: np.ndarray) -> np.ndarray:
        """Estimator ``sum_s w_s values_s / n`` over the leading (sample) axis."""
        w = self.weights.reshape((-1,) + (1,) * (np.ndim(values) - 1))
        return (w * values).sum(axis=0) / self.n_samples


def _blocks(n_samples: int):
    for b, start in enumerate(range(0, n_samples, BLOCK_SIZE)):
        yield b, start, min(start + BLOCK_SIZE, n_samples)


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def _fill(n_samples: int, n_spins: int, seed: int, threads: int, draw) -> tuple[np.ndarray, np.ndarray]:
    spins = np.empty((n_samples, n_spins, 3))
    signs = np.ones(n_samples, dtype=np.int8)

    def work(block):
        b, lo, hi = block
        spins[lo:hi], signs[lo:hi] = draw(block_rng(seed, b), hi - lo)

    blocks = list(_blocks(n_samples))
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, blocks))
    else:
        for block in blocks:
            work(block)
    return spins, signs


def sample_dtwa(theta: float, n_spins: int, n_samples: int, seed: int, threads: int = 1) -> PhaseEnsemble:
    """Draw every spin independently from ``|W|/sum|W|`` over the eight points.

    The sample sign is the product of the per-spin signs.
    """
    if n_samples < 0:
        raise ValueError("n_samples must be >= 0")
    probs, point_signs = dtwa_single_spin_weights(theta)

    def draw(rng, m):
        idx = rng.choice(8, size=(m, n_spins), p=probs)
        return DTWA_POINTS[idx], np.prod(point_signs[idx], axis=1, dtype=np.int8)

    spins, signs = _fill(n_samples, n_spins, seed, threads, draw)
    return PhaseEnsemble(
        "dtwa", float(theta), n_spins, int(seed), spins, signs,
        weight_scale=sign_problem_factor(theta) ** n_spins,
    )


def sample_twa(theta: float, n_spins: int, n_samples: int, seed: int, threads: int = 1) -> PhaseEnsemble:
    """Gaussian transverse fluctuations about ``+z`` rotated by ``theta`` about y.

    ``S = (sin t + X cos t, Y, cos t - X sin t) / 2`` with ``X, Y ~ N(0, 1)``.
    """
    if n_samples < 0:
        raise ValueError("n_samples must be >= 0")
    _check_theta(theta)
    s, c = np.sin(theta), np.cos(theta)

    def draw(rng, m):
        X, Y = rng.standard_normal((2, m, n_spins))
        S = 0.5 * np.stack([s + X * c, Y, c - X * s], axis=-1)
        return S, np.ones(m, dtype=np.int8)

    spins, signs = _fill(n_samples, n_spins, seed, threads, draw)
    return PhaseEnsemble("twa", float(theta), n_spins, int(seed), spins, signs)


def sample(scheme: str, theta: float, n_spins: int, n_samples: int, seed: int, threads: int = 1) -> PhaseEnsemble:
    if scheme == "dtwa":
        return sample_dtwa(theta, n_spins, n_samples, seed, threads)
    if scheme == "twa":
        return sample_twa(theta, n_spins, n_samples, seed, threads)
    raise ValueError(f"unknown scheme {scheme!r}")


def save_ensemble(ensemble: PhaseEnsemble, path) -> None:
    """Little-endian dump: header, then ``3N`` spin components and the sign per sample."""
    path = Path(path)
    header = _HEADER.pack(
        _MAGIC, _SCHEME_CODES[ensemble.scheme], ensemble.theta,
        ensemble.n_spins, ensemble.seed, ensemble.n_samples,
    )
    body = np.concatenate(
        [ensemble.spins.reshape(ensemble.n_samples, -1), ensemble.signs[:, None].astype(float)], axis=1
    )
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(body.astype("<f8").tobytes())
    except OSError as exc:
        raise OSError(f"cannot write ensemble to {path}: {exc}") from exc


def load_ensemble(path) -> PhaseEnsemble:
    raw = Path(path).read_bytes()
    magic, code, theta, n_spins, seed, n_samples = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path} is not an ensemble dump")
    scheme = SCHEMES[code]
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n_samples, 3 * n_spins + 1)
    spins = body[:, :-1].reshape(n_samples, n_spins, 3).copy()
    signs = body[:, -1].astype(np.int8)
    scale = sign_problem_factor(theta) ** n_spins if scheme == "dtwa" else 1.0
    return PhaseEnsemble(scheme, theta, n_spins, seed, spins, signs, weight_scale=scale)
