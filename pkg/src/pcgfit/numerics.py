"""Shared dense PSD linear algebra and seedable RNG substreams.

All matrices are dense float64. Pseudoinverses use a symmetric
eigendecomposition with the rank cutoff ``dim * eps * lambda_max``; the
eigenvalues below the cutoff are treated as exact zeros everywhere.

``RngStream`` wraps a master seed plus a spawn-key tuple so that workers
can be handed value-type substreams: a given (seed, key) always produces
the same draws, no matter how many streams exist or in what order they
are consumed.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import NotPSD, NotSymmetric

SYMMETRY_RTOL = 1e-10
PSD_RTOL = 1e-8


def _rank_cutoff(dim: int, lam_max: float) -> float:
    return dim * np.finfo(float).eps * max(lam_max, 0.0)


@dataclass(frozen=True)
class SpectralForm:
    """Eigendecomposition of a symmetric matrix with an explicit rank cut.

    ``eigenvalues`` are sorted descending and ``eigenvectors`` holds the
    matching eigenvectors as columns. Entries past ``rank`` are treated as
    exact zeros by every consumer.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    rank: int
    cutoff: float

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def nonzero_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues[: self.rank]

    def reconstruct(self) -> np.ndarray:
        o = self.eigenvectors
        return (o * self.eigenvalues) @ o.T

    def pinv_matrix(self) -> np.ndarray:
        inv = np.zeros_like(self.eigenvalues)
        inv[: self.rank] = 1.0 / self.eigenvalues[: self.rank]
        o = self.eigenvectors
        return (o * inv) @ o.T


def sym_eig(a: np.ndarray) -> SpectralForm:
    """Spectral form of a symmetric matrix, eigenvalues descending.

    Raises ``NotSymmetric`` when ``a`` deviates from its transpose by more
    than ``SYMMETRY_RTOL`` relative to its largest entry.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {a.shape}")
    scale = max(float(np.max(np.abs(a))), 1.0) if a.size else 1.0
    if a.size and float(np.max(np.abs(a - a.T))) > SYMMETRY_RTOL * scale:
        raise NotSymmetric("matrix is not symmetric within tolerance")
    sym = 0.5 * (a + a.T)
    lam, vec = np.linalg.eigh(sym)
    order = np.argsort(lam)[::-1]
    lam = lam[order]
    vec = vec[:, order]
    cutoff = _rank_cutoff(a.shape[0], float(lam[0]) if lam.size else 0.0)
    rank = int(np.sum(lam > cutoff))
    return SpectralForm(eigenvalues=lam, eigenvectors=vec, rank=rank, cutoff=cutoff)


def pinv(a: np.ndarray) -> np.ndarray:
    """Moore-Penrose inverse of a symmetric matrix via its spectral form."""
    return sym_eig(a).pinv_matrix()


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root; raises ``NotPSD`` on genuinely negative spectra."""
    form = sym_eig(a)
    lam = form.eigenvalues
    if lam.size and float(lam[-1]) < -PSD_RTOL * max(float(lam[0]), 0.0):
        raise NotPSD(f"smallest eigenvalue {lam[-1]:g} is negative")
    root = np.sqrt(np.clip(lam, 0.0, None))
    o = form.eigenvectors
    return (o * root) @ o.T


def quad_form(x: np.ndarray, a: np.ndarray) -> float:
    """Evaluate x' A x."""
    x = np.asarray(x, dtype=float)
    return float(x @ np.asarray(a, dtype=float) @ x)


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream addressed by (master seed, spawn key).

    Substreams are value types: ``stream.substream(i)`` is independent of
    every other index and of the order in which streams are realized, so
    parallel workers can consume them without coordination.
    """

    seed: int
    key: tuple[int, ...] = field(default=())

    def substream(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.key + (int(index),))

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        )

    def describe(self) -> str:
        if not self.key:
            return str(self.seed)
        return f"{self.seed}/" + ".".join(map(str, self.key))


def as_stream(rng: "RngStream | int | None", default_seed: int = 0) -> RngStream:
    """Coerce a seed or stream argument into an ``RngStream``."""
    if rng is None:
        return RngStream(default_seed)
    if isinstance(rng, RngStream):
        return rng
    return RngStream(int(rng))


def run_chunks(worker, n_chunks: int, threads: int = 1) -> list:
    """Run ``worker(chunk_index)`` for every chunk, results in index order.

    The chunk decomposition is fixed by the caller, so the aggregate is
    identical for any ``threads`` value.
    """
    if n_chunks <= 0:
        return []
    if threads <= 1 or n_chunks == 1:
        return [worker(i) for i in range(n_chunks)]
    with ThreadPoolExecutor(max_workers=min(threads, n_chunks)) as pool:
        return list(pool.map(worker, range(n_chunks)))
