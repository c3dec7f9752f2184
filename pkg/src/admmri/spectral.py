"""Exact block-wise application of H'H and (mu I + H'H)^-1.

H'H splits into independent n_v x n_v Hermitian blocks, one per image column and
frame. Each block is eigendecomposed once; afterwards the regularized inverse
is two small matrix-vector products and a diagonal scaling per block.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import parallel
from .model import Dims, NormalBlocks, check_shape


@dataclass(frozen=True)
class SpectralCache:
    """Eigenvectors ``(n_h, n_t, n_v, n_v)`` and ascending eigenvalues ``(n_h, n_t, n_v)``."""

    dims: Dims
    vectors: np.ndarray
    values: np.ndarray

    @property
    def max_eigenvalue(self) -> float:
        return float(self.values.max())


def _to_blocks(x: np.ndarray, dims: Dims) -> np.ndarray:
    check_shape(x, dims.image_shape, "image")
    return np.ascontiguousarray(np.asarray(x, dtype=complex).transpose(1, 2, 0))


def _from_blocks(z: np.ndarray) -> np.ndarray:
    return z.transpose(2, 0, 1)


def precompute_cache(blocks: NormalBlocks) -> SpectralCache:
    b = blocks.blocks
    n_h, n_t, n_v, _ = b.shape
    vectors = np.empty_like(b)
    values = np.empty((n_h, n_t, n_v))

    def work(sl):
        try:
            e, u = np.linalg.eigh(b[sl])
        except np.linalg.LinAlgError:
            for i in range(sl.start, sl.stop):
                for t in range(n_t):
                    try:
                        np.linalg.eigh(b[i, t])
                    except np.linalg.LinAlgError as err:
                        raise np.linalg.LinAlgError(
                            f"eigendecomposition failed for block (i={i}, t={t})"
                        ) from err
            raise
        values[sl] = np.maximum(e, 0.0)
        vectors[sl] = u

    parallel.run_chunks(work, n_h)
    vectors.flags.writeable = False
    values.flags.writeable = False
    return SpectralCache(blocks.dims, vectors, values)


def apply_normal(blocks: NormalBlocks, x: np.ndarray) -> np.ndarray:
    """H'H x evaluated block by block."""
    xb = _to_blocks(x, blocks.dims)
    b = blocks.blocks
    out = np.empty_like(xb)

    def work(sl):
        out[sl] = (b[sl] @ xb[sl, ..., None])[..., 0]

    parallel.run_chunks(work, xb.shape[0])
    return _from_blocks(out)


def apply_regularized_inverse(cache: SpectralCache, mu: float, x: np.ndarray) -> np.ndarray:
    """Solve (mu I + H'H) z = x as U diag(1 / (e + mu)) U' x per block."""
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    xb = _to_blocks(x, cache.dims)
    u, e = cache.vectors, cache.values
    out = np.empty_like(xb)

    def work(sl):
        us = u[sl]
        # U'x as conj(x^H U): avoids materializing conj(U)
        coef = (xb[sl, ..., None, :].conj() @ us)[..., 0, :].conj()
        coef /= e[sl] + mu
        out[sl] = (us @ coef[..., None])[..., 0]

    parallel.run_chunks(work, xb.shape[0])
    return _from_blocks(out)


def max_eigenvalue(blocks: NormalBlocks) -> float:
    """Largest eigenvalue over all blocks, i.e. the spectral norm of H'H."""
    b = blocks.blocks
    top = np.empty(b.shape[:2])

    def work(sl):
        top[sl] = np.linalg.eigvalsh(b[sl])[..., -1]

    parallel.run_chunks(work, b.shape[0])
    return float(top.max())
