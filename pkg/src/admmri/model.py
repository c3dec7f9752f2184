"""Cartesian dynamic parallel-MRI forward model.

Arrays use these shapes throughout the package:

* image sequence ``x``: ``(n_v, n_h, n_t)`` complex
* coil sensitivities ``s``: ``(n_v, n_h, n_c)`` complex
* sampling mask: ``(n_v, n_t)`` bool, ``True`` where line ``v`` is acquired at frame ``t``
* k-space ``y``: ``(n_v, n_h, n_t, n_c)`` complex, zero-filled at unacquired lines

Both 1-D Fourier transforms are unitary with DC at index 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from . import parallel


@dataclass(frozen=True)
class Dims:
    n_v: int
    n_h: int
    n_t: int
    n_c: int = 1

    def __post_init__(self):
        for name in ("n_v", "n_h", "n_t", "n_c"):
            val = getattr(self, name)
            if int(val) != val or val < 1:
                raise ValueError(f"{name} must be a positive integer, got {val!r}")

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return (self.n_v, self.n_h, self.n_t)

    @property
    def kspace_shape(self) -> tuple[int, int, int, int]:
        return (self.n_v, self.n_h, self.n_t, self.n_c)

    @property
    def sens_shape(self) -> tuple[int, int, int]:
        return (self.n_v, self.n_h, self.n_c)

    @property
    def mask_shape(self) -> tuple[int, int]:
        return (self.n_v, self.n_t)


_AXES = ("n_v", "n_h", "n_t", "n_c")


def check_shape(arr: np.ndarray, expected: tuple, what: str, axes=_AXES) -> None:
    """Raise ``ValueError`` naming the first axis where ``arr`` disagrees."""
    if arr.ndim != len(expected):
        raise ValueError(f"{what}: expected {len(expected)} dimensions, got {arr.ndim}")
    for name, got, want in zip(axes, arr.shape, expected):
        if got != want:
            raise ValueError(f"{what}: axis {name} has length {got}, expected {want}")


def check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains NaN or Inf entries")


def check_mask(mask: np.ndarray) -> None:
    if mask.dtype != bool:
        raise TypeError(f"mask must be boolean, got {mask.dtype}")
    empty = np.flatnonzero(~mask.any(axis=0))
    if empty.size:
        raise ValueError(f"mask keeps no lines in frame t={int(empty[0])}")


@dataclass
class KSpaceData:
    """Zero-filled k-space samples together with the mask that produced them."""

    data: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.data.ndim != 4:
            raise ValueError(f"k-space must be 4-D (n_v, n_h, n_t, n_c), got {self.data.ndim}-D")
        n_v, _, n_t, _ = self.data.shape
        check_shape(self.mask, (n_v, n_t), "mask", axes=("n_v", "n_t"))

    @property
    def dims(self) -> Dims:
        return Dims(*self.data.shape)

    def unsampled_violations(self) -> list[tuple[int, int]]:
        """``(v, t)`` pairs that are unsampled but hold nonzero data."""
        nonzero = np.any(self.data != 0, axis=(1, 3))
        bad = np.argwhere(nonzero & ~self.mask)
        return [(int(v), int(t)) for v, t in bad]

    def validate(self) -> None:
        check_finite(self.data, "k-space")
        bad = self.unsampled_violations()
        if bad:
            v, t = bad[0]
            raise ValueError(f"k-space has nonzero samples at unsampled line (v={v}, t={t})")


@dataclass(frozen=True)
class NormalBlocks:
    """Per-(column, frame) blocks of H'H, stored as ``(n_h, n_t, n_v, n_v)``."""

    dims: Dims
    blocks: np.ndarray


class TransferOperator:
    """Encoding operator H: coil weighting, vertical FFT, line mask, horizontal FFT."""

    def __init__(self, sens: np.ndarray, mask: np.ndarray):
        sens = np.array(sens, dtype=complex)
        mask = np.array(mask, dtype=bool)
        if sens.ndim != 3:
            raise ValueError(f"sensitivities must be 3-D (n_v, n_h, n_c), got {sens.ndim}-D")
        if mask.ndim != 2:
            raise ValueError(f"mask must be 2-D (n_v, n_t), got {mask.ndim}-D")
        n_v, n_h, n_c = sens.shape
        if mask.shape[0] != n_v:
            raise ValueError(f"mask: axis n_v has length {mask.shape[0]}, expected {n_v}")
        check_finite(sens, "sensitivities")
        energy = np.sum(np.abs(sens) ** 2, axis=-1)
        if np.any(energy <= 0):
            v, h = np.argwhere(energy <= 0)[0]
            raise ValueError(f"sensitivities are zero for every coil at pixel (v={v}, h={h})")
        check_mask(mask)
        sens.flags.writeable = False
        mask.flags.writeable = False
        self._sens = sens
        self._mask = mask
        self._rows = [np.flatnonzero(mask[:, t]) for t in range(mask.shape[1])]
        self.dims = Dims(n_v, n_h, mask.shape[1], n_c)

    @property
    def sens(self) -> np.ndarray:
        return self._sens

    @property
    def mask(self) -> np.ndarray:
        return self._mask

    def forward(self, x: np.ndarray) -> KSpaceData:
        """y = F_h M F_v (s_c * x_t) for every frame and coil."""
        x = np.asarray(x)
        check_shape(x, self.dims.image_shape, "image")
        out = np.zeros(self.dims.kspace_shape, dtype=complex)
        sens, rows = self._sens, self._rows

        def work(sl):
            for t in range(sl.start, sl.stop):
                k = sfft.fft(x[:, :, t, None] * sens, axis=0, norm="ortho")[rows[t]]
                out[rows[t], :, t, :] = sfft.fft(k, axis=1, norm="ortho")

        parallel.run_chunks(work, self.dims.n_t)
        return KSpaceData(out, self._mask.copy())

    def adjoint(self, y) -> np.ndarray:
        """x_t = sum_c conj(s_c) * F_v' M F_h' y_{t,c}."""
        data = y.data if isinstance(y, KSpaceData) else np.asarray(y)
        check_shape(data, self.dims.kspace_shape, "k-space")
        out = np.empty(self.dims.image_shape, dtype=complex)
        sens_c, rows = self._sens.conj(), self._rows
        n_v, n_h, _, n_c = self.dims.kspace_shape

        def work(sl):
            k = np.zeros((n_v, n_h, n_c), dtype=complex)
            for t in range(sl.start, sl.stop):
                k[:] = 0
                k[rows[t]] = sfft.ifft(data[rows[t], :, t, :], axis=1, norm="ortho")
                coil = sfft.ifft(k, axis=0, norm="ortho")
                out[:, :, t] = np.sum(coil * sens_c, axis=-1)

        parallel.run_chunks(work, self.dims.n_t)
        return out

    def normal(self, x: np.ndarray) -> np.ndarray:
        return self.adjoint(self.forward(x))

    def build_normal_blocks(self) -> NormalBlocks:
        """Assemble B_{i,t} = (F~'F~)_t * sum_c conj(s_c) s_c^T for each column i and frame t.

        F~'F~ = F_v' diag(m_t) F_v is circulant with first column ifft(m_t).
        """
        n_v, n_h, n_t, _ = self.dims.kspace_shape
        kernels = np.fft.ifft(self._mask.astype(float), axis=0)  # (n_v, n_t)
        idx = (np.arange(n_v)[:, None] - np.arange(n_v)[None, :]) % n_v
        sampling = np.ascontiguousarray(kernels[idx].transpose(2, 0, 1))  # (n_t, n_v, n_v)
        s = np.ascontiguousarray(self._sens.transpose(1, 0, 2))  # (n_h, n_v, n_c)
        blocks = np.empty((n_h, n_t, n_v, n_v), dtype=complex)

        def work(sl):
            coil = np.einsum("hjc,hkc->hjk", s[sl].conj(), s[sl])
            b = coil[:, None, :, :] * sampling[None, :, :, :]
            blocks[sl] = 0.5 * (b + b.conj().swapaxes(-1, -2))

        parallel.run_chunks(work, n_h)
        blocks.flags.writeable = False
        return NormalBlocks(self.dims, blocks)


def apply_H(op: TransferOperator, x: np.ndarray) -> KSpaceData:
    return op.forward(x)


def apply_H_adjoint(op: TransferOperator, y) -> np.ndarray:
    return op.adjoint(y)


def build_normal_blocks(op: TransferOperator) -> NormalBlocks:
    return op.build_normal_blocks()
