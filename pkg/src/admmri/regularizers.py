"""Temporal sparsifying transforms and the l1 proximal operator.

Both transforms act along the last (time) axis of an ``(n_v, n_h, n_t)`` array.
"""
from __future__ import annotations

import enum

import numpy as np
import scipy.fft as sfft
from scipy.linalg import solveh_banded


class RegularizerKind(enum.Enum):
    TemporalDFT = "tdft"
    TemporalTV = "ttv"


def soft_threshold(a, tau: float):
    """Complex soft thresholding: shrink magnitudes by ``tau``, keep phase."""
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    a = np.asarray(a)
    if tau == 0:
        return a.copy()
    mag = np.abs(a)
    scale = np.maximum(mag - tau, 0.0) / np.where(mag > tau, mag, 1.0)
    return a * scale


def temporal_diff(x: np.ndarray) -> np.ndarray:
    """Forward differences x_{t+1} - x_t; drops one frame."""
    if x.shape[-1] < 2:
        raise ValueError("temporal differences need at least 2 frames")
    return np.diff(x, axis=-1)


def temporal_diff_adjoint(v: np.ndarray, n_t: int | None = None) -> np.ndarray:
    if n_t is not None and v.shape[-1] != n_t - 1:
        raise ValueError(f"expected {n_t - 1} difference frames, got {v.shape[-1]}")
    out = np.zeros(v.shape[:-1] + (v.shape[-1] + 1,), dtype=np.result_type(v, float))
    out[..., :-1] -= v
    out[..., 1:] += v
    return out


def tv_normal_bands(c: float, n_t: int) -> np.ndarray:
    """Upper banded storage of c I + D'D for ``solveh_banded``."""
    ab = np.zeros((2, n_t))
    ab[0, 1:] = -1.0
    ab[1, :] = c + 2.0
    ab[1, 0] = ab[1, -1] = c + 1.0
    return ab


def solve_tv_normal(c: float, b: np.ndarray) -> np.ndarray:
    """Solve (c I + D'D) z = b for every pixel time series.

    D'D is tridiagonal with diagonal [1, 2, ..., 2, 1] and off-diagonals -1.
    """
    if not c > 0:
        raise ValueError(f"c must be positive, D'D is singular; got {c}")
    n_t = b.shape[-1]
    if n_t == 1:
        return b / c
    rhs = np.moveaxis(b, -1, 0).reshape(n_t, -1)
    z = solveh_banded(tv_normal_bands(c, n_t), rhs, check_finite=False)
    return np.moveaxis(z.reshape((n_t,) + b.shape[:-1]), 0, -1)


def temporal_dft_forward(x: np.ndarray) -> np.ndarray:
    return sfft.fft(x, axis=-1, norm="ortho")


def temporal_dft_adjoint(w: np.ndarray) -> np.ndarray:
    return sfft.ifft(w, axis=-1, norm="ortho")


class TemporalDFT:
    """Unitary DFT along time: an orthonormal (hence tight) frame."""

    kind = RegularizerKind.TemporalDFT
    tight_frame = True
    orthonormal = True

    def forward(self, x):
        return temporal_dft_forward(x)

    def adjoint(self, w):
        return temporal_dft_adjoint(w)

    def normal_solve(self, c: float, b):
        # R'R = I
        if not c > 0:
            raise ValueError(f"c must be positive, got {c}")
        return b / (c + 1.0)

    def l1(self, x) -> float:
        return float(np.abs(self.forward(x)).sum())


class TemporalTV:
    """First differences along time, no wraparound."""

    kind = RegularizerKind.TemporalTV
    tight_frame = False
    orthonormal = False

    def forward(self, x):
        return temporal_diff(x)

    def adjoint(self, v):
        return temporal_diff_adjoint(v)

    def normal_solve(self, c: float, b):
        return solve_tv_normal(c, b)

    def l1(self, x) -> float:
        return float(np.abs(self.forward(x)).sum())


def get_regularizer(kind):
    """Map a :class:`RegularizerKind`, its value string, or an instance to an operator."""
    if hasattr(kind, "forward") and hasattr(kind, "adjoint"):
        return kind
    kind = RegularizerKind(kind)
    return TemporalDFT() if kind is RegularizerKind.TemporalDFT else TemporalTV()
