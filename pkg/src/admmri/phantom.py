"""Synthetic cine phantom, coil maps, variable-density line masks and acquisition.

All randomness comes from Philox generators keyed by ``SeedSequence`` children,
one per frame or per (frame, coil), so outputs depend only on shapes and seeds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Dims, KSpaceData, TransferOperator, check_shape


@dataclass(frozen=True)
class PhantomSpec:
    dims: Dims
    motion_period: int = 8
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.motion_period < 1:
            raise ValueError(f"motion_period must be >= 1, got {self.motion_period}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


@dataclass(frozen=True)
class MaskSpec:
    n_v: int
    n_t: int
    accel: float
    n_center: int = 4
    seed: int = 0

    @property
    def kept_per_frame(self) -> int:
        return math.ceil(self.n_v / self.accel)

    def __post_init__(self):
        if self.n_v < 1 or self.n_t < 1:
            raise ValueError("n_v and n_t must be positive")
        if not self.accel > 1:
            raise ValueError(f"acceleration must be > 1, got {self.accel}")
        if self.n_center < 0:
            raise ValueError("n_center must be >= 0")
        if self.kept_per_frame > self.n_v:
            raise ValueError(f"cannot keep {self.kept_per_frame} of {self.n_v} lines")
        if self.kept_per_frame < self.n_center:
            raise ValueError(
                f"{self.n_center} center lines exceed the {self.kept_per_frame} lines kept per frame")


def _rng(seed_seq: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed_seq))


def _grid(n_v: int, n_h: int):
    # normalized coordinates in [-1, 1), v vertical, h horizontal
    yy = (np.arange(n_v) - n_v / 2) / (n_v / 2)
    xx = (np.arange(n_h) - n_h / 2) / (n_h / 2)
    return np.meshgrid(yy, xx, indexing="ij")


def _ellipse(yy, xx, cy, cx, ry, rx, edge=0.04):
    r = np.sqrt(((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2)
    # smooth edge keeps the image piecewise smooth rather than binary
    return 0.5 * (1.0 - np.tanh((r - 1.0) / edge))


def generate_phantom(spec: PhantomSpec) -> np.ndarray:
    """Static torso, a pulsating ellipse and a small blob on a periodic path.

    Motion depends only on ``t mod motion_period``, so frames repeat exactly.
    The result is scaled to a peak magnitude of 1.
    """
    d = spec.dims
    rng = _rng(np.random.SeedSequence(spec.seed))
    jit = rng.uniform(-1.0, 1.0, size=8)
    yy, xx = _grid(d.n_v, d.n_h)

    torso = 0.6 * _ellipse(yy, xx, 0.02 * jit[0], 0.02 * jit[1], 0.85, 0.7)
    organ = 0.25 * _ellipse(yy, xx, -0.35 + 0.03 * jit[2], -0.3, 0.22, 0.18)
    phase = np.exp(1j * np.pi * (0.3 + 0.05 * jit[3]) * (0.6 * yy + 0.4 * xx))

    heart_c = (0.1 + 0.03 * jit[4], 0.15 + 0.03 * jit[5])
    amp = 0.15 + 0.03 * jit[6]
    orbit = 0.1 + 0.02 * jit[7]

    frames = []
    for t in range(d.n_t):
        theta = 2.0 * np.pi * (t % spec.motion_period) / spec.motion_period
        scale = 1.0 + amp * np.sin(theta)
        heart = 0.4 * _ellipse(yy, xx, heart_c[0], heart_c[1], 0.22 * scale, 0.2 * scale)
        blob = 0.3 * _ellipse(yy, xx, -0.1 + orbit * np.sin(theta), -0.3 + orbit * np.cos(theta),
                              0.08, 0.08)
        frames.append((torso + organ + heart + blob) * phase)
    x = np.stack(frames, axis=-1)
    return x / np.abs(x).max()


def generate_sensitivities(dims: Dims, seed: int = 0) -> np.ndarray:
    """Gaussian coil profiles placed evenly on a ring, normalized so sum_c |s_c|^2 = 1."""
    rng = _rng(np.random.SeedSequence(seed))
    yy, xx = _grid(dims.n_v, dims.n_h)
    n_c = dims.n_c
    width = rng.uniform(0.9, 1.1, size=n_c)
    twist = rng.uniform(-1.0, 1.0, size=(n_c, 2))
    maps = np.empty(dims.sens_shape, dtype=complex)
    for c in range(n_c):
        ang = 2.0 * np.pi * c / n_c
        cy, cx = 1.2 * np.sin(ang), 1.2 * np.cos(ang)
        mag = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * width[c] ** 2))
        ph = ang + 0.5 * (twist[c, 0] * yy + twist[c, 1] * xx)
        maps[:, :, c] = mag * np.exp(1j * ph)
    return maps / np.sqrt(np.sum(np.abs(maps) ** 2, axis=-1, keepdims=True))


def center_lines(n_v: int, n_center: int) -> np.ndarray:
    """Indices of the ``n_center`` lines closest to DC under circular wrap."""
    v = np.arange(n_v)
    dist = np.minimum(v, n_v - v)
    return np.lexsort((v, dist))[:n_center]


def generate_mask(spec: MaskSpec) -> np.ndarray:
    """Per-frame variable-density random line selection with a fixed center band.

    The extra lines are a weighted sample without replacement with weights
    ``1 / (1 + |f|)``, drawn by the Gumbel top-k construction (equivalent to
    sequential draws renormalized over the remaining lines).
    """
    n_v, n_t = spec.n_v, spec.n_t
    v = np.arange(n_v)
    logw = -np.log1p(np.minimum(v, n_v - v))
    centre = center_lines(n_v, spec.n_center)
    extra = spec.kept_per_frame - spec.n_center
    mask = np.zeros((n_v, n_t), dtype=bool)
    for t, child in enumerate(np.random.SeedSequence(spec.seed).spawn(n_t)):
        mask[centre, t] = True
        if extra:
            keys = logw + _rng(child).gumbel(size=n_v)
            keys[centre] = -np.inf
            mask[np.argsort(-keys, kind="stable")[:extra], t] = True
    return mask


def simulate_acquisition(x: np.ndarray, sens: np.ndarray, mask: np.ndarray,
                         noise_sigma: float = 0.0, seed: int = 0) -> KSpaceData:
    """Noisy zero-filled k-space: H x plus complex Gaussian noise on acquired lines."""
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    op = TransferOperator(sens, mask)
    check_shape(x, op.dims.image_shape, "image")
    y = op.forward(x)
    if noise_sigma == 0:
        return y
    n_v, n_h, n_t, n_c = y.data.shape
    std = noise_sigma / math.sqrt(2.0)
    children = np.random.SeedSequence(seed).spawn(n_t * n_c)
    for t in range(n_t):
        rows = np.flatnonzero(mask[:, t])
        for c in range(n_c):
            g = _rng(children[t * n_c + c])
            noise = g.standard_normal((rows.size, n_h, 2)) * std
            y.data[rows, :, t, c] += noise[..., 0] + 1j * noise[..., 1]
    return y
