"""Named problem presets and the phantom -> mask -> acquisition -> cache pipeline."""
from __future__ import annotations

from dataclasses import dataclass

from .metrics import Problem, timed
from .model import Dims, TransferOperator
from .phantom import (MaskSpec, PhantomSpec, generate_mask, generate_phantom,
                      generate_sensitivities, simulate_acquisition)
from .spectral import precompute_cache


@dataclass(frozen=True)
class Preset:
    dims: Dims
    accel: float
    noise_sigma: float
    motion_period: int
    n_center: int = 4
    seed: int = 0


PRESETS = {
    "desk": Preset(Dims(32, 32, 8, 4), accel=4, noise_sigma=0.01, motion_period=8),
    "paper-scale": Preset(Dims(128, 128, 22, 8), accel=8, noise_sigma=0.01, motion_period=22),
}


def build_problem(preset="desk", **overrides) -> Problem:
    """Simulate a dataset and precompute the spectral cache for it.

    ``overrides`` replace :class:`Preset` fields, e.g. ``accel=8`` or ``seed=3``.
    """
    p = PRESETS[preset] if isinstance(preset, str) else preset
    if overrides:
        p = Preset(**{**p.__dict__, **overrides})
    d = p.dims
    x = generate_phantom(PhantomSpec(d, p.motion_period, p.noise_sigma, p.seed))
    sens = generate_sensitivities(d, p.seed + 1)
    mask = generate_mask(MaskSpec(d.n_v, d.n_t, p.accel, p.n_center, p.seed + 2))
    y = simulate_acquisition(x, sens, mask, p.noise_sigma, p.seed + 3)
    op = TransferOperator(sens, mask)
    blocks, blocks_ms = timed(op.build_normal_blocks)
    cache, eig_ms = timed(precompute_cache, blocks)
    return Problem(y=y, op=op, blocks=blocks, cache=cache, reference=x,
                   precompute_ms=blocks_ms + eig_ms, blocks_ms=blocks_ms,
                   meta={"preset": p})
