"""Reconstruction solvers for the l1-regularized dynamic parallel-MRI problem.

* :func:`admm_synthesis` minimizes ``lam ||w||_1 + ||y - H psi' w||^2`` for a
  tight frame ``psi``, using the exact spectral inverse of ``mu I + H'H``.
* :func:`admm_analysis` minimizes ``lam ||R x||_1 + ||y - H x||^2`` with an extra
  split ``m = x`` so that data fidelity and regularization decouple.
* :func:`fista` and :func:`p1_split_bregman` are the baselines; the latter
  solves its x-subproblem with a fixed number of warm-started CG steps.

Every solver starts from the zero-filled adjoint ``H'y`` and records the
objective, the convergence ratio and the elapsed time per logged iteration.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .metrics import data_term
from .model import KSpaceData, NormalBlocks, TransferOperator, check_shape
from .regularizers import get_regularizer, soft_threshold
from .spectral import (SpectralCache, apply_normal, apply_regularized_inverse,
                       max_eigenvalue)


@dataclass
class SolverConfig:
    lam: float = 0.002
    mu: float = 0.06
    mu_ratio: float = 0.5
    cg_iters: int = 10
    max_iters: int = 200
    tol: float = 1e-3
    log_every: int = 1

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.mu_ratio > 0:
            raise ValueError(f"mu_ratio must be positive, got {self.mu_ratio}")
        if self.cg_iters < 1:
            raise ValueError(f"cg_iters must be >= 1, got {self.cg_iters}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tol < 0:
            raise ValueError(f"tol must be >= 0, got {self.tol}")
        if self.log_every < 1:
            raise ValueError(f"log_every must be >= 1, got {self.log_every}")


@dataclass
class SolverTrace:
    """Per-iteration log. Row 0 is the initial point (delta NaN, elapsed 0).

    With ``log_every > 1`` delta compares consecutive logged rows.
    """

    iterations: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    delta: list = field(default_factory=list)
    elapsed_ms: list = field(default_factory=list)

    def __len__(self):
        return max(len(self.iterations) - 1, 0)

    def _row(self, k: int) -> int:
        try:
            return self.iterations.index(k)
        except ValueError:
            raise KeyError(f"iteration {k} was not logged") from None

    def objective_at(self, k: int) -> float:
        return self.objective[self._row(k)]

    def elapsed_at(self, k: int) -> float:
        return self.elapsed_ms[self._row(k)]


@dataclass
class SolveResult:
    x: np.ndarray
    trace: SolverTrace
    converged: bool
    iterations: int
    state: dict = field(default_factory=dict, repr=False)
    meta: dict = field(default_factory=dict)


def _ratio(prev: float, cur: float) -> float:
    if cur == 0:
        return 0.0 if prev == 0 else math.inf
    return (prev - cur) / cur


class _Recorder:
    def __init__(self, cfg: SolverConfig, t0: float, j0: float):
        self.cfg = cfg
        self.t0 = t0
        self.trace = SolverTrace([0], [j0], [math.nan], [0.0])
        self.converged = False

    def due(self, k: int) -> bool:
        return k % self.cfg.log_every == 0 or k == self.cfg.max_iters

    def log(self, k: int, j: float) -> bool:
        tr = self.trace
        delta = _ratio(tr.objective[-1], j)
        elapsed = 1e3 * (time.perf_counter() - self.t0)
        tr.iterations.append(k)
        tr.objective.append(j)
        tr.delta.append(delta)
        tr.elapsed_ms.append(max(elapsed, tr.elapsed_ms[-1]))
        # an objective increase never triggers the stop
        self.converged = 0 <= delta < self.cfg.tol
        return self.converged


def _check_y(y: KSpaceData, op: TransferOperator):
    check_shape(y.data, op.dims.kspace_shape, "k-space")


def _need_tight(psi):
    if not getattr(psi, "tight_frame", False):
        raise ValueError(f"{type(psi).__name__} is not a tight frame (psi' psi = I required)")


def _need_frames(reg, op):
    if reg.kind.name == "TemporalTV" and op.dims.n_t < 2:
        raise ValueError("temporal TV needs at least 2 frames")


def admm_synthesis(y: KSpaceData, op: TransferOperator, cache: SpectralCache,
                   psi="tdft", cfg: SolverConfig | None = None, callback=None,
                   exploit_orthonormal: bool = True) -> SolveResult:
    """ADMM on the synthesis prior with a tight frame ``psi``.

    The w-subproblem inverse ``(mu I + psi H'H psi')^-1`` is rewritten as
    ``(I - psi psi')/mu + psi (mu I + H'H)^-1 psi'``; the first term is skipped
    for orthonormal ``psi`` unless ``exploit_orthonormal`` is False.
    """
    cfg = cfg or SolverConfig()
    psi = get_regularizer(psi)
    _need_tight(psi)
    _check_y(y, op)
    t0 = time.perf_counter()
    mu, lam = cfg.mu, cfg.lam
    tau = lam / (2 * mu)
    hty = op.adjoint(y)
    psi_hty = psi.forward(hty)
    full = exploit_orthonormal is False or not psi.orthonormal

    w = psi_hty.copy()
    d = np.zeros_like(w)
    v = w
    rec = _Recorder(cfg, t0, lam * float(np.abs(w).sum()) + data_term(y, op.forward(psi.adjoint(w))))
    k = 0
    for k in range(1, cfg.max_iters + 1):
        v = soft_threshold(w - d, tau)
        u = v + d
        w = psi.forward(apply_regularized_inverse(cache, mu, hty + mu * psi.adjoint(u)))
        if full:
            b = psi_hty + mu * u
            w = w + (b - psi.forward(psi.adjoint(b))) / mu
        d = d - (w - v)
        if callback is not None:
            callback(k, {"w": w, "v": v, "d": d})
        if rec.due(k):
            j = lam * float(np.abs(v).sum()) + data_term(y, op.forward(psi.adjoint(w)))
            if rec.log(k, j):
                break
    return SolveResult(psi.adjoint(w), rec.trace, rec.converged, k,
                       state={"w": w, "v": v, "d": d},
                       meta={"solver": "admm-synthesis", "regularizer": psi.kind.value})


def admm_analysis(y: KSpaceData, op: TransferOperator, cache: SpectralCache,
                  r="ttv", cfg: SolverConfig | None = None, callback=None) -> SolveResult:
    """ADMM on the analysis prior with splits ``v = R m`` and ``m = x``.

    ``cfg.mu`` is the penalty on ``m = x`` and ``cfg.mu_ratio`` is its ratio to
    the penalty on ``v = R m``.
    """
    cfg = cfg or SolverConfig()
    reg = get_regularizer(r)
    _need_frames(reg, op)
    _check_y(y, op)
    t0 = time.perf_counter()
    mu2, ratio, lam = cfg.mu, cfg.mu_ratio, cfg.lam
    mu1 = mu2 / ratio
    tau = lam / (2 * mu1)
    hty = op.adjoint(y)

    x = hty.copy()
    m = x.copy()
    rm = reg.forward(m)
    d1 = np.zeros_like(rm)
    d2 = np.zeros_like(x)
    v = rm
    rec = _Recorder(cfg, t0, lam * float(np.abs(rm).sum()) + data_term(y, op.forward(x)))
    k = 0
    for k in range(1, cfg.max_iters + 1):
        v = soft_threshold(rm + d1, tau)
        m = reg.normal_solve(ratio, reg.adjoint(v - d1) + ratio * (x + d2))
        x = apply_regularized_inverse(cache, mu2, hty + mu2 * (m - d2))
        rm = reg.forward(m)
        d1 = d1 - (v - rm)
        d2 = d2 - (m - x)
        if callback is not None:
            callback(k, {"x": x, "m": m, "v": v, "d1": d1, "d2": d2})
        if rec.due(k):
            j = lam * float(np.abs(reg.forward(x)).sum()) + data_term(y, op.forward(x))
            if rec.log(k, j):
                break
    return SolveResult(x, rec.trace, rec.converged, k,
                       state={"x": x, "m": m, "v": v, "d1": d1, "d2": d2},
                       meta={"solver": "admm-analysis", "regularizer": reg.kind.value})


def fista(y: KSpaceData, op: TransferOperator, blocks: NormalBlocks, psi="tdft",
          cfg: SolverConfig | None = None, cache: SpectralCache | None = None,
          callback=None) -> SolveResult:
    """Accelerated proximal gradient on the synthesis objective.

    The gradient ``2 psi (H'H psi' w - H'y)`` uses the block-wise normal
    operator; its Lipschitz constant ``2 max(e_k)`` comes from the cache when
    given, otherwise from the blocks' eigenvalues.
    """
    cfg = cfg or SolverConfig()
    psi = get_regularizer(psi)
    _need_tight(psi)
    _check_y(y, op)
    t0 = time.perf_counter()
    lam = cfg.lam
    top = cache.max_eigenvalue if cache is not None else max_eigenvalue(blocks)
    if not top > 0:
        raise ValueError("normal operator is zero; nothing to reconstruct")
    step = 1.0 / (2.0 * top)
    hty = op.adjoint(y)
    psi_hty = psi.forward(hty)

    w = psi_hty.copy()
    z = w
    t = 1.0
    rec = _Recorder(cfg, t0, lam * float(np.abs(w).sum()) + data_term(y, op.forward(psi.adjoint(w))))
    k = 0
    for k in range(1, cfg.max_iters + 1):
        grad = 2.0 * (psi.forward(apply_normal(blocks, psi.adjoint(z))) - psi_hty)
        w_new = soft_threshold(z - step * grad, lam * step)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        z = w_new + ((t - 1.0) / t_new) * (w_new - w)
        w, t = w_new, t_new
        if callback is not None:
            callback(k, {"w": w, "z": z})
        if rec.due(k):
            j = lam * float(np.abs(w).sum()) + data_term(y, op.forward(psi.adjoint(w)))
            if rec.log(k, j):
                break
    return SolveResult(psi.adjoint(w), rec.trace, rec.converged, k,
                       state={"w": w, "z": z},
                       meta={"solver": "fista", "regularizer": psi.kind.value})


def conjugate_gradient(apply_A, b: np.ndarray, x0: np.ndarray, iters: int) -> np.ndarray:
    """Exactly ``iters`` CG steps on a Hermitian PSD system, returning early only on breakdown."""
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    x = np.array(x0, dtype=np.result_type(x0, b, complex))
    r = b - apply_A(x)
    p = r.copy()
    rr = np.vdot(r, r).real
    for _ in range(iters):
        if rr == 0:
            break
        ap = apply_A(p)
        pap = np.vdot(p, ap).real
        if pap <= 0:
            break
        alpha = rr / pap
        x += alpha * p
        r -= alpha * ap
        rr_new = np.vdot(r, r).real
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x


def p1_split_bregman(y: KSpaceData, op: TransferOperator, blocks: NormalBlocks, r="ttv",
                     cfg: SolverConfig | None = None, callback=None) -> SolveResult:
    """Split Bregman with ``v = R x``; the x-step runs ``cfg.cg_iters`` CG steps
    on ``(mu R'R + H'H) x = H'y + mu R'(v + d)``, warm-started from the previous x.
    """
    cfg = cfg or SolverConfig()
    reg = get_regularizer(r)
    _need_frames(reg, op)
    _check_y(y, op)
    t0 = time.perf_counter()
    mu, lam = cfg.mu, cfg.lam
    tau = lam / (2 * mu)
    hty = op.adjoint(y)

    def system(z):
        return apply_normal(blocks, z) + mu * reg.adjoint(reg.forward(z))

    x = hty.copy()
    rx = reg.forward(x)
    d = np.zeros_like(rx)
    v = rx
    rec = _Recorder(cfg, t0, lam * float(np.abs(rx).sum()) + data_term(y, op.forward(x)))
    k = 0
    for k in range(1, cfg.max_iters + 1):
        v = soft_threshold(rx - d, tau)
        x = conjugate_gradient(system, hty + mu * reg.adjoint(v + d), x, cfg.cg_iters)
        rx = reg.forward(x)
        d = d - (rx - v)
        if callback is not None:
            callback(k, {"x": x, "v": v, "d": d})
        if rec.due(k):
            j = lam * float(np.abs(rx).sum()) + data_term(y, op.forward(x))
            if rec.log(k, j):
                break
    return SolveResult(x, rec.trace, rec.converged, k,
                       state={"x": x, "v": v, "d": d},
                       meta={"solver": "p1", "regularizer": reg.kind.value})


SOLVERS = {
    "admm-synthesis": "tdft",
    "admm-analysis": "ttv",
    "fista": "tdft",
    "p1": "ttv",
}

# solvers whose regularizer must be a tight frame
TIGHT_FRAME_ONLY = {"admm-synthesis", "fista"}


def run_solver(name: str, problem, cfg: SolverConfig, regularizer=None) -> SolveResult:
    """Dispatch a solver by name on a :class:`admmri.metrics.Problem`."""
    if name not in SOLVERS:
        raise ValueError(f"unknown solver {name!r}; choose from {sorted(SOLVERS)}")
    reg = regularizer or SOLVERS[name]
    p = problem
    if name == "admm-synthesis":
        return admm_synthesis(p.y, p.op, p.cache, reg, cfg)
    if name == "admm-analysis":
        return admm_analysis(p.y, p.op, p.cache, reg, cfg)
    if name == "fista":
        return fista(p.y, p.op, p.blocks, reg, cfg, cache=p.cache)
    return p1_split_bregman(p.y, p.op, p.blocks, reg, cfg)
