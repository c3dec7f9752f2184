"""Objectives, convergence ratio, reconstruction error and the benchmark runner."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .model import KSpaceData, TransferOperator, check_shape
from .regularizers import get_regularizer

log = logging.getLogger(__name__)


def data_term(y: KSpaceData, hx: KSpaceData | np.ndarray) -> float:
    """||y - Hx||^2 summed over acquired lines only."""
    hx = hx.data if isinstance(hx, KSpaceData) else hx
    check_shape(hx, y.data.shape, "predicted k-space")
    total = 0.0
    for t in range(y.mask.shape[1]):
        rows = np.flatnonzero(y.mask[:, t])
        r = y.data[rows, :, t, :] - hx[rows, :, t, :]
        total += float(np.vdot(r, r).real)
    return total


def objective_synthesis(y: KSpaceData, op: TransferOperator, psi, w, lam: float) -> float:
    """lam ||w||_1 + ||y - H psi' w||^2."""
    psi = get_regularizer(psi)
    x = psi.adjoint(w)
    return lam * float(np.abs(w).sum()) + data_term(y, op.forward(x))


def objective_analysis(y: KSpaceData, op: TransferOperator, r, x, lam: float) -> float:
    """lam ||R x||_1 + ||y - H x||^2."""
    r = get_regularizer(r)
    reg = float(np.abs(r.forward(x)).sum()) if lam else 0.0
    return lam * reg + data_term(y, op.forward(x))


def delta_ratio(trace, k: int) -> float:
    """(J(k-1) - J(k)) / J(k) read from a solver trace."""
    if k < 1:
        raise ValueError(f"delta is defined for k >= 1, got {k}")
    prev, cur = trace.objective_at(k - 1), trace.objective_at(k)
    if cur == 0:
        raise ZeroDivisionError(f"J({k}) = 0, convergence ratio undefined")
    return (prev - cur) / cur


def nrmse(x: np.ndarray, ref: np.ndarray) -> float:
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {ref.shape}")
    denom = np.linalg.norm(ref)
    if denom == 0:
        raise ValueError("reference has zero norm")
    return float(np.linalg.norm(x - ref) / denom)


@dataclass
class BenchmarkReport:
    solver: str
    label: str
    regularizer: str
    config: dict
    time_to_target_ms: float
    iters_to_target: int
    reached: bool
    final_objective: float
    nrmse: float
    total_ms: float
    precompute_ms: float
    trace: object = field(default=None, repr=False)

    def row(self) -> dict:
        d = asdict(self)
        d.pop("trace")
        cfg = d.pop("config")
        return {**d, **{f"cfg_{k}": v for k, v in cfg.items()}}


@dataclass
class Problem:
    """Everything a solver needs, plus the ground truth and the spectral setup cost."""

    y: KSpaceData
    op: TransferOperator
    blocks: object
    cache: object
    reference: np.ndarray
    precompute_ms: float = 0.0
    blocks_ms: float = 0.0
    meta: dict = field(default_factory=dict)


def first_below(trace, target: float) -> int | None:
    """Smallest logged iteration with delta < target, or ``None``."""
    for k, d in zip(trace.iterations[1:], trace.delta[1:]):
        if d < target:
            return k
    return None


def run_benchmark(problem: Problem, solvers, configs, delta_target: float = 1e-3,
                  repeats: int = 3, labels=None) -> list[BenchmarkReport]:
    """Run each solver ``repeats`` times and keep the fastest repetition.

    ``solvers`` holds solver names (see :data:`admmri.solvers.SOLVERS`) or
    ``(name, regularizer)`` pairs; ``configs`` holds one :class:`SolverConfig`
    per entry. Spectral precompute time is reported separately and never
    charged to a solver.
    """
    from .solvers import run_solver

    if not solvers:
        raise ValueError("at least one solver is required")
    if len(configs) != len(solvers):
        raise ValueError("one config per solver is required")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    labels = labels or [None] * len(solvers)
    reports = []
    for entry, cfg, label in zip(solvers, configs, labels):
        name, reg = entry if isinstance(entry, tuple) else (entry, None)
        best = None
        for _ in range(repeats):
            try:
                res = run_solver(name, problem, cfg, reg)
            except Exception as err:
                raise RuntimeError(f"solver {name!r} failed: {err}") from err
            k = first_below(res.trace, delta_target)
            if k is None:
                ttt, its, reached = res.trace.elapsed_ms[-1], res.iterations, False
            else:
                ttt, its, reached = res.trace.elapsed_at(k), k, True
            if best is None or ttt < best[0]:
                best = (ttt, its, reached, res)
            elif its != best[1]:
                log.warning("%s: iterations-to-target changed between repeats", name)
        ttt, its, reached, res = best
        reg_name = res.meta.get("regularizer", reg)
        reports.append(BenchmarkReport(
            solver=name,
            label=label or name,
            regularizer=str(reg_name),
            config=asdict(cfg),
            time_to_target_ms=float(ttt),
            iters_to_target=int(its),
            reached=reached,
            final_objective=float(res.trace.objective[-1]),
            nrmse=nrmse(res.x, problem.reference),
            total_ms=float(res.trace.elapsed_ms[-1]),
            precompute_ms=problem.precompute_ms,
            trace=res.trace,
        ))
        log.info("%s: %s iterations to target in %.1f ms", label or name, its, ttt)
    return reports


def timed(fn, *args, **kwargs):
    """Return ``(result, milliseconds)``."""
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, 1e3 * (time.perf_counter() - t0)
