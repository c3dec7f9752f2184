import math

import numpy as np
import pytest

from admmri.model import Dims, KSpaceData, TransferOperator
from admmri.phantom import (MaskSpec, PhantomSpec, generate_mask, generate_phantom,
                            generate_sensitivities, simulate_acquisition)
from admmri.regularizers import TemporalDFT, TemporalTV
from admmri.solvers import (SolverConfig, admm_analysis, admm_synthesis, conjugate_gradient,
                            fista, p1_split_bregman, run_solver)
from admmri.spectral import precompute_cache
from conftest import crandn, relerr

ALL = [("admm-synthesis", "tdft"), ("fista", "tdft"), ("admm-analysis", "ttv"),
       ("admm-analysis", "tdft"), ("p1", "ttv"), ("p1", "tdft")]


class Small:
    """Small simulated problem with everything precomputed."""

    def __init__(self, dims=Dims(16, 12, 6, 3), period=6, accel=3, sigma=0.02, seed=0, x=None):
        self.x = generate_phantom(PhantomSpec(dims, period, seed=seed)) if x is None else x
        self.sens = generate_sensitivities(dims, seed + 1)
        self.mask = generate_mask(MaskSpec(dims.n_v, dims.n_t, accel, 2, seed + 2))
        self.y = simulate_acquisition(self.x, self.sens, self.mask, sigma, seed + 3)
        self.op = TransferOperator(self.sens, self.mask)
        self.blocks = self.op.build_normal_blocks()
        self.cache = precompute_cache(self.blocks)
        self.reference = self.x


def full_unit_problem(rng, shape=(8, 6, 4)):
    x = crandn(rng, *shape)
    op = TransferOperator(np.ones(shape[:2] + (1,), complex), np.ones((shape[0], shape[2]), bool))
    p = Small.__new__(Small)
    p.x, p.op, p.y = x, op, op.forward(x)
    p.blocks = op.build_normal_blocks()
    p.cache = precompute_cache(p.blocks)
    return p


@pytest.fixture(scope="module")
def small():
    return Small()


# --- exact recovery -----------------------------------------------------------

@pytest.mark.parametrize("name,reg", ALL)
def test_lambda_zero_full_sampling_recovers(rng, name, reg):
    p = full_unit_problem(rng)
    res = run_solver(name, p, SolverConfig(lam=0.0, max_iters=50, cg_iters=50), reg)
    ref = np.fft.ifft2(p.y.data[..., 0], axes=(0, 1), norm="ortho")
    assert relerr(res.x, ref) <= 1e-8


def test_fista_quadratic_objective_nonincreasing(rng):
    # one coil of constant weight 0.5: H'H = I/4, so H'y is not yet the solution
    x = crandn(rng, 8, 6, 4)
    op = TransferOperator(np.full((8, 6, 1), 0.5 + 0j), np.ones((8, 4), bool))
    y = op.forward(x)
    res = fista(y, op, op.build_normal_blocks(), "tdft", SolverConfig(lam=0.0, tol=0, max_iters=20))
    j = np.array(res.trace.objective)
    assert j[0] > 0.1 * np.vdot(y.data, y.data).real
    assert np.all(np.diff(j) <= 1e-14 * j[0])
    assert relerr(res.x, x) <= 1e-6


@pytest.mark.parametrize("name,reg", ALL)
def test_zero_data_gives_zero_image(small, name, reg):
    y = KSpaceData(np.zeros_like(small.y.data), small.mask)
    p = Small.__new__(Small)
    p.y, p.op, p.blocks, p.cache = y, small.op, small.blocks, small.cache
    res = run_solver(name, p, SolverConfig(max_iters=5), reg)
    assert not np.any(res.x)


# --- structure of the iterations ---------------------------------------------

def test_p1_with_dft_tracks_synthesis_iterates(small):
    cfg = SolverConfig(tol=0, max_iters=15, cg_iters=50)
    a, b = [], []
    admm_synthesis(small.y, small.op, small.cache, "tdft", cfg,
                   callback=lambda k, s: a.append(TemporalDFT().adjoint(s["w"])))
    p1_split_bregman(small.y, small.op, small.blocks, "tdft", cfg,
                     callback=lambda k, s: b.append(s["x"].copy()))
    for xa, xb in zip(a, b):
        assert relerr(xb, xa) <= 1e-6


def test_synthesis_full_inverse_identity_matches_shortcut(small):
    cfg = SolverConfig(tol=0, max_iters=10)
    r1 = admm_synthesis(small.y, small.op, small.cache, "tdft", cfg)
    r2 = admm_synthesis(small.y, small.op, small.cache, "tdft", cfg, exploit_orthonormal=False)
    assert relerr(r2.x, r1.x) <= 1e-12


def _replay(states, pairs):
    for prev, cur in zip(states, states[1:]):
        for dual, (z, v, sign) in pairs.items():
            expected = prev[dual] - sign * (cur[z] - cur[v])
            assert np.array_equal(cur[dual], expected)


def test_dual_update_identity_synthesis(small):
    states = []
    admm_synthesis(small.y, small.op, small.cache, "tdft", SolverConfig(tol=0, max_iters=6),
                   callback=lambda k, s: states.append({n: a.copy() for n, a in s.items()}))
    _replay(states, {"d": ("w", "v", 1)})


def test_dual_update_identity_analysis(small):
    states = []
    reg = TemporalTV()

    def cb(k, s):
        st = {n: a.copy() for n, a in s.items()}
        st["rm"] = reg.forward(s["m"])
        states.append(st)

    admm_analysis(small.y, small.op, small.cache, "ttv", SolverConfig(tol=0, max_iters=6), callback=cb)
    _replay(states, {"d1": ("v", "rm", 1), "d2": ("m", "x", 1)})


def test_fixed_point_optimality(small):
    # run well past the first delta < 1e-8 so the iterate itself has settled
    lam = 0.002
    res = admm_synthesis(small.y, small.op, small.cache, "tdft",
                         SolverConfig(lam=lam, tol=0, max_iters=600))
    assert abs(res.trace.delta[-1]) < 1e-8
    psi, op = TemporalDFT(), small.op
    w = res.state["v"]
    g = 2 * psi.forward(op.adjoint(op.forward(psi.adjoint(w)).data - small.y.data))
    nz = w != 0
    assert nz.any() and (~nz).any()
    assert np.abs(g[nz] + lam * w[nz] / np.abs(w[nz])).max() <= 1e-3 * lam
    assert np.abs(g[~nz]).max() <= lam * (1 + 1e-3)


def test_static_scene_tv_limit():
    dims = Dims(16, 16, 6, 3)
    x = generate_phantom(PhantomSpec(dims, motion_period=1))
    p = Small(dims, x=x, accel=2, sigma=0.05, seed=3)
    res = admm_analysis(p.y, p.op, p.cache, "ttv", SolverConfig(lam=10.0, tol=0, max_iters=600))
    var = np.abs(np.diff(res.x, axis=-1)).max() / np.abs(res.x).max()
    assert var <= 1e-6
    # least squares on the temporal mean: (sum_t B_t) xbar = sum_t (H'y)_t per column
    b = p.blocks.blocks.sum(axis=1)
    rhs = p.op.adjoint(p.y).sum(axis=-1)
    xbar = np.stack([np.linalg.solve(b[i], rhs[:, i]) for i in range(dims.n_h)], axis=1)
    assert relerr(res.x.mean(axis=-1), xbar) <= 1e-5


# --- traces, stopping and determinism ------------------------------------------

@pytest.mark.parametrize("name,reg", ALL)
def test_objective_sanity(small, name, reg):
    res = run_solver(name, small, SolverConfig(max_iters=60), reg)
    j = np.array(res.trace.objective)
    assert np.all(j >= 0)
    assert j[-1] <= j[0]
    assert np.all(np.diff(res.trace.elapsed_ms) >= 0)
    assert len(res.trace) <= 60 and res.trace.iterations[0] == 0


@pytest.mark.parametrize("name,reg", ALL)
def test_deterministic(small, name, reg):
    cfg = SolverConfig(max_iters=20)
    r1 = run_solver(name, small, cfg, reg)
    r2 = run_solver(name, small, cfg, reg)
    assert np.array_equal(r1.x, r2.x)
    assert r1.trace.objective == r2.trace.objective
    assert r1.trace.delta[1:] == r2.trace.delta[1:]


def test_stops_on_tolerance(small):
    res = admm_synthesis(small.y, small.op, small.cache, "tdft", SolverConfig(tol=1e-3))
    assert res.converged and res.iterations < 200
    assert 0 <= res.trace.delta[-1] < 1e-3
    assert all(not (0 <= d < 1e-3) for d in res.trace.delta[1:-1])


def test_no_convergence_when_budget_exhausted(small):
    res = admm_analysis(small.y, small.op, small.cache, "ttv", SolverConfig(tol=0, max_iters=7))
    assert not res.converged and res.iterations == 7 and len(res.trace) == 7


def test_log_every(small):
    res = fista(small.y, small.op, small.blocks, "tdft", SolverConfig(tol=0, max_iters=10, log_every=3))
    assert res.trace.iterations == [0, 3, 6, 9, 10]
    j = res.trace.objective
    assert res.trace.delta[2] == pytest.approx((j[1] - j[2]) / j[2], rel=1e-15)


def test_delta_column_consistent(small):
    tr = p1_split_bregman(small.y, small.op, small.blocks, "ttv", SolverConfig(max_iters=15)).trace
    assert math.isnan(tr.delta[0])
    for k in range(1, len(tr.objective)):
        assert tr.delta[k] == (tr.objective[k - 1] - tr.objective[k]) / tr.objective[k]


@pytest.mark.parametrize("name", ["admm-synthesis", "fista"])
def test_tight_frame_required(small, name):
    with pytest.raises(ValueError, match="tight frame"):
        run_solver(name, small, SolverConfig(max_iters=1), "ttv")


def test_tv_needs_two_frames(rng):
    p = full_unit_problem(rng, (4, 4, 1))
    with pytest.raises(ValueError, match="2 frames"):
        run_solver("admm-analysis", p, SolverConfig(max_iters=1), "ttv")


def test_unknown_solver(small):
    with pytest.raises(ValueError, match="unknown solver"):
        run_solver("salsa", small, SolverConfig())


@pytest.mark.parametrize("field,value", [("lam", -1), ("mu", 0), ("mu_ratio", 0), ("cg_iters", 0),
                                         ("max_iters", 0), ("tol", -1e-3), ("log_every", 0)])
def test_config_validation(field, value):
    with pytest.raises(ValueError):
        SolverConfig(**{field: value})


def test_config_defaults_are_operating_point():
    cfg = SolverConfig()
    assert (cfg.lam, cfg.mu, cfg.mu_ratio, cfg.max_iters, cfg.tol) == (0.002, 0.06, 0.5, 200, 1e-3)


# --- conjugate gradient ----------------------------------------------------------

def test_cg_identity_one_step(rng):
    b = crandn(rng, 5)
    np.testing.assert_allclose(conjugate_gradient(lambda z: z, b, np.zeros(5), 1), b, atol=1e-15)


def test_cg_diagonal_finite_termination():
    d = np.array([1.0, 2.0, 5.0, 10.0])
    b = np.array([1.0, -1.0, 2.0, 0.5])
    x = conjugate_gradient(lambda z: d * z, b, np.zeros(4), 4)
    np.testing.assert_allclose(x, b / d, rtol=1e-12, atol=1e-12)


def test_cg_random_psd(rng):
    # tall Gaussian factor keeps the condition number near 10
    g = crandn(rng, 64, 16)
    a = g.conj().T @ g / 64 + 0.1 * np.eye(16)
    b = crandn(rng, 16)
    x = conjugate_gradient(lambda z: a @ z, b, np.zeros(16), 16)
    assert relerr(x, np.linalg.solve(a, b)) <= 1e-8


def test_cg_warm_start_at_solution_stays(rng):
    a = np.diag([1.0, 3.0, 4.0])
    b = np.array([1.0, 3.0, 8.0])
    x0 = np.array([1.0, 1.0, 2.0])
    np.testing.assert_array_equal(conjugate_gradient(lambda z: a @ z, b, x0, 3), x0)


def test_cg_does_not_modify_x0(rng):
    x0 = crandn(rng, 4)
    keep = x0.copy()
    conjugate_gradient(lambda z: 2 * z, crandn(rng, 4), x0, 2)
    assert np.array_equal(x0, keep)
