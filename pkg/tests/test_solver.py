import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from porous_obstacle.coefficients import (ForcingLaw, NoiseLaw, PenaltyLaw, PorousLaw,
                                          build_regularized, mollified_initial)
from porous_obstacle.grid import Field, GridSpec
from porous_obstacle.scenarios import bump_profile
from porous_obstacle.solver import (Problem, SolverConfig, SolverDivergence, StepContext, cfl_dt,
                                    fd_update, galerkin_mask, project, resolve_penalty_implicit,
                                    run, run_ensemble, step_fd, step_galerkin, weak_residual)
from porous_obstacle.stochastic import sample_noise


def make_problem(n_axis=32, d=1, noise=0.5, N0=0.5, xi=None, S0=1.0, kind="linear"):
    grid = GridSpec(d, n_axis)
    xi = Field(grid, 0.9 + 0.1 * bump_profile(grid)) if xi is None else xi
    return Problem(grid, PorousLaw(2.0), ForcingLaw(N0), NoiseLaw.geometric(noise, kind=kind), xi, S0)


# -- implicit penalty ------------------------------------------------------------

def test_resolve_penalty_examples():
    assert resolve_penalty_implicit(0.5, 1.0, 0.1, 0.1) == 0.5
    assert resolve_penalty_implicit(2.0, 1.0, 0.1, 0.1) == pytest.approx(1.5)


@given(st.floats(-5, 5), st.floats(0, 3), st.floats(1e-4, 1), st.floats(1e-3, 1))
def test_resolve_penalty_solves_equation(rhs, S, dt, eps):
    u = float(resolve_penalty_implicit(rhs, S, dt, eps))
    assert u + dt / eps * max(u - S, 0.0) == pytest.approx(rhs, abs=1e-12)
    if rhs > S:
        assert S < u < rhs


@given(st.floats(0, 3), st.floats(1e-4, 1), st.floats(1e-3, 1))
def test_resolve_penalty_monotone_in_rhs(S, dt, eps):
    rhs = np.linspace(-3, 6, 501)
    assert np.all(np.diff(resolve_penalty_implicit(rhs, S, dt, eps)) >= 0)


@given(st.floats(0, 3), st.floats(1e-4, 1), st.floats(1e-3, 1), st.integers(0, 1000))
def test_overshoot_bound(S, dt, eps, seed):
    rhs = np.random.default_rng(seed).uniform(-2, 6, 200)
    u = resolve_penalty_implicit(rhs, S, dt, eps)
    assert np.all(np.maximum(u - S, 0) <= np.maximum(rhs - S, 0) / (1 + dt / eps) + 1e-14)


# -- FD step ------------------------------------------------------------------

def _ctx(problem, n_reg=8, dt=1e-4, eps=0.1, mode="implicit", modes=None):
    reg = build_regularized(problem.law, n_reg)
    return StepContext(problem.grid, reg, problem.forcing, problem.noise, PenaltyLaw(eps), dt, mode,
                       modes or problem.grid.n_axis // 2)


@pytest.mark.parametrize("kind", ["linear", "holder"])
@pytest.mark.parametrize("d", [1, 2])
def test_zero_state_is_fixed(kind, d):
    problem = make_problem(n_axis=8, d=d, kind=kind)
    ctx = _ctx(problem)
    dW = sample_noise(0, 1e-4, 1, problem.noise.modes).increments[0]
    zero = Field(problem.grid, np.zeros(problem.grid.shape))
    assert np.all(step_fd(zero, 0.0, 0.5, dW, ctx).values == 0)
    assert np.all(step_galerkin(np.zeros(problem.grid.shape, complex), 0.0, 0.5, dW,
                                _ctx(problem, mode="explicit")) == 0)


@pytest.mark.parametrize("d", [1, 2])
def test_mass_conservation(d):
    grid = GridSpec(d, 16)
    problem = Problem(grid, PorousLaw(2.0), ForcingLaw(0.0), NoiseLaw.geometric(0.0),
                      Field(grid, 0.4 * bump_profile(grid)))
    reg = build_regularized(problem.law, 8)
    ctx = _ctx(problem, dt=0.4 * cfl_dt(grid, reg))
    u = problem.xi
    mass0 = u.values.sum()
    for j in range(50):
        u = step_fd(u, j * ctx.dt, math.inf, np.zeros(problem.noise.modes), ctx)
    assert abs(u.values.sum() - mass0) <= 1e-12 * mass0


@pytest.mark.parametrize("mode", ["implicit", "explicit"])
def test_single_step_matches_scalar_oracle(mode):
    grid = GridSpec(1, 4)
    problem = Problem(grid, PorousLaw(2.0), ForcingLaw(0.5, kind="linear_plus_spatial"),
                      NoiseLaw.geometric(0.5, 3), Field(grid, np.zeros(4)), S0=1.0)
    ctx = _ctx(problem, n_reg=4, dt=2e-3, eps=0.05, mode=mode)
    u = np.array([0.2, 1.4, 0.9, 0.05])
    dW = np.array([0.03, -0.02, 0.01])
    got = step_fd(Field(grid, u), 0.1, 1.0, dW, ctx).values
    ref = oracles.fd_step_scalar(u, 0.1, 1.0, dW, grid, ctx.reg, problem.forcing, problem.noise,
                                 0.05, 2e-3, mode)
    np.testing.assert_allclose(got, ref, rtol=1e-14, atol=1e-14)
    # the point above the obstacle is pulled back
    assert got[1] < u[1]


def test_single_step_2d_matches_scalar_oracle():
    grid = GridSpec(2, 4)
    rng = np.random.default_rng(8)
    problem = make_problem(n_axis=4, d=2, xi=Field(grid, np.zeros((4, 4))))
    ctx = _ctx(problem, n_reg=4, dt=1e-3)
    u = rng.uniform(0, 1.5, (4, 4))
    dW = rng.normal(0, 0.03, problem.noise.modes)
    got = step_fd(Field(grid, u), 0.0, 1.0, dW, ctx).values
    ref = oracles.fd_step_scalar(u, 0.0, 1.0, dW, grid, ctx.reg, problem.forcing, problem.noise,
                                 0.1, 1e-3)
    np.testing.assert_allclose(got, ref, rtol=1e-14, atol=1e-14)


@given(st.integers(0, 10_000), st.sampled_from(["implicit", "explicit"]))
def test_one_step_comparison_in_eps(seed, mode):
    problem = make_problem(n_axis=16)
    rng = np.random.default_rng(seed)
    u = rng.uniform(0, 1.5, 16)
    S = rng.uniform(0.5, 1.2)
    coef = rng.normal(0, 0.05)
    outs = [fd_update(u, 0.0, S, coef, _ctx(problem, dt=1e-4, eps=eps, mode=mode)) for eps in (0.2, 0.05)]
    assert np.all(outs[0] >= outs[1])


def test_step_fd_raises_on_non_finite():
    problem = make_problem(n_axis=8)
    ctx = _ctx(problem)
    # finite but large enough that the stencil overflows
    bad = Field(problem.grid, np.array([1e307, 0.0] * 4))
    with pytest.raises(SolverDivergence):
        step_fd(bad, 0.0, 1.0, np.zeros(problem.noise.modes), ctx)


# -- Galerkin step --------------------------------------------------------------

@pytest.mark.parametrize("k", [1, 3])
def test_galerkin_single_mode_decay(k):
    # floor regime: Phi_n(r) = (4/n^2) r exactly for small |r|
    n = 4
    grid = GridSpec(1, 32)
    problem = Problem(grid, PorousLaw(2.0), ForcingLaw(0.0), NoiseLaw.geometric(0.0),
                      Field(grid, np.zeros(32)))
    x = grid.coordinates()[0]
    u0 = 0.03 + 0.02 * np.cos(2 * np.pi * k * x)
    rate = 4 / n ** 2 * (2 * np.pi * k) ** 2
    errs = []
    for dt in (2e-3, 1e-3):
        ctx = _ctx(problem, n_reg=n, dt=dt, mode="explicit", modes=16)
        uh = np.fft.fft(u0)
        steps = int(round(0.02 / dt))
        for j in range(steps):
            uh = step_galerkin(uh, j * dt, math.inf, np.zeros(problem.noise.modes), ctx)
        amp = 2 * uh[k].real / 32
        assert uh[0].real / 32 == pytest.approx(0.03, rel=1e-13)
        errs.append(abs(amp - 0.02 * math.exp(-rate * 0.02)))
        # one-step factor is exactly 1 - rate dt
        assert amp == pytest.approx(0.02 * (1 - rate * dt) ** steps, rel=1e-12)
    assert errs[1] < 0.6 * errs[0]


def test_projection_idempotent():
    grid = GridSpec(2, 16)
    v = np.random.default_rng(1).normal(size=(16, 16))
    mask = galerkin_mask(grid, 8)
    assert np.array_equal(mask * mask, mask)
    once = project(v, grid, 8)
    np.testing.assert_allclose(project(once, grid, 8), once, atol=1e-14)
    assert galerkin_mask(grid, 8).sum() == 49


def test_galerkin_modes_validated():
    problem = make_problem(n_axis=16)
    with pytest.raises(ValueError):
        SolverConfig(backend="galerkin", galerkin_modes=32, T=0.01).resolve(problem)
    assert SolverConfig(backend="galerkin").penalty_mode == "explicit"


def test_backends_agree_on_linear_regime():
    # pure diffusion in the floor regime, smooth data: FD error is O(h^2)
    gaps = []
    for n_axis in (16, 32):
        grid = GridSpec(1, n_axis)
        x = grid.coordinates()[0]
        xi = Field(grid, 0.03 + 0.02 * np.sin(2 * np.pi * x))
        problem = Problem(grid, PorousLaw(2.0), ForcingLaw(0.0), NoiseLaw.geometric(0.0), xi)
        out = []
        for backend in ("fd", "galerkin"):
            cfg = SolverConfig(T=0.02, n_reg=4, backend=backend, dt=1e-5, snapshot_stride=1000,
                               cfl_amplitude=0.1)
            out.append(run(problem, cfg).u[-1])
        gaps.append(np.sqrt(np.sum((out[0] - out[1]) ** 2) * grid.h))
    assert gaps[1] < gaps[0] / 3


# -- configuration and CFL ------------------------------------------------------------

def test_cfl_examples():
    reg = build_regularized(PorousLaw(2.0), 4)
    assert cfl_dt(GridSpec(1, 64), reg, 1) == pytest.approx(1 / 4096 / 16)
    assert cfl_dt(GridSpec(2, 64), reg) == pytest.approx(cfl_dt(GridSpec(1, 64), reg) / 2)

    class Doubled:
        def sup_dphi(self, amplitude=None):
            return 2 * reg.sup_dphi(amplitude)

    assert cfl_dt(GridSpec(1, 64), Doubled()) == pytest.approx(cfl_dt(GridSpec(1, 64), reg) / 2)


def test_config_rejects_unstable_dt_and_explicit_penalty():
    problem = make_problem(n_axis=32)
    with pytest.raises(ValueError, match="stability"):
        SolverConfig(T=0.1, n_reg=8, dt=1e-2).resolve(problem)
    with pytest.raises(ValueError, match="dt <= eps"):
        SolverConfig(T=0.1, eps=1e-6, n_reg=8, penalty_mode="explicit").resolve(problem)
    reg, dt, steps = SolverConfig(T=0.1, n_reg=8).resolve(problem)
    assert dt * steps == pytest.approx(0.1)
    assert dt <= 0.5 * cfl_dt(problem.grid, reg) * (1 + 1e-12)


@pytest.mark.parametrize("kw", [dict(backend="spectral"), dict(penalty_mode="soft"),
                                dict(cfl_safety=0.0), dict(eps=0.0), dict(snapshot_stride=0)])
def test_config_rejects_bad_fields(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_problem_validation():
    grid = GridSpec(1, 8)
    xi = Field(grid, np.full(8, 0.5))
    with pytest.raises(ValueError):
        Problem(grid, PorousLaw(2.0), ForcingLaw(), NoiseLaw.geometric(0.5), xi, S0=0.4)
    with pytest.raises(ValueError):
        Problem(grid, PorousLaw(2.0), ForcingLaw(), NoiseLaw.geometric(0.5), xi, S0=1.0, h_S=-1)
    with pytest.raises(ValueError):
        Problem(grid, PorousLaw(2.0), ForcingLaw(), NoiseLaw.geometric(0.5), Field(grid, -xi.values))


# -- trajectories -------------------------------------------------------------

CFG = SolverConfig(T=0.02, eps=0.1, n_reg=8, snapshot_stride=7, cfl_amplitude=2.0)


def test_zero_datum_gives_zero_trajectory():
    grid = GridSpec(1, 16)
    problem = make_problem(n_axis=16, xi=Field(grid, np.zeros(16)))
    tr = run(problem, CFG, seed=4)
    assert np.all(tr.u == 0) and np.all(tr.nu == 0)


def test_trajectory_invariants():
    problem = make_problem()
    tr = run(problem, CFG, seed=1)
    assert np.array_equal(tr.u[0], mollified_initial(problem.xi, 8).values)
    assert np.all(tr.nu >= 0) and np.all(np.isfinite(tr.u))
    assert tr.snapshot_steps[0] == 0 and tr.snapshot_steps[-1] == tr.steps
    assert np.all(np.diff(tr.snapshot_steps)[:-1] == 7)
    assert tr.S[0] == 1.0
    assert tr.failed is None
    for key in ("dt", "steps", "cfl_margin", "max_abs_u", "clamp_count"):
        assert key in tr.diagnostics


def test_determinism_and_ensemble_consistency():
    problem = make_problem()
    a, b = run(problem, CFG, seed=5), run(problem, CFG, seed=5)
    assert np.array_equal(a.u, b.u) and np.array_equal(a.S, b.S)
    batch = run_ensemble(problem, CFG, seeds=[3, 5, 9])
    assert np.array_equal(batch[1].u, a.u) and np.array_equal(batch[1].S, a.S)
    assert not np.array_equal(batch[0].u, a.u)


def test_supplied_noise_is_used_and_checked():
    problem = make_problem()
    _, dt, steps = CFG.resolve(problem)
    nz = sample_noise(42, dt, steps, problem.noise.modes)
    assert np.array_equal(run(problem, CFG, noise=nz).u, run(problem, CFG, seed=42).u)
    with pytest.raises(ValueError):
        run(problem, CFG, noise=sample_noise(42, dt, steps + 1, problem.noise.modes))


def test_divergence_returns_partial_trajectory():
    # a CFL bound taken over a far too small amplitude lets the scheme blow up
    grid = GridSpec(1, 64)
    problem = Problem(grid, PorousLaw(2.0), ForcingLaw(0.0), NoiseLaw.geometric(0.0),
                      Field(grid, 3.0 * bump_profile(grid)))
    cfg = SolverConfig(T=2.0, n_reg=16, cfl_safety=1.0, cfl_amplitude=0.01, snapshot_stride=1)
    tr = run(problem, cfg)
    assert tr.failed is not None and "non-finite" in tr.failed
    assert len(tr.times) < tr.steps + 1
    assert np.all(np.isfinite(tr.u))


# -- weak residual ------------------------------------------------------------------

def test_weak_residual_zero_trajectory():
    grid = GridSpec(1, 16)
    problem = make_problem(n_axis=16, xi=Field(grid, np.zeros(16)))
    tr = run(problem, CFG.with_(snapshot_stride=1))
    x = grid.coordinates()[0]
    assert np.all(weak_residual(tr, np.cos(2 * np.pi * x)) == 0)


def test_weak_residual_requires_full_cadence():
    with pytest.raises(ValueError):
        weak_residual(run(make_problem(), CFG), np.ones(32))


def test_weak_residual_constant_shift_invariance():
    grid = GridSpec(1, 32)
    problem = Problem(grid, PorousLaw(2.0), ForcingLaw(0.0), NoiseLaw.geometric(0.0),
                      Field(grid, 0.5 * bump_profile(grid)))
    tr = run(problem, SolverConfig(T=0.01, n_reg=8, snapshot_stride=1))
    phi = np.cos(2 * np.pi * grid.coordinates()[0])
    np.testing.assert_allclose(weak_residual(tr, phi), weak_residual(tr, phi + 3.0), atol=1e-13)


def test_weak_residual_matches_loop_oracle():
    problem = make_problem(n_axis=8)
    tr = run(problem, SolverConfig(T=0.004, eps=0.1, n_reg=4, snapshot_stride=1, cfl_amplitude=2.0),
             seed=2)
    phi = 1 + np.sin(2 * np.pi * problem.grid.coordinates()[0])
    ref = oracles.weak_residual(tr, phi)
    np.testing.assert_allclose(weak_residual(tr, phi), ref, rtol=1e-11, atol=1e-15)
