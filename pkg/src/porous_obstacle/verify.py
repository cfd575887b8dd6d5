"""Invariant suite run by the ``verify`` command.

Each check returns a :class:`Check` with a measured margin (positive = room to
spare).  ``inject_fault=True`` swaps in a penalty with the wrong sign, which the
comparison invariants must catch.
"""
from dataclasses import dataclass

import numpy as np

from .coefficients import ForcingLaw, NoiseLaw, PenaltyLaw, PorousLaw, build_regularized
from .estimators import comparison_check, penalty_norms, skorokhod_functional
from .grid import Field, GridSpec
from .scenarios import bump_profile
from .solver import (Problem, SolverConfig, StepContext, fd_update, resolve_penalty_implicit,
                     run, run_ensemble)


@dataclass(frozen=True)
class Check:
    module: str
    name: str
    passed: bool
    margin: float
    detail: str = ""

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.module:<12s} {self.name:<44s} margin={self.margin:+.3e} {self.detail}"


class FlippedPenalty(PenaltyLaw):
    """Test double: pushes u up above the obstacle instead of down."""

    def __call__(self, r, s):
        return -super().__call__(r, s)


def _resolve(rhs, S, dt, eps, fault):
    if fault:
        lam = dt / eps
        return np.where(rhs <= S, rhs, (rhs - lam * S) / (1.0 - lam) if lam != 1 else rhs)
    return resolve_penalty_implicit(rhs, S, dt, eps)


def check_zeta_contract(ns=(2, 4, 8, 16, 32, 64), ms=(2.0, 3.0)):
    out = []
    for m in ms:
        base = PorousLaw(m)
        for n in ns:
            reg = build_regularized(base, n)
            r = np.linspace(-n, n, 10_001)
            zn = reg.zeta_n(r)
            floor = float(zn.min() - 2.0 / n)
            dev = float(np.max(np.abs(base.zeta(r) - zn)))
            margin = min(floor, 4.0 / n - dev)
            out.append(Check("coefficients", f"zeta_n contract m={m:g} n={n}", margin >= 0, margin,
                             f"(min zeta_n - 2/n = {floor:.2e}, 4/n - sup dev = {4.0 / n - dev:.2e})"))
    return out


def check_penalty_monotone(fault=False, seed=0):
    rng = np.random.default_rng(seed)
    rhs = np.sort(rng.uniform(-2, 3, 2000))
    worst = np.inf
    for dt, eps, S in [(0.1, 0.1, 1.0), (0.01, 0.5, 0.3), (0.2, 0.05, 0.0)]:
        worst = min(worst, float(np.min(np.diff(_resolve(rhs, S, dt, eps, fault)))))
    return Check("solver", "implicit penalty non-decreasing in rhs", worst >= 0, worst)


def check_overshoot_bound(fault=False, seed=1):
    rng = np.random.default_rng(seed)
    rhs = rng.uniform(-1, 3, 2000)
    S, dt, eps = 1.0, 0.05, 0.1
    u = _resolve(rhs, S, dt, eps, fault)
    bound = np.maximum(rhs - S, 0) / (1 + dt / eps)
    margin = float(np.min(bound - np.maximum(u - S, 0)))
    return Check("solver", "overshoot (u-S)+ <= (rhs-S)+/(1+dt/eps)", margin >= -1e-14, margin)


def _stoch_problem(d=1, n_axis=32, noise=0.5, N0=2.0):
    # starts just below the obstacle and grows, so the penalty is active
    grid = GridSpec(d, n_axis)
    xi = Field(grid, 0.9 + 0.1 * bump_profile(grid))
    return Problem(grid, PorousLaw(2.0), ForcingLaw(N0), NoiseLaw.geometric(noise), xi, S0=1.0)


def check_one_step_comparison(fault=False, seed=2):
    problem = _stoch_problem()
    grid = problem.grid
    reg = build_regularized(problem.law, 8)
    rng = np.random.default_rng(seed)
    u = np.abs(rng.normal(0.9, 0.3, (16,) + grid.shape))
    S = rng.uniform(0.6, 1.0, 16)
    coef = rng.normal(0, 0.05, 16)
    dt = 1e-4
    pen = FlippedPenalty if fault else PenaltyLaw
    res = []
    for eps in (0.2, 0.05):
        ctx = StepContext(grid, reg, problem.forcing, problem.noise, pen(eps), dt, "explicit")
        res.append(fd_update(u, 0.0, S, coef, ctx))
    margin = float(np.min(res[0] - res[1]))
    return Check("solver", "one-step eps comparison u(eps1) >= u(eps2)", margin >= 0, margin)


def check_mass_conservation():
    grid = GridSpec(1, 32)
    xi = Field(grid, 0.3 * bump_profile(grid))
    problem = Problem(grid, PorousLaw(2.0), ForcingLaw(0.0), NoiseLaw.geometric(0.0), xi)
    tr = run(problem, SolverConfig(T=0.02, n_reg=8, snapshot_stride=50))
    mass = tr.u.sum(axis=1) * grid.h
    rel = float(np.max(np.abs(mass - mass[0])) / mass[0])
    return Check("solver", "mass conservation (sigma=F=0, no obstacle)", rel <= 1e-12, 1e-12 - rel)


def check_determinism():
    problem = _stoch_problem()
    cfg = SolverConfig(T=0.02, eps=0.1, n_reg=8, snapshot_stride=20, cfl_amplitude=2.0)
    a, b = run(problem, cfg, seed=7), run(problem, cfg, seed=7)
    same = np.array_equal(a.u, b.u) and np.array_equal(a.S, b.S)
    return Check("solver", "same seed gives bit-identical trajectory", same, 0.0 if same else -1.0)


def check_trajectory_comparison(fault=False):
    problem = _stoch_problem()
    legs = []
    for eps in (0.2, 0.05):
        # the faulty double has no pointwise resolvent, so it runs explicitly
        cfg = SolverConfig(T=0.1, eps=eps, n_reg=8, snapshot_stride=10, cfl_amplitude=2.0,
                           penalty_mode="explicit" if fault else "implicit")
        pen = FlippedPenalty(eps) if fault else None
        legs.append(run_ensemble(problem, cfg, seeds=[0, 1, 2, 3], penalty=pen))
    worst = min(comparison_check(a, b)[0] for a, b in zip(*legs))
    return Check("estimators", "pathwise comparison min(u_eps1 - u_eps2)", worst >= -1e-3, worst + 1e-3)


def check_skorokhod_identity():
    problem = _stoch_problem()
    tr = run(problem, SolverConfig(T=0.1, eps=0.05, n_reg=8, snapshot_stride=5, cfl_amplitude=2.0),
             seed=3)
    sk = skorokhod_functional(tr)
    l2 = penalty_norms(tr)[1]
    ref = l2 / tr.eps
    err = abs(sk - ref) / max(ref, 1e-300)
    return Check("estimators", "Skorokhod functional = eps * ||nu||^2", err <= 1e-12, 1e-12 - err,
                 f"(value {sk:.3e})")


def run_suite(inject_fault=False):
    checks = []
    checks += check_zeta_contract()
    checks.append(check_penalty_monotone(inject_fault))
    checks.append(check_overshoot_bound(inject_fault))
    checks.append(check_one_step_comparison(inject_fault))
    checks.append(check_mass_conservation())
    checks.append(check_determinism())
    checks.append(check_trajectory_comparison(inject_fault))
    checks.append(check_skorokhod_identity())
    return checks


def cmd_verify(inject_fault=False, stream=None):
    checks = run_suite(inject_fault)
    lines = [c.line() for c in checks]
    failed = sum(not c.passed for c in checks)
    lines.append(f"{len(checks) - failed}/{len(checks)} invariants hold")
    if stream is not None:
        stream.write("\n".join(lines) + "\n")
    return checks, (1 if failed else 0)
