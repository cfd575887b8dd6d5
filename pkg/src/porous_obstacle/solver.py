"""Time integration of the penalised, regularised stochastic porous medium equation

    du = [Delta Phi_n(u) + F(t, x, u) - G_eps(u, S)] dt + sum_k sigma^k(u) dW^k

with an explicit finite-difference backend and a pseudo-spectral Galerkin
backend.  Diffusion, forcing and noise are explicit (Euler-Maruyama); the stiff
penalty is resolved pointwise and implicitly by default.
"""
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .coefficients import PenaltyLaw, build_regularized, mollified_initial
from .grid import Field, central_differences, grid_sum, laplacian_array
from .stochastic import ObstaclePath, integrate_obstacle, sample_noise


class SolverDivergence(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Problem:
    """Coefficients, initial datum and obstacle of one obstacle problem.

    ``S0=None`` switches the obstacle (and the penalty) off.
    """
    grid: object
    law: object
    forcing: object
    noise: object
    xi: Field
    S0: float = None
    h_S: float = 0.0

    def __post_init__(self):
        if np.any(self.xi.values < 0):
            raise ValueError("initial datum must be non-negative")
        if self.S0 is not None:
            if self.S0 < 0 or self.h_S < 0:
                raise ValueError("obstacle needs S0 >= 0 and h_S >= 0")
            if self.S0 < float(self.xi.values.max()):
                raise ValueError(
                    f"obstacle S0={self.S0} lies below sup xi={self.xi.values.max()}")

    @property
    def has_obstacle(self):
        return self.S0 is not None


@dataclass(frozen=True)
class SolverConfig:
    T: float = 0.5
    eps: float = 0.1
    n_reg: int = 16
    backend: str = "fd"
    dt: float = None
    cfl_safety: float = 0.5
    penalty_mode: str = "implicit"
    galerkin_modes: int = None
    snapshot_stride: int = 10
    # amplitude R bounding |u| in the CFL sup of Phi_n' over [-R, R]; None = all of R
    cfl_amplitude: float = None

    def __post_init__(self):
        if self.backend not in ("fd", "galerkin"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.penalty_mode not in ("implicit", "explicit"):
            raise ValueError(f"unknown penalty mode {self.penalty_mode!r}")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if not self.T > 0 or not self.eps > 0:
            raise ValueError("T and eps must be positive")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        if self.backend == "galerkin" and self.penalty_mode == "implicit":
            # the projection has no pointwise resolvent
            object.__setattr__(self, "penalty_mode", "explicit")

    def with_(self, **kw):
        return replace(self, **kw)

    def modes(self, grid):
        return self.galerkin_modes or grid.n_axis // 2

    def stable_dt(self, grid, reg):
        """Largest dt the stability rule admits (before the safety factor)."""
        if self.backend == "fd":
            return cfl_dt(grid, reg, grid.d, self.cfl_amplitude)
        kmax = (self.modes(grid) - 1) // 2
        lam = grid.d * (2 * math.pi * kmax) ** 2
        return 2.0 / (reg.sup_dphi(self.cfl_amplitude) * lam) if lam else math.inf

    def resolve(self, problem):
        """Validate against ``problem`` and return (regularised law, dt, steps)."""
        grid = problem.grid
        reg = build_regularized(problem.law, self.n_reg)
        if self.backend == "galerkin" and self.modes(grid) > grid.n_axis:
            raise ValueError("galerkin_modes exceeds the evaluation grid")
        limit = self.cfl_safety * self.stable_dt(grid, reg)
        dt = limit if self.dt is None else float(self.dt)
        if dt > limit * (1 + 1e-12):
            raise ValueError(f"dt={dt:g} violates the stability limit {limit:g}")
        steps = max(1, math.ceil(self.T / dt - 1e-9))
        dt = self.T / steps
        if self.penalty_mode == "explicit" and dt > self.eps:
            raise ValueError(f"explicit penalty needs dt <= eps, got dt={dt:g}")
        return reg, dt, steps


def cfl_dt(grid, reg, d=None, amplitude=None):
    """h^2 / (2 d sup Phi_n')."""
    d = grid.d if d is None else d
    return grid.h ** 2 / (2 * d * reg.sup_dphi(amplitude))


def resolve_penalty_implicit(rhs, S, dt, eps):
    """Solve u + (dt/eps)(u - S)^+ = rhs pointwise."""
    lam = dt / eps
    rhs = np.asarray(rhs, dtype=float)
    return np.where(rhs <= S, rhs, (rhs + lam * S) / (1.0 + lam))


@dataclass(frozen=True, eq=False)
class StepContext:
    """Everything a single step needs besides the state."""
    grid: object
    reg: object
    forcing: object
    noise: object
    penalty: PenaltyLaw
    dt: float
    penalty_mode: str = "implicit"
    modes: int = None

    @property
    def x1(self):
        return self.grid.coordinates()[0]


def _bcast(v, ndim):
    v = np.asarray(v, dtype=float)
    return v.reshape(v.shape + (1,) * (ndim - v.ndim))


def fd_update(u, t, S, noise_coef, ctx, x1=None):
    """One step on arrays; leading axes of ``u`` are batch axes matching ``S``
    and ``noise_coef`` (= sum_k a_k dW^k)."""
    grid, dt = ctx.grid, ctx.dt
    x1 = ctx.x1 if x1 is None else x1
    S = _bcast(S, u.ndim)
    drift = laplacian_array(ctx.reg.phi_n(u), grid.h, grid.d) + ctx.forcing(t, x1, u)
    rhs = u + dt * drift + ctx.noise.profile(u) * _bcast(noise_coef, u.ndim)
    if ctx.penalty_mode == "implicit":
        return resolve_penalty_implicit(rhs, S, dt, ctx.penalty.eps)
    return rhs - dt * ctx.penalty(u, S)


def step_fd(u, t, S, dW, ctx):
    """Advance a Field by one step given the mode increments ``dW``."""
    with np.errstate(over="ignore", invalid="ignore"):
        out = fd_update(u.values, t, S, ctx.noise.mode_sum(dW), ctx)
    if not np.all(np.isfinite(out)):
        raise SolverDivergence("non-finite state after FD step; check the CFL limit")
    return Field(u.grid, out)


# -- Galerkin ----------------------------------------------------------------

def _axes(d):
    return tuple(range(-d, 0))


def galerkin_mask(grid, modes):
    """Retained wavenumbers |k_i| < modes/2 on every axis."""
    k = np.fft.fftfreq(grid.n_axis, d=1.0 / grid.n_axis)
    keep = np.abs(k) < modes / 2
    mask = keep
    for _ in range(grid.d - 1):
        mask = np.multiply.outer(mask, keep)
    return mask


def laplace_symbol(grid):
    k = np.fft.fftfreq(grid.n_axis, d=1.0 / grid.n_axis)
    k2 = (2 * np.pi * k) ** 2
    sym = -k2
    for _ in range(grid.d - 1):
        sym = np.add.outer(sym, -k2)
    return sym


def project(values, grid, modes):
    """Pi_l applied to physical values."""
    ax = _axes(grid.d)
    return np.fft.ifftn(np.fft.fftn(values, axes=ax) * galerkin_mask(grid, modes), axes=ax).real


def galerkin_update(uh, t, S, noise_coef, ctx, x1=None, mask=None, symbol=None):
    grid, dt = ctx.grid, ctx.dt
    ax = _axes(grid.d)
    x1 = ctx.x1 if x1 is None else x1
    mask = galerkin_mask(grid, ctx.modes) if mask is None else mask
    symbol = laplace_symbol(grid) if symbol is None else symbol
    u = np.fft.ifftn(uh, axes=ax).real
    S = _bcast(S, u.ndim)
    pointwise = ctx.forcing(t, x1, u) - ctx.penalty(u, S)
    stoch = ctx.noise.profile(u) * _bcast(noise_coef, u.ndim)
    incr = dt * (symbol * np.fft.fftn(ctx.reg.phi_n(u), axes=ax)
                 + np.fft.fftn(pointwise, axes=ax)) + np.fft.fftn(stoch, axes=ax)
    return mask * (uh + incr)


def step_galerkin(uh, t, S, dW, ctx):
    """Advance Fourier coefficients (numpy FFT layout on the evaluation grid)."""
    with np.errstate(over="ignore", invalid="ignore"):
        out = galerkin_update(uh, t, S, ctx.noise.mode_sum(dW), ctx)
    if not np.all(np.isfinite(out)):
        raise SolverDivergence("non-finite Galerkin coefficients; reduce dt")
    return out


# -- trajectories --------------------------------------------------------------

@dataclass(eq=False)
class Trajectory:
    problem: Problem
    config: SolverConfig
    reg: object
    dt: float
    steps: int
    times: np.ndarray
    u: np.ndarray
    S: np.ndarray
    stride: int
    seed: int
    noise: object = field(repr=False)
    obstacle: ObstaclePath = field(repr=False)
    diagnostics: dict = field(default_factory=dict)
    failed: str = None

    @property
    def grid(self):
        return self.problem.grid

    @property
    def penalty(self):
        return PenaltyLaw(self.config.eps)

    @property
    def eps(self):
        return self.config.eps

    @property
    def full_cadence(self):
        return self.stride == 1

    @property
    def snapshot_steps(self):
        return np.rint(self.times / self.dt).astype(int)

    @property
    def nu(self):
        S = self.S.reshape((-1,) + (1,) * self.grid.d)
        return self.penalty(self.u, S)

    def noise_coefficients(self):
        """sum_k a_k dW^k_j for every step j."""
        return self.problem.noise.mode_sum(self.noise.increments)

    def field(self, index):
        return Field(self.grid, self.u[index])


def _snapshot_indices(steps, stride):
    idx = list(range(0, steps + 1, stride))
    if idx[-1] != steps:
        idx.append(steps)
    return idx


def run(problem, cfg, seed=0, noise=None):
    """Integrate one path; deterministic given (problem, cfg, seed)."""
    return run_ensemble(problem, cfg, seeds=[seed], noises=None if noise is None else [noise])[0]


def run_ensemble(problem, cfg, seeds=None, noises=None, penalty=None):
    """Integrate several paths together; each path's result is bit-identical to
    its single-path ``run``.  ``penalty`` replaces G_eps in the update (for test
    doubles); stored nu always uses G_eps."""
    reg, dt, steps = cfg.resolve(problem)
    nlaw = problem.noise
    if noises is None:
        noises = [sample_noise(s, dt, steps, nlaw.modes) for s in seeds]
    for nz in noises:
        if nz.steps != steps or not math.isclose(nz.dt, dt, rel_tol=1e-12) or nz.modes != nlaw.modes:
            raise ValueError("noise path does not match the time grid or mode count")
    P = len(noises)
    grid = problem.grid
    nd = grid.d
    wall = time.perf_counter()

    if problem.has_obstacle:
        obstacles = [integrate_obstacle(problem.S0, problem.h_S, nz, nlaw) for nz in noises]
    else:
        obstacles = [ObstaclePath.disabled(steps) for _ in noises]
    S_all = np.stack([ob.values for ob in obstacles])
    coef = np.stack([nlaw.mode_sum(nz.increments) for nz in noises])

    ctx = StepContext(grid, reg, problem.forcing, nlaw, penalty or PenaltyLaw(cfg.eps), dt,
                      cfg.penalty_mode, cfg.modes(grid))
    x1 = ctx.x1
    xi_n = mollified_initial(problem.xi, cfg.n_reg).values
    galerkin = cfg.backend == "galerkin"
    if galerkin:
        mask = galerkin_mask(grid, ctx.modes)
        symbol = laplace_symbol(grid)
        ax = _axes(nd)
        uh = np.broadcast_to(mask * np.fft.fftn(xi_n, axes=ax), (P,) + grid.shape).copy()
        u = np.fft.ifftn(uh, axes=ax).real
    else:
        u = np.broadcast_to(xi_n, (P,) + grid.shape).copy()

    snap_idx = _snapshot_indices(steps, cfg.snapshot_stride)
    snaps = np.empty((len(snap_idx), P) + grid.shape)
    snaps[0] = u
    next_snap = 1
    bound = reg.sup_dphi(cfg.cfl_amplitude)
    peak = float(np.abs(u).max())
    failed = None
    last = steps
    # blow-up is detected below and reported on the trajectory
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(steps):
            t = j * dt
            if galerkin:
                uh = galerkin_update(uh, t, S_all[:, j], coef[:, j], ctx, x1, mask, symbol)
                u = np.fft.ifftn(uh, axes=ax).real
            else:
                u = fd_update(u, t, S_all[:, j], coef[:, j], ctx, x1)
            if not np.all(np.isfinite(u)):
                failed = f"non-finite state at step {j + 1} (t={t + dt:.6g}); CFL violation"
                last = j
                break
            peak = max(peak, float(np.abs(u).max()))
            if next_snap < len(snap_idx) and snap_idx[next_snap] == j + 1:
                snaps[next_snap] = u
                next_snap += 1
    if failed:
        keep = [i for i in snap_idx if i <= last]
        snap_idx = keep
        snaps = snaps[:len(keep)]
    wall = time.perf_counter() - wall

    times = np.array(snap_idx) * dt
    realized = float(reg.dphi_n(peak))
    out = []
    for p, (nz, ob) in enumerate(zip(noises, obstacles)):
        up = snaps[:, p]
        diag = {
            "dt": dt,
            "steps": steps,
            "cfl_bound_dphi": bound,
            "cfl_margin": realized / bound,
            "max_abs_u": float(np.abs(up).max()),
            "min_u": float(up.min()),
            "clamp_count": ob.clamp_count,
            "wall_clock_s": wall / P,
        }
        out.append(Trajectory(problem, cfg, reg, dt, steps, times, up.copy(),
                              ob.values[snap_idx].copy(), cfg.snapshot_stride, nz.seed,
                              nz, ob, diag, failed))
    return out


def weak_residual(traj, phi):
    """|<u(t),phi> - <xi_n,phi> + int <grad Phi_n(u), grad phi> - int <F - nu, phi>
    - sum_k int <sigma^k(u), phi> dW^k| at every step time.

    Deterministic time integrals use the trapezoid rule, the stochastic one the
    Ito (left-point) sum; gradients are central differences.
    """
    if not traj.full_cadence:
        raise ValueError("weak_residual needs a trajectory stored at every step")
    grid = traj.grid
    h, d = grid.h, grid.d
    phi_v = phi.values if isinstance(phi, Field) else np.asarray(phi)
    u = traj.u
    dphi = central_differences(phi_v, h, d)
    dPhi = central_differences(traj.reg.phi_n(u), h, d)
    diff_term = grid_sum(sum(a * b for a, b in zip(dPhi, dphi)), grid)
    x1 = grid.coordinates()[0]
    F = traj.problem.forcing(traj.times.reshape((-1,) + (1,) * d), x1, u)
    src = grid_sum((F - traj.nu) * phi_v, grid)
    stoch = grid_sum(traj.problem.noise.profile(u[:-1]) * phi_v, grid) * traj.noise_coefficients()
    mass = grid_sum(u * phi_v, grid)

    def cumtrap(v):
        out = np.zeros_like(v)
        out[1:] = np.cumsum(0.5 * (v[1:] + v[:-1]) * traj.dt)
        return out

    ito = np.concatenate([[0.0], np.cumsum(stoch)])
    res = mass - mass[0] + cumtrap(diff_term) - cumtrap(src) - ito
    return np.abs(res)
