"""Functionals of trajectories: a priori bounds, penalty norms, the Skorokhod
functional, entropy-inequality residuals and pathwise comparisons.

Space integrals are grid sums times h^d.  Time integrals over (0, T) use the
left-rectangle rule on the stored snapshot times, sum_{j<N} f_j (t_{j+1} - t_j);
sup-in-time values are taken over the snapshots.
"""
from dataclasses import asdict, dataclass, fields

import numpy as np

from .coefficients import EntropyTestFn
from .grid import (Field, forward_differences, grid_sum, gradient_sq_pointwise,
                   laplacian_array)


def time_weights(times):
    """Left-rectangle weights: w_j = t_{j+1} - t_j for j < N, w_N = 0."""
    times = np.asarray(times, dtype=float)
    w = np.zeros_like(times)
    w[:-1] = np.diff(times)
    return w


def _space(values, grid):
    return grid_sum(values, grid)


def _spacetime(values, traj):
    return float(np.dot(time_weights(traj.times), _space(values, traj.grid)))


def _obstacle(traj):
    return traj.S.reshape((-1,) + (1,) * traj.grid.d)


def _overshoot(traj):
    return np.maximum(traj.u - _obstacle(traj), 0.0)


def _grad_sq(values, grid):
    return sum(g * g for g in forward_differences(values, grid.h, grid.d))


@dataclass(frozen=True)
class EstimateReport:
    p: float
    sup_l2_p: float            # sup_t ||u||_2^p
    grad_zeta_p: float         # ||grad [[zeta_n]](u)||_{L2(Q_T)}^p
    penalty_l2_p: float        # (1/eps)^{p/2} ||(u-S)+||_{L2(Q_T)}^p
    penalty_l2_norm: float     # ||(u-S)+||_{L2(Q_T)}
    sup_lm1: float             # sup_t ||u||_{m+1}^{m+1}
    penalty_weighted: float    # (1/eps) int int |(u-S)+|^2 |u|^{m-1}
    grad_phi_sq: float         # ||grad Phi_n(u)||_{L2(Q_T)}^2
    penalty_l1: float          # int int G_eps(u, S)
    penalty_l2_scaled: float   # (1/eps^2) ||(u-S)+||_{L2(Q_T)}^2
    penalty_sup_scaled: float  # (1/eps) sup_t int |(u-S)+|^2
    skorokhod: float
    min_u: float
    max_overshoot: float

    def as_dict(self):
        return asdict(self)

    @classmethod
    def names(cls):
        return [f.name for f in fields(cls)]


def apriori_l2_report(traj, p=2.0):
    """(sup_t ||u||_2^p, ||grad [[zeta_n]](u)||^p, (1/eps)^{p/2} ||(u-S)+||^p)."""
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p}")
    grid = traj.grid
    sup_l2 = float(np.max(_space(traj.u ** 2, grid)))
    grad = _spacetime(_grad_sq(traj.reg.zeta_n_bracket(traj.u), grid), traj)
    pen = _spacetime(_overshoot(traj) ** 2, traj)
    return (sup_l2 ** (p / 2), grad ** (p / 2), (pen / traj.eps) ** (p / 2))


def apriori_lm1_report(traj):
    """(sup_t ||u||_{m+1}^{m+1}, (1/eps) int int |(u-S)+|^2 |u|^{m-1})."""
    m = traj.problem.law.m
    u = traj.u
    sup_lm = float(np.max(_space(np.abs(u) ** (m + 1), traj.grid)))
    weighted = _spacetime(_overshoot(traj) ** 2 * np.abs(u) ** (m - 1), traj) / traj.eps
    return (sup_lm, weighted)


def penalty_norms(traj):
    """(int int G_eps, int int |(u-S)+|^2, sup_t int |(u-S)+|^2)."""
    over = _overshoot(traj)
    l1 = _spacetime(over / traj.eps, traj)
    l2 = _spacetime(over ** 2, traj)
    sup = float(np.max(_space(over ** 2, traj.grid)))
    return (l1, l2, sup)


def skorokhod_functional(traj):
    """int int (u - S) nu."""
    u = traj.u
    S = _obstacle(traj)
    nu = traj.nu
    # where S is infinite nu vanishes; avoid inf * 0
    gap = np.where(nu > 0, u - S, 0.0)
    return _spacetime(gap * nu, traj)


def estimate_report(traj, p=2.0):
    l2 = apriori_l2_report(traj, p)
    lm = apriori_lm1_report(traj)
    pl1, pl2, psup = penalty_norms(traj)
    grid = traj.grid
    eps = traj.eps
    gphi = _spacetime(_grad_sq(traj.reg.phi_n(traj.u), grid), traj)
    finite_S = np.isfinite(traj.S)
    over = float(np.max(traj.u[finite_S] - _obstacle(traj)[finite_S])) if finite_S.any() else -np.inf
    return EstimateReport(
        p=float(p), sup_l2_p=l2[0], grad_zeta_p=l2[1], penalty_l2_p=l2[2],
        penalty_l2_norm=float(np.sqrt(pl2)),
        sup_lm1=lm[0], penalty_weighted=lm[1], grad_phi_sq=gphi, penalty_l1=pl1,
        penalty_l2_scaled=pl2 / eps ** 2, penalty_sup_scaled=psup / eps,
        skorokhod=skorokhod_functional(traj), min_u=float(traj.u.min()),
        max_overshoot=over)


def ensemble_mean(reports):
    """Field-wise mean of EstimateReports."""
    names = EstimateReport.names()
    return {k: float(np.mean([getattr(r, k) for r in reports])) for k in names}


# -- entropy inequality -------------------------------------------------------

def _entropy_fields(traj, eta):
    """Per-step integrands of the entropy inequality that do not involve the
    test weights."""
    if not traj.full_cadence:
        raise ValueError("entropy residual needs a trajectory stored at every step")
    grid = traj.grid
    h, d = grid.h, grid.d
    u = traj.u
    law = traj.problem.noise
    val, d1, d2 = eta(u)
    tt = traj.times.reshape((-1,) + (1,) * d)
    F = traj.problem.forcing(tt, grid.coordinates()[0], u)
    return {
        "eta": val,
        "flux": eta.flux_bracket(traj.reg, u),
        "source": d1 * (F - traj.nu),
        "ito": 0.5 * d2 * law.sq_norm(u),
        "dissipation": d2 * gradient_sq_pointwise(traj.reg.zeta_n_bracket(u), h, d),
        "stochastic": d1[:-1] * law.profile(u[:-1]),
    }


def _entropy_assemble(traj, fields_, phi_time, rho_space):
    grid = traj.grid
    rho_v = rho_space.values if hasattr(rho_space, "values") else np.asarray(rho_space)
    pt = np.asarray(phi_time(traj.times), dtype=float)
    E = _space(fields_["eta"] * rho_v, grid)
    w = pt[:-1] * traj.dt

    def tsum(name, weight=rho_v):
        return float(np.dot(w, _space(fields_[name][:-1] * weight, grid)))

    return {
        "lhs": float(-np.sum((pt[1:] - pt[:-1]) * E[1:]) + pt[-1] * E[-1]),
        "initial": float(pt[0] * E[0]),
        "flux": tsum("flux", laplacian_array(rho_v, grid.h, grid.d)),
        "source": tsum("source"),
        "ito": tsum("ito"),
        "dissipation": -tsum("dissipation"),
        "stochastic": float(np.dot(pt[:-1] * _space(fields_["stochastic"] * rho_v, grid),
                                   traj.noise_coefficients())),
    }


def _residual(terms):
    rhs = sum(v for k, v in terms.items() if k != "lhs")
    return terms["lhs"] - rhs


def entropy_terms(traj, eta, phi_time, rho_space):
    """The discrete entropy inequality assembled term by term.

    With phi_j = phi_time(t_j) rho_space and E_j = <eta(u_j), rho_space>, the
    time-derivative side is -sum_{j=1}^N (phi_j - phi_{j-1}) E_j + phi_N E_N,
    a summation by parts of the continuous form which pairs each increment with
    the left-point weight phi_j like the Ito sums.  Space derivatives are the
    grid Laplacian on rho_space and the averaged one-sided squared gradient.
    """
    return _entropy_assemble(traj, _entropy_fields(traj, eta), phi_time, rho_space)


def entropy_residual(traj, eta, phi_time, rho_space):
    """LHS - RHS of the discrete entropy inequality; positive means violation."""
    return _residual(entropy_terms(traj, eta, phi_time, rho_space))


def _time_bump(center, half_width):
    def bump(t):
        z = (np.asarray(t, dtype=float) - center) / half_width
        out = np.zeros_like(z)
        inside = np.abs(z) < 1
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - z[inside] ** 2))
        return out
    return bump


def time_profiles(T):
    """Smooth non-negative time weights compactly supported inside (0, T)."""
    return {
        "early": _time_bump(0.3 * T, 0.25 * T),
        "middle": _time_bump(0.5 * T, 0.4 * T),
        "late": _time_bump(0.7 * T, 0.25 * T),
    }


def space_profiles(grid):
    """Non-negative smooth spatial weights: a constant and low Fourier modes."""
    xs = grid.coordinates()
    out = {"const": Field(grid, np.ones(grid.shape))}
    for k in (1, 2):
        v = np.ones(grid.shape)
        for x in xs:
            v = v * (1.0 + 0.5 * np.cos(2 * np.pi * k * x))
        out[f"cos{k}"] = Field(grid, v)
    return out


def entropy_family(delta, shifts=(0.0, 0.05, 0.2)):
    """eta_delta(r - c) for a few shifts c, plus the mirrored eta_delta(-r)."""
    fam = {f"eta(c={c:g})": EntropyTestFn(delta, c) for c in shifts}
    fam["eta(-r)"] = EntropyTestFn(delta, 0.0, reflect=True)
    return fam


def entropy_scan(traj, delta):
    """Residuals over the fixed (eta, phi_time, rho_space) family."""
    out = {}
    tp = time_profiles(float(traj.times[-1]))
    sp = space_profiles(traj.grid)
    for en, eta in entropy_family(delta).items():
        flds = _entropy_fields(traj, eta)
        for tn, pt in tp.items():
            for sn, rs in sp.items():
                out[(en, tn, sn)] = _residual(_entropy_assemble(traj, flds, pt, rs))
    return out


# -- pathwise comparisons -----------------------------------------------------

def _check_compatible(a, b):
    if a.grid != b.grid:
        raise ValueError("trajectories live on different grids")
    if a.times.shape != b.times.shape or not np.allclose(a.times, b.times, rtol=1e-12, atol=0):
        raise ValueError("trajectories have different snapshot times")


def l1_distance(traj_a, traj_b, t):
    """||u_a(t) - u_b(t)||_1 at the snapshot nearest t."""
    _check_compatible(traj_a, traj_b)
    j = int(np.argmin(np.abs(traj_a.times - t)))
    return float(_space(np.abs(traj_a.u[j] - traj_b.u[j]), traj_a.grid))


def l1_curve(traj_a, traj_b):
    _check_compatible(traj_a, traj_b)
    return _space(np.abs(traj_a.u - traj_b.u), traj_a.grid)


def comparison_check(traj_1, traj_2):
    """(min over Q_T of u_1 - u_2, min over Q_T of u_2) for eps_1 > eps_2."""
    _check_compatible(traj_1, traj_2)
    if traj_1.seed != traj_2.seed or not np.array_equal(traj_1.noise.increments, traj_2.noise.increments):
        raise ValueError("comparison needs both trajectories driven by the same noise path")
    return float(np.min(traj_1.u - traj_2.u)), float(np.min(traj_2.u))
