"""Scalar coefficient laws: porous-medium nonlinearity, its regularisation,
forcing, multiplicative noise, penalty and the entropy test functions."""
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .grid import Field, MollifierSpec, mollify, rho_primitives, rho

# Gauss-Legendre rule used for the short non-closed-form pieces
_GL_X, _GL_W = np.polynomial.legendre.leggauss(40)


def _gauss_legendre(func, lo, hi):
    """Vectorised integral of ``func`` over [lo, hi] (elementwise endpoints)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    mid = 0.5 * (hi + lo)
    half = 0.5 * (hi - lo)
    acc = np.zeros(np.broadcast(mid, half).shape)
    # node by node keeps memory at the size of the input
    for x, w in zip(_GL_X, _GL_W):
        acc = acc + w * func(mid + half * x)
    return half * acc


def bracket(g, r, tol=1e-10):
    """The primitive ``int_0^r g(s) ds`` by adaptive quadrature."""
    val, _ = quad(lambda s: float(g(s)), 0.0, float(r), epsabs=tol, epsrel=tol, limit=200)
    if not math.isfinite(val):
        raise ValueError("non-finite integrand in bracket")
    return val


@dataclass(frozen=True)
class PorousLaw:
    """Phi(r) = |r|^{m-1} r."""
    m: float = 2.0
    K: float = 1.0

    def __post_init__(self):
        if not self.m > 1:
            raise ValueError(f"porous exponent must exceed 1, got {self.m}")
        if self.K < 1:
            raise ValueError(f"structure constant K must be >= 1, got {self.K}")

    def phi(self, r):
        r = np.asarray(r, dtype=float)
        return np.abs(r) ** (self.m - 1) * r

    def zeta(self, r):
        return math.sqrt(self.m) * np.abs(np.asarray(r, dtype=float)) ** ((self.m - 1) / 2)

    def dzeta(self, r):
        """zeta'(r) for r > 0."""
        m = self.m
        return math.sqrt(m) * (m - 1) / 2 * np.asarray(r, dtype=float) ** ((m - 3) / 2)

    def zeta_bracket(self, r):
        r = np.asarray(r, dtype=float)
        m = self.m
        return np.sign(r) * (2 * math.sqrt(m) / (m + 1)) * np.abs(r) ** ((m + 1) / 2)

    def zeta_inverse(self, z):
        """The r >= 0 with zeta(r) = z."""
        return (z / math.sqrt(self.m)) ** (2.0 / (self.m - 1))


def smooth_max(a, b, band):
    """C^1 maximum: equal to max(a, b) when |a - b| >= band, convex, >= max(a, b)."""
    diff = np.asarray(a, dtype=float) - b
    # the blend only applies inside the band; clipping keeps huge inputs from overflowing
    mid = b + (np.clip(diff, -band, band) + band) ** 2 / (4 * band)
    return np.where(diff <= -band, b, np.where(diff >= band, a, mid))


def smooth_min(a, b, band):
    return -smooth_max(-np.asarray(a, dtype=float), -b, band)


@dataclass(frozen=True, eq=False)
class RegularizedLaw:
    """Non-degenerate surrogate with zeta_n >= 2/n and |zeta - zeta_n| <= 4/n on [-n, n].

    ``zeta_n(r) = smax(2/n, zeta(smin(|r|, n)))`` where smax/smin are C^1
    quadratic blends of width ``1/(2n)`` (in zeta) and ``1/(4n)`` (in r).
    ``Phi_n`` and ``[[zeta_n]]`` are odd primitives, evaluated piecewise:
    closed form on the flat and power pieces, Gauss-Legendre on the blends.
    """
    base: PorousLaw
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"regularisation level must be >= 1, got {self.n}")

    @property
    def floor(self):
        return 2.0 / self.n

    @property
    def zeta_band(self):
        return 0.5 / self.n

    @property
    def cap_band(self):
        return 0.25 / self.n

    def _capped(self, rho_):
        return smooth_min(rho_, float(self.n), self.cap_band)

    def zeta_n(self, r):
        rho_ = np.abs(np.asarray(r, dtype=float))
        return smooth_max(self.base.zeta(self._capped(rho_)), self.floor, self.zeta_band)

    def dphi_n(self, r):
        z = self.zeta_n(r)
        return z * z

    def sup_dphi(self, amplitude=None):
        """sup of Phi_n' over |r| <= amplitude (all of R when None)."""
        if amplitude is None or amplitude >= self.n + self.cap_band:
            return float(self.dphi_n(self.n + self.cap_band))
        return float(self.dphi_n(amplitude))

    @cached_property
    def _pieces(self):
        base, n = self.base, self.n
        lo_z, hi_z = self.floor - self.zeta_band, self.floor + self.zeta_band
        cap_lo, cap_hi = n - self.cap_band, n + self.cap_band
        bounds = {0.0, cap_lo, cap_hi}
        for z in (lo_z, hi_z):
            r_raw = base.zeta_inverse(z)
            if r_raw <= cap_lo:
                bounds.add(r_raw)
            elif r_raw < n:
                # crossing sits inside the cap blend; invert smin numerically
                bounds.add(brentq(lambda s: float(self._capped(s)) - r_raw, cap_lo, cap_hi,
                                  xtol=1e-15))
        left = np.array(sorted(bounds))
        kinds = []
        for i, a in enumerate(left):
            b = left[i + 1] if i + 1 < len(left) else a + 1.0
            mid = 0.5 * (a + b)
            if mid >= cap_hi:
                kinds.append("const")
            elif mid > cap_lo:
                kinds.append("gl")
            else:
                z = float(base.zeta(mid))
                kinds.append("const" if z <= lo_z else "power" if z >= hi_z else "gl")
        cum = {1: np.zeros(len(left)), 2: np.zeros(len(left))}
        for power in (1, 2):
            for i in range(len(left) - 1):
                cum[power][i + 1] = cum[power][i] + self._piece_integral(
                    kinds[i], power, np.array(left[i]), np.array(left[i + 1]))
        return left, kinds, cum

    def _piece_integral(self, kind, power, a, b):
        if kind == "const":
            z = self.zeta_n(a)
            return (z ** power) * (b - a)
        if kind == "power":
            m = self.base.m
            if power == 2:
                return b ** m - a ** m
            c = 2 * math.sqrt(m) / (m + 1)
            return c * (b ** ((m + 1) / 2) - a ** ((m + 1) / 2))
        return _gauss_legendre(lambda s: self.zeta_n(s) ** power, a, b)

    def _primitive(self, r, power):
        r = np.asarray(r, dtype=float)
        shape = r.shape
        r = r.reshape(-1)
        rho_ = np.abs(r)
        left, kinds, cum = self._pieces
        idx = np.searchsorted(left, rho_, side="right") - 1
        out = cum[power][idx].astype(float)
        for i, kind in enumerate(kinds):
            sel = idx == i
            if not np.any(sel):
                continue
            a = np.full(np.count_nonzero(sel), left[i])
            out[sel] += self._piece_integral(kind, power, a, rho_[sel])
        return (np.sign(r) * out).reshape(shape)

    def phi_n(self, r):
        return self._primitive(r, 2)

    def zeta_n_bracket(self, r):
        return self._primitive(r, 1)


def build_regularized(base, n):
    return RegularizedLaw(base, int(n))


@dataclass(frozen=True)
class ForcingLaw:
    N0: float = 0.5
    K: float = 1.0
    kappa: float = 0.25
    kind: str = "linear"

    def __post_init__(self):
        if self.kind not in ("linear", "linear_plus_spatial"):
            raise ValueError(f"unknown forcing kind {self.kind!r}")
        if not 0 < self.kappa <= 0.5:
            raise ValueError(f"kappa must lie in (0, 1/2], got {self.kappa}")
        if self.N0 < 0:
            raise ValueError("N0 must be non-negative")

    def spatial_profile(self, x):
        """b(x) = |sin(2 pi x_1)|^kappa, a kappa-Hoelder function valued in [0, 1]."""
        return np.abs(np.sin(2 * np.pi * np.asarray(x, dtype=float))) ** self.kappa

    def __call__(self, t, x, r):
        r = np.asarray(r, dtype=float)
        out = self.N0 * r
        if self.kind == "linear_plus_spatial":
            out = out + self.K * self.spatial_profile(x) * np.minimum(np.abs(r), 1.0) * np.sign(r)
        return out


def forcing(law, t, x, r):
    return law(t, x, r)


@dataclass(frozen=True)
class NoiseLaw:
    """sigma^k(r) = a_k g(r) with g(r) = r (linear) or sign(r) max(|r|, |r|^{1/2+kappa})."""
    amplitudes: tuple = ()
    kind: str = "linear"
    K: float = 1.0
    kappa: float = 0.25

    def __post_init__(self):
        if self.kind not in ("linear", "holder"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if len(self.amplitudes) < 1:
            raise ValueError("noise law needs at least one mode")
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in self.amplitudes))

    @classmethod
    def geometric(cls, amplitude, modes=8, kind="linear", K=1.0, kappa=0.25):
        """Amplitudes a_k = amplitude * 2^{-k/2}, k = 1..modes."""
        a = tuple(amplitude * 2.0 ** (-k / 2) for k in range(1, modes + 1))
        return cls(a, kind, K, kappa)

    @property
    def modes(self):
        return len(self.amplitudes)

    @cached_property
    def a(self):
        return np.array(self.amplitudes)

    @property
    def l2_amplitude(self):
        return float(np.sqrt((self.a ** 2).sum()))

    @property
    def is_zero(self):
        return not np.any(self.a)

    def profile(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "linear":
            return r
        ar = np.abs(r)
        return np.sign(r) * np.maximum(ar, ar ** (0.5 + self.kappa))

    def sigma(self, r):
        """All modes, shape ``(modes,) + shape(r)``."""
        g = self.profile(r)
        return self.a.reshape((-1,) + (1,) * g.ndim) * g

    def mode_sum(self, dW):
        """sum_k a_k dW^k over the trailing axis, accumulated in mode order so the
        result does not depend on how many rows are processed together."""
        dW = np.asarray(dW, dtype=float)
        out = np.zeros(dW.shape[:-1])
        for k, ak in enumerate(self.amplitudes):
            out = out + ak * dW[..., k]
        return out

    def combine(self, r, dW):
        """sum_k sigma^k(r) dW^k.  ``dW`` has shape (..., modes) with leading axes
        matching the leading (batch) axes of ``r``."""
        coef = self.mode_sum(dW)
        g = self.profile(r)
        coef = np.reshape(coef, np.shape(coef) + (1,) * (g.ndim - np.ndim(coef)))
        return g * coef

    def sq_norm(self, r):
        g = self.profile(r)
        return (self.a @ self.a) * g * g


def sigma_apply(law, r):
    return law.sigma(r)


@dataclass(frozen=True)
class PenaltyLaw:
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"penalty parameter must be positive, got {self.eps}")

    def __call__(self, r, s):
        diff = np.asarray(r, dtype=float) - s
        return np.maximum(diff, 0.0) / self.eps


def penalty(law, r, s):
    return law(r, s)


@dataclass(frozen=True)
class EntropyTestFn:
    """eta(r) = eta_delta(sign * (r - shift)) with eta_delta'' = rho_delta.

    ``reflect=True`` gives the mirrored family eta_delta(-(r - shift)).
    """
    delta: float
    shift: float = 0.0
    reflect: bool = False

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    @property
    def sign(self):
        return -1.0 if self.reflect else 1.0

    def base(self, s):
        """(eta_delta, eta_delta', eta_delta'') at s."""
        s = np.asarray(s, dtype=float)
        d = self.delta
        _, p1, p2 = rho_primitives()
        # the table is uniform on [0, 1], so locate the cell arithmetically
        pos = np.clip(s / d, 0.0, 1.0) * (len(p1) - 1)
        i = np.minimum(pos.astype(np.intp), len(p1) - 2)
        w = pos - i
        d1 = p1[i] + w * (p1[i + 1] - p1[i])
        val = d * (p2[i] + w * (p2[i + 1] - p2[i])) + np.maximum(s - d, 0.0)
        d2 = rho(s / d) / d
        return val, d1, d2

    def __call__(self, r):
        sg = self.sign
        v, d1, d2 = self.base(sg * (np.asarray(r, dtype=float) - self.shift))
        return v, sg * d1, d2

    def flux_bracket(self, reg, r):
        """[[zeta_n^2 eta']](r) = int_0^r Phi_n'(s) eta'(s) ds."""
        r = np.asarray(r, dtype=float)
        return self._antiderivative(reg, r) - self._antiderivative(reg, np.zeros(()))

    def _antiderivative(self, reg, x):
        # int_c^x Phi_n' eta', c = shift; eta' vanishes on one side of c
        c, d = self.shift, self.delta
        x = np.asarray(x, dtype=float)

        def integrand(s):
            return reg.dphi_n(s) * self(s)[1]

        # Phi_n' is only C^1 at the piece boundaries, so split the ramp there
        left = reg._pieces[0]
        kinks = np.concatenate([left, -left])

        def ramp_integral(lo, hi):
            if lo.size == 0:
                return np.zeros(lo.shape)
            a, b = float(np.min(lo)), float(np.max(hi))
            cuts = np.concatenate([[a], np.sort(kinks[(kinks > a) & (kinks < b)]), [b]])
            acc = np.zeros(np.broadcast(lo, hi).shape)
            for p, q in zip(cuts[:-1], cuts[1:]):
                acc = acc + _gauss_legendre(integrand, np.clip(lo, p, q), np.clip(hi, p, q))
            return acc

        # quadrature only where x lies inside the ramp; elsewhere the ramp is 0 or full
        if not self.reflect:
            inside = (x > c) & (x < c + d)
            ramp = np.where(x >= c + d, ramp_integral(np.array(c), np.array(c + d)), 0.0)
            ramp[inside] = ramp_integral(np.full(inside.sum(), c), x[inside])
            tail = np.where(x > c + d, reg.phi_n(x) - reg.phi_n(c + d), 0.0)
            return ramp + tail
        inside = (x > c - d) & (x < c)
        ramp = np.where(x <= c - d, -ramp_integral(np.array(c - d), np.array(c)), 0.0)
        ramp[inside] = -ramp_integral(x[inside], np.full(inside.sum(), c))
        tail = np.where(x < c - d, reg.phi_n(c - d) - reg.phi_n(x), 0.0)
        return ramp + tail


def eta_delta(fn, r):
    return fn(r)


def mollified_initial(xi, n):
    """Clamp to [-n, n], then mollify at width 1/n."""
    if n < 1:
        raise ValueError("regularisation level must be >= 1")
    clamped = Field(xi.grid, np.clip(xi.values, -n, n))
    return mollify(clamped, MollifierSpec(1.0 / n))
