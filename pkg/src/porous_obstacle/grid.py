"""Uniform periodic grids on the unit torus, discrete operators and mollifiers.

Fields store their values as an ``ndarray`` of shape ``(n_axis,) * d``; the
row-major flattening is the canonical point ordering.  Most operators also
accept arrays with extra leading (batch) axes, acting on the trailing ``d``.
"""
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad

# shape parameter of the bump exp(-a / (r (1 - r))); a = 1 peaks at 2.6 > 2
BUMP_SHAPE = 0.25


@dataclass(frozen=True)
class GridSpec:
    d: int
    n_axis: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"d must be 1 or 2, got {self.d}")
        if self.n_axis < 1:
            raise ValueError(f"n_axis must be positive, got {self.n_axis}")

    @property
    def h(self):
        return 1.0 / self.n_axis

    @property
    def shape(self):
        return (self.n_axis,) * self.d

    @property
    def size(self):
        return self.n_axis ** self.d

    @property
    def cell_volume(self):
        return self.h ** self.d

    def coordinates(self):
        """Coordinate arrays (one per axis), each of shape ``self.shape``."""
        x = np.arange(self.n_axis) * self.h
        return np.meshgrid(*([x] * self.d), indexing="ij")

    def zeros(self):
        return Field(self, np.zeros(self.shape))


@dataclass(frozen=True, eq=False)
class Field:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            if values.size != self.grid.size:
                raise ValueError(
                    f"field has {values.size} values, grid needs {self.grid.size}")
            values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def flat(self):
        return self.values.reshape(-1)

    @classmethod
    def from_function(cls, grid, func):
        return cls(grid, func(*grid.coordinates()))

    def __add__(self, other):
        other = other.values if isinstance(other, Field) else other
        return Field(self.grid, self.values + other)

    def __sub__(self, other):
        other = other.values if isinstance(other, Field) else other
        return Field(self.grid, self.values - other)

    def __mul__(self, other):
        other = other.values if isinstance(other, Field) else other
        return Field(self.grid, self.values * other)

    __rmul__ = __mul__

    def integral(self):
        return float(self.values.sum() * self.grid.cell_volume)


# -- array-level kernels (act on the trailing d axes) -----------------------

def laplacian_array(values, h, d):
    axes = range(values.ndim - d, values.ndim)
    out = np.zeros_like(values, dtype=float)
    # differences first, so constants map to exactly zero
    for ax in axes:
        out = out + (np.roll(values, 1, axis=ax) - values) + (np.roll(values, -1, axis=ax) - values)
    return out / (h * h)


def forward_differences(values, h, d):
    """Forward differences ``(f_{i+e} - f_i)/h``, one array per axis."""
    axes = range(values.ndim - d, values.ndim)
    return [(np.roll(values, -1, axis=ax) - values) / h for ax in axes]


def central_differences(values, h, d):
    axes = range(values.ndim - d, values.ndim)
    return [(np.roll(values, -1, axis=ax) - np.roll(values, 1, axis=ax)) / (2 * h)
            for ax in axes]


def gradient_sq_pointwise(values, h, d):
    """Squared gradient at each node, averaging forward and backward differences.

    Summed over the grid this equals the forward-difference seminorm exactly;
    pointwise it is centred, so weighted sums are second-order accurate.
    """
    fwd = forward_differences(values, h, d)
    axes = range(values.ndim - d, values.ndim)
    out = np.zeros_like(values)
    for g, ax in zip(fwd, axes):
        out += 0.5 * (g * g + np.roll(g * g, 1, axis=ax))
    return out


def grid_sum(values, grid):
    """Quadrature over the torus, keeping any leading batch axes."""
    axes = tuple(range(values.ndim - grid.d, values.ndim))
    return values.sum(axis=axes) * grid.cell_volume


# -- Field-level operations -------------------------------------------------

def laplacian(f):
    return Field(f.grid, laplacian_array(f.values, f.grid.h, f.grid.d))


def gradient_sq_integral(f):
    """Discrete H^1 seminorm squared, with forward differences."""
    g = forward_differences(f.values, f.grid.h, f.grid.d)
    return float(sum((gi * gi).sum() for gi in g) * f.grid.cell_volume)


def lp_norm(f, p):
    if p < 1:
        raise ValueError(f"lp_norm needs p >= 1, got {p}")
    vals = f.values if isinstance(f, Field) else np.asarray(f)
    vol = f.grid.cell_volume
    return float((np.abs(vals) ** p).sum() * vol) ** (1.0 / p)


# -- mollifier ----------------------------------------------------------------

def _raw_bump(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = (r > 0.0) & (r < 1.0)
    ri = r[inside]
    out[inside] = np.exp(-BUMP_SHAPE / (ri * (1.0 - ri)))
    return out


@lru_cache(maxsize=None)
def _bump_mass():
    return quad(lambda r: float(_raw_bump(r)), 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)[0]


def rho(r):
    """Smooth bump supported in (0, 1), integrating to one, valued in [0, 2]."""
    return _raw_bump(r) / _bump_mass()


def rho_theta(r, theta):
    return rho(np.asarray(r, dtype=float) / theta) / theta


@lru_cache(maxsize=4)
def rho_primitives(n_table=2 ** 17):
    """Tabulated ``P1(s) = int_0^s rho`` and ``P2(s) = int_0^s P1`` on [0, 1]."""
    s = np.linspace(0.0, 1.0, n_table + 1)
    p1 = cumulative_trapezoid(rho(s), s, initial=0.0)
    p1 /= p1[-1]
    p2 = cumulative_trapezoid(p1, s, initial=0.0)
    return s, p1, p2


@dataclass(frozen=True)
class MollifierSpec:
    theta: float

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"mollifier width must be positive, got {self.theta}")

    def kernel(self, h):
        """Sampled 1-D kernel weights at offsets j*h, j = 0..J, normalised so
        that ``sum(w) * h == 1``.  Returns None when no sample is interior."""
        j_max = math.ceil(self.theta / h)
        offsets = np.arange(j_max + 1) * h
        w = rho_theta(offsets, self.theta)
        if not np.any(w > 0):
            return None
        return w / (w.sum() * h)


def mollify(f, spec):
    """Periodic convolution with the tensor-product kernel ``rho_theta^{(x)d}``."""
    grid = f.grid
    w = spec.kernel(grid.h)
    if w is None:
        warnings.warn(
            f"mollifier width {spec.theta:g} does not resolve grid spacing "
            f"{grid.h:g}; returning the field unchanged", RuntimeWarning, stacklevel=2)
        return Field(grid, f.values.copy())
    vals = f.values
    for ax in range(grid.d):
        acc = np.zeros_like(vals)
        for j, wj in enumerate(w):
            if wj > 0:
                acc += (wj * grid.h) * np.roll(vals, j, axis=ax)
        vals = acc
    return Field(grid, vals)
