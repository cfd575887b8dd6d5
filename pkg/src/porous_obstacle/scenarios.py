"""Initial data: constants, compactly supported bumps and Barenblatt profiles."""
import numpy as np

from .grid import Field


def periodic_offset(x, c):
    """Signed distance x - c wrapped to [-1/2, 1/2)."""
    return (np.asarray(x, dtype=float) - c + 0.5) % 1.0 - 0.5


def _radius(grid, center, width):
    xs = grid.coordinates()
    cs = np.broadcast_to(np.asarray(center, dtype=float), (grid.d,))
    r2 = sum(periodic_offset(x, c) ** 2 for x, c in zip(xs, cs))
    return np.sqrt(r2) / width


def bump_profile(grid, center=0.5, width=0.25):
    """exp(1 - 1/(1 - r^2)) for r = |x - center| / width < 1, peak value 1."""
    r = _radius(grid, center, width)
    out = np.zeros(grid.shape)
    inside = r < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


def barenblatt(grid, t, m=2.0, C=0.07, center=0.5):
    """Source-type solution of u_t = Delta(u^m) on R^d, evaluated on the torus
    (valid while its support stays inside the unit cell)."""
    d = grid.d
    alpha = d / (d * (m - 1) + 2)
    beta = alpha / d
    k = alpha * (m - 1) / (2 * m * d)
    xs = grid.coordinates()
    r2 = sum(periodic_offset(x, center) ** 2 for x in xs)
    core = np.maximum(C - k * r2 * t ** (-2 * beta), 0.0)
    return t ** (-alpha) * core ** (1.0 / (m - 1))


def barenblatt_radius(t, d=1, m=2.0, C=0.07):
    alpha = d / (d * (m - 1) + 2)
    beta = alpha / d
    k = alpha * (m - 1) / (2 * m * d)
    return np.sqrt(C / k) * t ** beta


def initial_datum(grid, spec, m=2.0):
    """Build xi from a spec dict with key ``kind`` in {constant, bump, barenblatt}.

    constant: value;  bump: amplitude, base, center, width;
    barenblatt: t0, C, center.
    """
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "constant":
        vals = np.full(grid.shape, float(spec.pop("value", 0.0)))
    elif kind == "bump":
        amp = float(spec.pop("amplitude", 0.5))
        base = float(spec.pop("base", 0.0))
        vals = base + amp * bump_profile(grid, spec.pop("center", 0.5), float(spec.pop("width", 0.25)))
    elif kind == "barenblatt":
        vals = barenblatt(grid, float(spec.pop("t0", 0.02)), m, float(spec.pop("C", 0.07)),
                          spec.pop("center", 0.5))
    else:
        raise ValueError(f"xi.kind must be constant, bump or barenblatt, got {kind!r}")
    if spec:
        raise ValueError(f"unknown xi keys for kind {kind!r}: {sorted(spec)}")
    if np.any(vals < 0):
        raise ValueError("xi must be non-negative")
    return Field(grid, vals)
