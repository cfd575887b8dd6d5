"""Seeded Wiener increments and the Euler-Maruyama obstacle path."""
import math
from dataclasses import dataclass, field

import numpy as np


def _mode_generator(seed, k):
    # mode k always draws from the child with spawn key (k,), whatever the mode count
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(k),))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True, eq=False)
class NoisePath:
    seed: int
    dt: float
    steps: int
    modes: int
    increments: np.ndarray = field(repr=False)

    @property
    def times(self):
        return np.arange(self.steps + 1) * self.dt

    def coarsen(self, factor):
        """Same Brownian path observed on a grid ``factor`` times coarser."""
        factor = int(factor)
        if factor < 1 or self.steps % factor:
            raise ValueError(f"cannot coarsen {self.steps} steps by {factor}")
        inc = self.increments.reshape(self.steps // factor, factor, self.modes).sum(axis=1)
        return NoisePath(self.seed, self.dt * factor, self.steps // factor, self.modes, inc)

    def brownian(self):
        """W^k at the grid times, shape (steps + 1, modes)."""
        out = np.zeros((self.steps + 1, self.modes))
        np.cumsum(self.increments, axis=0, out=out[1:])
        return out


def sample_noise(seed, dt, steps, modes):
    if not dt > 0:
        raise ValueError("dt must be positive")
    if steps < 1 or modes < 1:
        raise ValueError("noise path needs at least one step and one mode")
    inc = np.empty((steps, modes))
    scale = math.sqrt(dt)
    for k in range(modes):
        inc[:, k] = scale * _mode_generator(seed, k).standard_normal(steps)
    return NoisePath(int(seed), float(dt), int(steps), int(modes), inc)


@dataclass(frozen=True, eq=False)
class ObstaclePath:
    values: np.ndarray
    S0: float
    h_S: float
    clamp_count: int = 0

    @property
    def enabled(self):
        return bool(np.isfinite(self.S0))

    @classmethod
    def disabled(cls, steps):
        return cls(np.full(steps + 1, np.inf), math.inf, 0.0, 0)


def integrate_obstacle(S0, h_S, noise, law):
    """S_{j+1} = max(0, S_j + h_S dt + sum_k sigma^k(S_j) dW^k_j)."""
    if S0 < 0:
        raise ValueError(f"obstacle must start non-negative, got S0={S0}")
    if h_S < 0:
        raise ValueError(f"obstacle drift must be non-negative, got h_S={h_S}")
    coef = law.mode_sum(noise.increments)
    holder = law.kind == "holder"
    expo = 0.5 + law.kappa
    S = np.empty(noise.steps + 1)
    S[0] = s = float(S0)
    drift = h_S * noise.dt
    clamps = 0
    for j in range(noise.steps):
        g = max(s, s ** expo) if holder else s
        s = s + drift + g * coef[j]
        if s < 0.0:
            s = 0.0
            clamps += 1
        S[j + 1] = s
    return ObstaclePath(S, float(S0), float(h_S), clamps)
