"""Experiment configuration: TOML ingestion, validation and hashing."""
import copy
import hashlib
import json
import sys
import warnings
from dataclasses import dataclass

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .coefficients import ForcingLaw, NoiseLaw, PorousLaw
from .grid import GridSpec
from .scenarios import initial_datum
from .solver import Problem, SolverConfig


class ConfigError(ValueError):
    """Validation failure; the message starts with the offending dotted key."""


DEFAULTS = {
    "problem": {
        "m": 2.0, "K": 1.0, "N0": 0.5, "kappa": 0.25, "forcing": "linear",
        "noise": "linear", "noise_amplitude": 0.5, "noise_modes": 8,
        "noise_amplitudes": None, "xi": {"kind": "bump", "amplitude": 0.5},
        "obstacle": True, "S0": None, "h_S": 0.0, "T": 0.5,
    },
    "discretization": {
        "d": 1, "n_axis": 64, "dt": "auto", "backend": "fd", "snapshot_stride": 10,
        "cfl_safety": 0.5, "cfl_amplitude": None, "penalty_mode": "implicit",
        "galerkin_modes": None,
    },
    "penalty": {"eps": [0.1], "n_reg": [16]},
    "monte_carlo": {"paths": 4, "seed": 0, "common_noise": True, "p": 2.0},
    "output": {"directory": "out", "formats": ["jsonl", "csv", "plots"]},
    "sweep": {"parameter": None, "values": []},
    "compare": {"mode": "eps", "eps1": 0.2, "eps2": 0.05, "xi_perturbation": 0.1},
}
FORMATS = {"jsonl", "csv", "plots"}
SWEEPABLE = ("eps", "n_reg", "n_axis", "dt")


def _merge(raw):
    cfg = copy.deepcopy(DEFAULTS)
    for block, body in raw.items():
        if block not in cfg:
            raise ConfigError(f"{block}: unknown block (expected one of {sorted(cfg)})")
        if not isinstance(body, dict):
            raise ConfigError(f"{block}: must be a table")
        for key, val in body.items():
            if key not in cfg[block]:
                raise ConfigError(f"{block}.{key}: unknown key")
            cfg[block][key] = val
    return cfg


def _need(cond, key, msg):
    if not cond:
        raise ConfigError(f"{key}: {msg}")


@dataclass
class ExperimentConfig:
    raw: dict
    source: str = None

    @classmethod
    def from_dict(cls, raw, source=None):
        cfg = cls(_merge(raw), source)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            try:
                raw = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(raw, str(path))

    def __getitem__(self, block):
        return self.raw[block]

    # -- building blocks --------------------------------------------------

    @property
    def grid(self):
        disc = self["discretization"]
        return GridSpec(int(disc["d"]), int(disc["n_axis"]))

    def noise_law(self):
        pb = self["problem"]
        if pb["noise"] == "none":
            return NoiseLaw.geometric(0.0, int(pb["noise_modes"]), "linear", pb["K"], pb["kappa"])
        if pb["noise_amplitudes"] is not None:
            return NoiseLaw(tuple(pb["noise_amplitudes"]), pb["noise"], pb["K"], pb["kappa"])
        return NoiseLaw.geometric(float(pb["noise_amplitude"]), int(pb["noise_modes"]),
                                  pb["noise"], pb["K"], pb["kappa"])

    def problem(self, grid=None, xi_extra=None):
        pb = self["problem"]
        grid = grid or self.grid
        law = PorousLaw(float(pb["m"]), float(pb["K"]))
        xi = initial_datum(grid, pb["xi"], law.m)
        if xi_extra is not None:
            xi = xi + xi_extra(grid)
        S0 = None
        if pb["obstacle"]:
            S0 = float(xi.values.max()) if pb["S0"] is None else float(pb["S0"])
        return Problem(grid, law,
                       ForcingLaw(float(pb["N0"]), float(pb["K"]), float(pb["kappa"]), pb["forcing"]),
                       self.noise_law(), xi, S0, float(pb["h_S"]))

    def solver_config(self, eps, n_reg, **over):
        disc = self["discretization"]
        dt = disc["dt"]
        kw = dict(
            T=float(self["problem"]["T"]), eps=float(eps), n_reg=int(n_reg),
            backend=disc["backend"], dt=None if dt == "auto" else float(dt),
            cfl_safety=float(disc["cfl_safety"]), penalty_mode=disc["penalty_mode"],
            galerkin_modes=disc["galerkin_modes"], snapshot_stride=int(disc["snapshot_stride"]),
            cfl_amplitude=None if disc["cfl_amplitude"] is None else float(disc["cfl_amplitude"]),
        )
        kw.update(over)
        return SolverConfig(**kw)

    def legs(self):
        """(eps, n_reg) pairs of the penalty block."""
        pen = self["penalty"]
        return [(float(e), int(n)) for e in pen["eps"] for n in pen["n_reg"]]

    # -- validation ---------------------------------------------------------

    def validate(self):
        pb, disc, pen = self["problem"], self["discretization"], self["penalty"]
        mc, out = self["monte_carlo"], self["output"]
        _need(disc["d"] in (1, 2), "discretization.d", "must be 1 or 2")
        _need(isinstance(disc["n_axis"], int) and disc["n_axis"] >= 4, "discretization.n_axis",
              "must be an integer >= 4")
        _need(disc["backend"] in ("fd", "galerkin"), "discretization.backend", "must be fd or galerkin")
        _need(disc["dt"] == "auto" or (isinstance(disc["dt"], (int, float)) and disc["dt"] > 0),
              "discretization.dt", "must be 'auto' or a positive number")
        _need(isinstance(disc["snapshot_stride"], int) and disc["snapshot_stride"] >= 1,
              "discretization.snapshot_stride", "must be a positive integer")
        _need(0 < disc["cfl_safety"] <= 1, "discretization.cfl_safety", "must lie in (0, 1]")
        _need(pb["m"] > 1, "problem.m", "must exceed 1")
        _need(pb["K"] >= 1, "problem.K", "must be >= 1")
        _need(0 < pb["kappa"] <= 0.5, "problem.kappa", "must lie in (0, 1/2]")
        _need(pb["N0"] >= 0, "problem.N0", "must be non-negative")
        _need(pb["noise"] in ("linear", "holder", "none"), "problem.noise",
              "must be linear, holder or none")
        _need(pb["forcing"] in ("linear", "linear_plus_spatial"), "problem.forcing",
              "must be linear or linear_plus_spatial")
        _need(pb["T"] > 0, "problem.T", "must be positive")
        _need(pb["h_S"] >= 0, "problem.h_S", "obstacle drift must be non-negative")
        _need(isinstance(pen["eps"], list) and pen["eps"] and all(e > 0 for e in pen["eps"]),
              "penalty.eps", "must be a non-empty list of positive numbers")
        _need(isinstance(pen["n_reg"], list) and pen["n_reg"]
              and all(isinstance(n, int) and n >= 1 for n in pen["n_reg"]),
              "penalty.n_reg", "must be a non-empty list of positive integers")
        _need(isinstance(mc["paths"], int) and mc["paths"] >= 1, "monte_carlo.paths",
              "must be a positive integer")
        _need(isinstance(mc["seed"], int) and 0 <= mc["seed"] < 2 ** 64, "monte_carlo.seed",
              "must be an unsigned 64-bit integer")
        _need(set(out["formats"]) <= FORMATS, "output.formats", f"entries must be in {sorted(FORMATS)}")
        try:
            problem = self.problem()
        except ConfigError:
            raise
        except ValueError as exc:
            msg = str(exc)
            key = "problem.S0" if "obstacle" in msg else "problem.xi"
            raise ConfigError(f"{key}: {msg}") from None
        if problem.has_obstacle and not problem.noise.is_zero and problem.noise.profile(problem.S0) != 0:
            warnings.warn(
                f"problem.S0: sigma(S0) != 0, so the obstacle is a stochastic path driven by the "
                f"same noise; a constant positive barrier needs a noise law vanishing at S0",
                UserWarning, stacklevel=2)
        for eps, n in self.legs():
            try:
                self.solver_config(eps, n).resolve(problem)
            except ValueError as exc:
                raise ConfigError(f"discretization: {exc} (eps={eps}, n_reg={n})") from None
        sw = self["sweep"]
        if sw["parameter"] is not None:
            _need(sw["parameter"] in SWEEPABLE, "sweep.parameter", f"must be one of {SWEEPABLE}")
            vals = sw["values"]
            _need(isinstance(vals, list) and len(vals) >= 3 and all(v > 0 for v in vals),
                  "sweep.values", "needs at least 3 positive points")
            _need(len(set(vals)) == len(vals), "sweep.values", "points must be distinct")
        cmp_ = self["compare"]
        _need(cmp_["mode"] in ("eps", "xi"), "compare.mode", "must be eps or xi")
        _need(cmp_["eps1"] > 0 and cmp_["eps2"] > 0, "compare.eps1", "must be positive")
        _need(cmp_["xi_perturbation"] >= 0, "compare.xi_perturbation", "must be non-negative")

    # -- identity -------------------------------------------------------------

    def semantic(self):
        """Everything that affects results (the output block does not)."""
        return {k: v for k, v in self.raw.items() if k != "output"}

    def hash(self):
        blob = json.dumps(_normalise(self.semantic()), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, **blocks):
        raw = copy.deepcopy(self.raw)
        for block, kv in blocks.items():
            raw[block].update(kv)
        return ExperimentConfig.from_dict(raw, self.source)


def _normalise(obj):
    # ints and floats with equal value hash the same
    if isinstance(obj, dict):
        return {k: _normalise(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalise(v) for v in obj]
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (int, float, np.integer, np.floating)):
        return float(obj)
    return obj

