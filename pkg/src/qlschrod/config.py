"""Run configuration: one JSON document describing grid, potentials, Q, penalisation and solver."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

from .discretization import PotentialSpec, make_grid
from .mountain_pass import SolverConfig
from .nonlinearity import HomogeneousQ
from .penalization import Ball, Box, PenalizedH, choose_a


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


VERIFICATION_DEFAULTS = {"test_functions": 16, "weak_tolerance": 1e-3, "r2_min": 0.99,
                         "tail_fraction": 0.3, "wall_layer": 0.05, "trend_tolerance": 0.10}


def _get(d: dict, path: str):
    cur = d
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur:
            raise ConfigError(f"missing key '{path}'")
        cur = cur[part]
    return cur


def set_path(d: dict, path: str, value) -> None:
    """Set a dotted key, creating intermediate objects."""
    parts = path.split(".")
    cur = d
    for part in parts[:-1]:
        cur = cur.setdefault(part, {})
        if not isinstance(cur, dict):
            raise ConfigError(f"cannot override '{path}': '{part}' is not an object")
    cur[parts[-1]] = value


@dataclass
class RunConfig:
    raw: dict
    text: str = ""
    source: str = "<memory>"
    dimension: int = field(init=False)
    epsilon_list: list = field(init=False)
    seed: int = field(init=False)
    output_dir: str = field(init=False)

    def __post_init__(self):
        d = self.raw
        try:
            self.dimension = int(_get(d, "dimension"))
            self.seed = int(d.get("seed", 0))
            self.output_dir = str(d.get("output_dir", "runs"))
            eps = d.get("epsilon_list", [1.0])
            if not isinstance(eps, list) or not eps:
                raise ConfigError("'epsilon_list' must be a non-empty list")
            self.epsilon_list = [float(e) for e in eps]
            # build every piece once so that errors surface at load time
            self.grid()
            self.potentials()
            self.q()
            self.solver()
            self.verification()
            self.penalized()
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{self.source}: {exc}") from exc
        for e in self.epsilon_list:
            if not 0 < e <= 1:
                raise ConfigError(f"{self.source}: epsilon {e} outside (0, 1]")
        if any(b >= a for a, b in zip(self.epsilon_list, self.epsilon_list[1:])):
            raise ConfigError(f"{self.source}: epsilon_list must be strictly decreasing")

    # loading --------------------------------------------------------------

    @classmethod
    def from_text(cls, text: str, source: str = "<memory>", overrides=()) -> "RunConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{source}: top level must be a JSON object")
        for key, value in overrides:
            set_path(raw, key, value)
        return cls(raw, text, source)

    @classmethod
    def load(cls, path, overrides=()) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        return cls.from_text(text, str(path), overrides)

    def with_overrides(self, overrides) -> "RunConfig":
        raw = copy.deepcopy(self.raw)
        for key, value in overrides:
            set_path(raw, key, value)
        return RunConfig(raw, self.text, self.source)

    # components -----------------------------------------------------------

    def grid(self):
        g = dict(_get(self.raw, "grid"))
        g.setdefault("dimension", self.dimension)
        if int(g["dimension"]) != self.dimension:
            raise ConfigError("grid dimension disagrees with top-level dimension")
        return make_grid(g)

    def potentials(self):
        pots = _get(self.raw, "potentials")
        return PotentialSpec.from_dict(_get(pots, "W")), PotentialSpec.from_dict(_get(pots, "V"))

    def q(self) -> HomogeneousQ:
        return HomogeneousQ.from_dict(_get(self.raw, "nonlinearity"), dimension=self.dimension)

    def omega(self):
        pen = _get(self.raw, "penalization")
        shape = pen.get("omega_shape", "ball")
        radius = float(_get(pen, "omega_radius"))
        if shape == "ball":
            return Ball(radius)
        if shape == "box":
            return Box(radius)
        raise ConfigError(f"unknown omega_shape {shape!r}")

    def a_value(self) -> float:
        a = _get(self.raw, "penalization").get("a", "auto")
        W, V = self.potentials()
        if a == "auto":
            return choose_a(self.q(), W.floor, V.floor)
        a = float(a)
        if not a > 0:
            raise ConfigError("penalization.a must be positive or 'auto'")
        return a

    def penalized(self) -> PenalizedH:
        W, V = self.potentials()
        return PenalizedH(self.q(), self.a_value(), self.omega(), W.floor, V.floor)

    def solver(self) -> SolverConfig:
        block = dict(self.raw.get("solver", {}))
        block["seed"] = self.seed
        return SolverConfig.from_dict(block)

    def verification(self) -> dict:
        out = dict(VERIFICATION_DEFAULTS)
        block = self.raw.get("verification", {})
        unknown = set(block) - set(out)
        if unknown:
            raise ConfigError(f"unknown verification keys: {sorted(unknown)}")
        out.update(block)
        return out

    def echo(self) -> str:
        """The configuration text exactly as read, or canonical JSON if built in memory."""
        return self.text if self.text else json.dumps(self.raw, indent=2, sort_keys=True)
