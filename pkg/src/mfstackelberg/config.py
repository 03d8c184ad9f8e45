"""Flat ``key = value`` experiment configuration.

Lines are ``key = value``; ``#`` starts a comment.  Unknown keys are errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .problem import (
    OBJECTIVE_PRESETS,
    ArmijoConfig,
    ProblemSpec,
    constant_control,
    desired_control,
    indicator,
    linear_control,
)


class ConfigError(ValueError):
    pass


REQUIRED_KEYS = ("objective",)

_FLOAT = {"xi_min": 0.0, "xi_max": 2.0, "T": 1.0, "beta": 1.0, "gamma": 1.0, "cfl": 0.95,
          "armijo.sigma_init": 1.0, "armijo.shrink": 0.5, "armijo.c1": 1e-4, "gradcheck.h": 1e-4}
_INT = {"n_xi": 500, "n_t": 100, "max_iter": 100, "armijo.max_backtracks": 40, "particles.n": 10000,
        "particles.samples": 100, "particles.seed": 0, "gradcheck.probes": 10}
_STR = {"objective": "paper", "v0": "t", "g0": "paper", "output_dir": "out", "rel_tol": "auto"}
_LIST = {"sweep.beta": "", "sweep.gamma": "", "sweep.n_xi": "", "sweep.n_t": "", "particles.xi0": ""}
KNOWN_KEYS = set(_FLOAT) | set(_INT) | set(_STR) | set(_LIST)


def parse_float_list(text: str) -> list[float]:
    return [float(x) for x in text.replace(" ", "").split(",") if x]


def parse_int_list(text: str) -> list[int]:
    return [int(x) for x in text.replace(" ", "").split(",") if x]


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def get(self, key):
        return self.values[key]

    # ---- construction -----------------------------------------------------

    @classmethod
    def defaults(cls) -> "ExperimentConfig":
        vals = {}
        vals.update(_FLOAT)
        vals.update(_INT)
        vals.update(_STR)
        vals.update(_LIST)
        return cls(vals)

    @classmethod
    def parse(cls, text: str, require: bool = True) -> "ExperimentConfig":
        cfg = cls.defaults()
        seen = set()
        errors = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                errors.append(f"line {lineno}: expected 'key = value'")
                continue
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in KNOWN_KEYS:
                errors.append(f"line {lineno}: unknown key '{key}'")
                continue
            try:
                cfg.values[key] = _coerce(key, val)
            except ValueError as exc:
                errors.append(f"line {lineno}: bad value for '{key}': {exc}")
                continue
            seen.add(key)
        if require:
            errors.extend(f"missing required key '{k}'" for k in REQUIRED_KEYS if k not in seen)
        if errors:
            raise ConfigError("; ".join(errors))
        cfg.spec()  # validates presets and descriptors
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        return cls.parse(text)

    def with_(self, **changes) -> "ExperimentConfig":
        vals = dict(self.values)
        for k, v in changes.items():
            key = k.replace("__", ".")
            if key not in KNOWN_KEYS:
                raise ConfigError(f"unknown key '{key}'")
            vals[key] = v
        return ExperimentConfig(vals)

    # ---- interpretation -----------------------------------------------------

    def spec(self) -> ProblemSpec:
        v = self.values
        preset = v["objective"]
        if preset not in OBJECTIVE_PRESETS:
            raise ConfigError(f"objective must be one of {sorted(OBJECTIVE_PRESETS)}, got '{preset}'")
        leader, follower, moment = OBJECTIVE_PRESETS[preset]
        n_xi = int(v["n_xi"])
        rel_tol = 1.0 / (100 * n_xi) if v["rel_tol"] == "auto" else float(v["rel_tol"])
        return ProblemSpec(
            xi_min=float(v["xi_min"]), xi_max=float(v["xi_max"]), T=float(v["T"]),
            beta=float(v["beta"]), gamma=float(v["gamma"]),
            leader_obj=leader, follower_obj=follower, moment=moment,
            g0=_density(v["g0"]), n_xi=n_xi, n_t=int(v["n_t"]), cfl=float(v["cfl"]),
            max_iter=int(v["max_iter"]), rel_tol=rel_tol,
            armijo=ArmijoConfig(float(v["armijo.sigma_init"]), float(v["armijo.shrink"]),
                                float(v["armijo.c1"]), int(v["armijo.max_backtracks"])),
            v0=_control(v["v0"]),
        )

    def to_text(self) -> str:
        return "".join(f"{k} = {self.values[k]}\n" for k in sorted(self.values))


def _coerce(key: str, val: str):
    if key in _FLOAT:
        return float(val)
    if key in _INT:
        return int(val)
    if key in _LIST:
        (parse_int_list if key in ("sweep.n_xi", "sweep.n_t") else parse_float_list)(val)
        return val
    if key == "rel_tol" and val != "auto":
        float(val)
    return val


def _control(text: str):
    text = str(text).strip()
    if text == "t":
        return linear_control
    if text == "sin":
        return desired_control
    try:
        return constant_control(float(text))
    except ValueError:
        raise ConfigError(f"v0 must be 't', 'sin' or a number, got '{text}'") from None


def _density(text: str):
    parts = str(text).split()
    if parts == ["paper"]:
        return indicator(0.5, 1.5)
    if parts == ["uniform"]:
        return indicator(float("-inf"), float("inf"))
    if len(parts) == 3 and parts[0] == "indicator":
        return indicator(float(parts[1]), float(parts[2]))
    raise ConfigError(f"g0 must be 'paper', 'uniform' or 'indicator a b', got '{text}'")
