"""JSON experiment configuration with validation ahead of any computation."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .envs import BUILTIN_ENVS, builtin
from .errors import InputError
from .fenchel import ActionPenalty
from .hjb import DpConfig
from .kernels import KernelSpec

__all__ = ["DataConfig", "EvalConfig", "RatesConfig", "RolloutConfig", "ExperimentConfig", "load_config", "apply_override", "write_config"]

ENV_OVERRIDE_KEYS = {"epsilon", "dt_sim", "horizon"}


@dataclass
class DataConfig:
    """Where the training data comes from.

    ``source`` is ``"generate"`` or ``"file"``. ``seed=None`` falls back to
    the experiment seed.
    """

    source: str = "generate"
    path: Optional[str] = None
    format: Optional[str] = None
    N: int = 200
    sampler: str = "iid"
    h: float = 1e-3
    exact_drift: bool = False
    state_box: Optional[list] = None
    action_box: Optional[list] = None
    episodes: Optional[int] = None
    seed: Optional[int] = None
    reward: str = "env"


@dataclass
class EvalConfig:
    lo: float = -3.0
    hi: float = 3.0
    points: int = 1000
    theta_dot: float = 0.0


@dataclass
class RatesConfig:
    N_list: list = field(default_factory=lambda: [25, 50, 100, 200, 400])
    seeds: list = field(default_factory=lambda: list(range(8)))


@dataclass
class RolloutConfig:
    episodes: int = 50
    horizon: Optional[int] = None
    policy: str = "learned"


_SECTIONS = {"data": DataConfig, "eval": EvalConfig, "rates": RatesConfig, "rollout": RolloutConfig}


@dataclass
class ExperimentConfig:
    """Everything one experiment needs; ``epsilon=None`` and ``penalty=None`` take the env's values."""

    env: str = "ou"
    env_overrides: dict = field(default_factory=dict)
    kernel: dict = field(default_factory=lambda: {"sigma": 1.0})
    gamma: float = 1e-8
    epsilon: Optional[float] = None
    rho: float = 0.0
    dt: float = 0.01
    tol: float = 1e-8
    k_max: int = 1000
    penalty: Optional[dict] = None
    seed: int = 0
    out: str = "out"
    data: DataConfig = field(default_factory=DataConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    rates: RatesConfig = field(default_factory=RatesConfig)
    rollout: RolloutConfig = field(default_factory=RolloutConfig)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = copy.deepcopy(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        for key, sub in _SECTIONS.items():
            if key in d:
                if not isinstance(d[key], dict):
                    raise InputError(f"config section {key!r} must be an object")
                bad = set(d[key]) - {f.name for f in fields(sub)}
                if bad:
                    raise InputError(f"unknown keys in {key!r}: {sorted(bad)}")
                d[key] = sub(**d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    # --- derived objects -------------------------------------------------

    def env_spec(self):
        return builtin(self.env, **self.env_overrides)

    def kernel_spec(self) -> KernelSpec:
        return KernelSpec.from_dict(self.kernel)

    def dp_config(self) -> DpConfig:
        return DpConfig(rho=self.rho, dt=self.dt, tol=self.tol, k_max=self.k_max)

    def action_penalty(self) -> ActionPenalty:
        if self.penalty is None:
            return self.env_spec().penalty
        return ActionPenalty.from_dict(self.penalty)

    def diffusion(self) -> float:
        return self.env_spec().epsilon if self.epsilon is None else float(self.epsilon)

    def data_seed(self) -> int:
        return self.seed if self.data.seed is None else self.data.seed

    def validate(self) -> "ExperimentConfig":
        """Raise :class:`InputError` on the first invalid field."""
        try:
            return self._validate()
        except InputError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise InputError(f"invalid config value: {exc}") from None

    def _validate(self) -> "ExperimentConfig":
        if self.env not in BUILTIN_ENVS:
            raise InputError(f"unknown env {self.env!r}")
        bad = set(self.env_overrides) - ENV_OVERRIDE_KEYS
        if bad:
            raise InputError(f"env_overrides supports {sorted(ENV_OVERRIDE_KEYS)}, got {sorted(bad)}")
        env = self.env_spec()
        self.kernel_spec()
        if not self.gamma > 0:
            raise InputError(f"gamma must be positive, got {self.gamma}")
        if not self.diffusion() >= 0:
            raise InputError(f"epsilon must be nonnegative, got {self.epsilon}")
        self.dp_config()
        pen = self.action_penalty()
        if pen.n_a != env.n_a:
            raise InputError(f"penalty has {pen.n_a} actions, env {self.env!r} has {env.n_a}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise InputError(f"seed must be a nonnegative integer, got {self.seed}")
        d = self.data
        if d.source not in ("generate", "file"):
            raise InputError(f"data.source must be 'generate' or 'file', got {d.source!r}")
        if d.source == "file" and not d.path:
            raise InputError("data.path is required when data.source is 'file'")
        if d.sampler not in ("iid", "random_policy"):
            raise InputError(f"data.sampler must be 'iid' or 'random_policy', got {d.sampler!r}")
        if d.reward not in ("env", "dataset"):
            raise InputError(f"data.reward must be 'env' or 'dataset', got {d.reward!r}")
        if int(d.N) != d.N or d.N < 1:
            raise InputError(f"data.N must be a positive integer, got {d.N}")
        if not d.h > 0:
            raise InputError(f"data.h must be positive, got {d.h}")
        for name in ("state_box", "action_box"):
            box = getattr(d, name)
            if box is None:
                continue
            try:
                lo, hi = (np.asarray(b, dtype=float) for b in box)
                ok = bool(np.all(lo <= hi))
            except (TypeError, ValueError):
                ok = False
            if not ok:
                raise InputError(f"data.{name} must be [lower, upper] with lower <= upper")
        e = self.eval
        if int(e.points) != e.points or e.points < 1 or not e.lo <= e.hi:
            raise InputError("eval needs lo <= hi and a positive integer number of points")
        r = self.rates
        if not r.N_list or any(int(n) != n or n < 1 for n in r.N_list):
            raise InputError("rates.N_list must be a non-empty list of positive integers")
        if not r.seeds or any(int(s) != s or s < 0 for s in r.seeds):
            raise InputError("rates.seeds must be a non-empty list of nonnegative integers")
        ro = self.rollout
        if int(ro.episodes) != ro.episodes or ro.episodes < 1:
            raise InputError("rollout.episodes must be a positive integer")
        if ro.policy not in ("learned", "random", "zero"):
            raise InputError(f"rollout.policy must be learned, random or zero, got {ro.policy!r}")
        return self


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise InputError(f"{path}: top-level JSON value must be an object")
    return ExperimentConfig.from_dict(raw)


def apply_override(config: ExperimentConfig, assignment: str) -> ExperimentConfig:
    """Apply ``dotted.key=value`` where ``value`` is parsed as JSON when possible."""
    if "=" not in assignment:
        raise InputError(f"override {assignment!r} must look like key=value")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    d = config.to_dict()
    node = d
    parts = key.strip().split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise InputError(f"override key {key!r} does not name a config section")
        node = node[p]
    node[parts[-1]] = value
    return ExperimentConfig.from_dict(d)


def write_config(config: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(config.dumps() + "\n")
    return path

