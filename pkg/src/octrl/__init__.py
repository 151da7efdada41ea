"""Offline continuous-time control from kernel generator regression."""

from .dataset import Dataset, load_dataset, sample_iid, sample_random_policy, save_dataset
from .envs import EnvSpec, builtin, reference_value, rollout
from .errors import DivergenceError, FitError, InputError, LoadError, OctrlError, SimulationError, SolverError
from .fenchel import ActionPenalty, argmax_action, conjugate
from .hjb import DpConfig, HjbSolution, costate_at, policy_at, solve, value_at
from .kernels import KernelSpec
from .world_model import WorldModel, fit, reward_coefficients

__version__ = "0.1.0"

__all__ = [
    "ActionPenalty",
    "Dataset",
    "DivergenceError",
    "DpConfig",
    "EnvSpec",
    "FitError",
    "HjbSolution",
    "InputError",
    "KernelSpec",
    "LoadError",
    "OctrlError",
    "SimulationError",
    "SolverError",
    "WorldModel",
    "argmax_action",
    "builtin",
    "conjugate",
    "costate_at",
    "fit",
    "load_dataset",
    "policy_at",
    "reference_value",
    "reward_coefficients",
    "rollout",
    "sample_iid",
    "sample_random_policy",
    "save_dataset",
    "solve",
    "value_at",
]
