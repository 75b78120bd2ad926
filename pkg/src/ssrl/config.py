"""Experiment configuration: nested dataclasses, JSON (de)serialization with
unknown-key rejection, dotted-path overrides, and the named profiles.

Keys in the train section mirror the conventional symbols (N_E, K, M, G, k,
H, h, r_D) so a config snapshot can be audited against the hyperparameter
tables at a glance.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields, is_dataclass

import numpy as np

from .controller import GaitConfig, ControlConfig
from .dynamics import (TerrainParams, RobotModel, make_pendulum, make_hopper)
from .envs import Env, EnvConfig, RewardWeights, pendulum_reward_weights
from .loop import Schedule, TrainConfig, SsrlTrainer
from .model import ModelConfig
from .sac import SacConfig


@dataclass
class RobotConfig:
    """Robot selection plus the physical overrides the experiments touch."""

    name: str = "hopper"              # "hopper" | "pendulum"
    pendulum_mass: float = 1.0
    pendulum_length: float = 0.5
    pendulum_damping: float = 0.05
    gravity: float = 9.81

    def build(self) -> RobotModel:
        if self.name == "pendulum":
            return make_pendulum(mass=self.pendulum_mass,
                                 length=self.pendulum_length,
                                 damping=self.pendulum_damping,
                                 gravity=self.gravity)
        if self.name == "hopper":
            return make_hopper(gravity=self.gravity)
        raise ValueError(f"unknown robot {self.name!r}")


@dataclass
class EvalConfig:
    seeds: tuple = (0, 1, 2, 3)
    n_starts: int = 400               # rollout-error start states
    k_eval: int = 20                  # rollout-error horizon
    dataset_steps: int = 18000        # logged steps for model studies
    terrain_factor: float = 0.75      # friction/stiffness scaling for generalization
    threshold_frac: float = 0.75      # sample-efficiency threshold fraction
    sysid_steps: int = 2000           # pendulum known-torque study


@dataclass
class ExperimentConfig:
    robot: RobotConfig = field(default_factory=RobotConfig)
    terrain: TerrainParams = field(default_factory=TerrainParams)
    gait: GaitConfig = field(default_factory=GaitConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    reward: RewardWeights = field(default_factory=RewardWeights)
    env: EnvConfig = field(default_factory=EnvConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    sac: SacConfig = field(default_factory=SacConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0

    def build_env(self, rng: np.random.Generator | None = None,
                  terrain: TerrainParams | None = None,
                  robot: RobotModel | None = None) -> Env:
        return Env(robot if robot is not None else self.robot.build(),
                   terrain if terrain is not None else _copy_dc(self.terrain),
                   _copy_dc(self.gait), _copy_dc(self.control),
                   _copy_dc(self.reward), _copy_dc(self.env),
                   rng if rng is not None else np.random.default_rng(self.seed))

    def build_trainer(self, master_seed: int | None = None,
                      algorithm: str = "ssrl", env: Env | None = None) -> SsrlTrainer:
        seed = self.seed if master_seed is None else master_seed
        env = env if env is not None else self.build_env()
        return SsrlTrainer(env, _copy_dc(self.train), _copy_dc(self.model),
                           _copy_dc(self.sac), master_seed=seed,
                           algorithm=algorithm)


def _copy_dc(obj):
    return dataclasses.replace(obj)


# -- dict/json round trip ------------------------------------------------------------

def _to_plain(obj):
    if is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return _to_plain(cfg)


def config_to_json(cfg: ExperimentConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2) + "\n"


_NESTED = {"robot": RobotConfig, "terrain": TerrainParams, "gait": GaitConfig,
           "control": ControlConfig, "reward": RewardWeights, "env": EnvConfig,
           "model": ModelConfig, "sac": SacConfig, "train": TrainConfig,
           "eval": EvalConfig}
_SCHEDULES = {"K", "k"}


def _dataclass_from_dict(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ValueError(f"config section '{path}' must be an object")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown config key '{path}.{sorted(unknown)[0]}'")
    kwargs = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        v = data[f.name]
        if cls is TrainConfig and f.name in _SCHEDULES:
            v = _dataclass_from_dict(Schedule, v, f"{path}.{f.name}")
        elif f.name == "biases" and isinstance(v, list):
            v = tuple(v)
        elif f.name == "p_stand" and isinstance(v, list):
            v = tuple(v)
        elif f.name == "seeds" and isinstance(v, list):
            v = tuple(int(x) for x in v)
        kwargs[f.name] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ValueError(f"invalid config section '{path}': {e}") from e


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ValueError("config root must be an object")
    unknown = set(data) - (set(_NESTED) | {"seed"})
    if unknown:
        raise ValueError(f"unknown config key '{sorted(unknown)[0]}'")
    kwargs = {}
    for key, cls in _NESTED.items():
        if key in data:
            kwargs[key] = _dataclass_from_dict(cls, data[key], key)
    if "seed" in data:
        kwargs["seed"] = int(data["seed"])
    return ExperimentConfig(**kwargs)


def config_from_json(text: str) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"config parse error at line {e.lineno}, "
                         f"column {e.colno}: {e.msg}") from e
    return config_from_dict(data)


def apply_override(cfg_dict: dict, dotted: str) -> None:
    """Apply one 'a.b.c=value' override in place; values parse as JSON with
    a bare-string fallback."""
    if "=" not in dotted:
        raise ValueError(f"override '{dotted}' must look like key.path=value")
    key, _, raw = dotted.partition("=")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg_dict
    parts = key.strip().split(".")
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ValueError(f"unknown config path '{key}'")
        node = node[p]
    if parts[-1] not in node:
        raise ValueError(f"unknown config key '{key}'")
    node[parts[-1]] = value


# -- profiles --------------------------------------------------------------------------

def profile_pendulum_smoke() -> ExperimentConfig:
    return ExperimentConfig(
        robot=RobotConfig(name="pendulum"),
        reward=pendulum_reward_weights(),
        env=EnvConfig(episode_length=100),
        model=ModelConfig(family="semi", ensemble_size=2, latent_dim=4,
                          width=24, depth=1, batch_size=64, max_epochs=5,
                          patience=3),
        sac=SacConfig(width=32, depth=1, batch_size=64, lr=1e-3),
        train=TrainConfig(N_epochs=2, N_E=200, K=Schedule(2, 4, 0, 2), M=16,
                          G=4, k=Schedule(1, 4, 0, 2), r_D=0.25, H=2, h=2,
                          reset_at=None, model_buffer_capacity=5000),
        eval=EvalConfig(seeds=(0, 1), n_starts=50, k_eval=10,
                        dataset_steps=1000, sysid_steps=800),
    )


def profile_pendulum_default() -> ExperimentConfig:
    cfg = profile_pendulum_smoke()
    cfg.model = ModelConfig(family="semi", ensemble_size=4, latent_dim=4,
                            width=48, depth=2, batch_size=100, max_epochs=25,
                            patience=5)
    cfg.sac = SacConfig(width=64, depth=2, batch_size=128, lr=1e-3)
    cfg.train = TrainConfig(N_epochs=10, N_E=500, K=Schedule(4, 10, 0, 3),
                            M=64, G=8, k=Schedule(1, 8, 0, 5), r_D=0.1,
                            H=4, h=2, reset_at=None,
                            model_buffer_capacity=50000)
    cfg.eval = EvalConfig(seeds=(0, 1, 2, 3), n_starts=200, k_eval=20,
                          dataset_steps=4000, sysid_steps=2000)
    return cfg


def _hopper_base() -> ExperimentConfig:
    return ExperimentConfig(
        robot=RobotConfig(name="hopper"),
        terrain=TerrainParams(),
        gait=GaitConfig(cycle_period=0.25, swing_height=0.04,
                        stance_fraction=0.6, p_stand=(-0.0194, -0.30)),
        control=ControlConfig(kp=28.0, kd=0.8),
        reward=RewardWeights(),
        env=EnvConfig(episode_length=500),
    )


def profile_hopper_default() -> ExperimentConfig:
    """Faithful defaults from the hyperparameter tables (simulated column):
    40 epochs x 1000 steps, K 10->1000 over epochs 0->4, M=400, k 1->20 over
    epochs 0->10, r_D=0.06, G=60, H=4, h=5, model lr 1e-3 batch 200,
    actor/critic 512x2 with lr 2e-3, batch 256, tau 1e-3, gamma 0.99,
    networks reset at 10,000 steps."""
    cfg = _hopper_base()
    cfg.model = ModelConfig(family="semi", ensemble_size=4, latent_dim=8,
                            width=128, depth=2, lr=1e-3, batch_size=200,
                            max_epochs=40, patience=5)
    cfg.sac = SacConfig(width=512, depth=2, lr=2e-3, batch_size=256,
                        gamma=0.99, tau_smooth=1e-3)
    cfg.train = TrainConfig(N_epochs=40, N_E=1000, K=Schedule(10, 1000, 0, 4),
                            M=400, G=60, k=Schedule(1, 20, 0, 10), r_D=0.06,
                            H=4, h=5, reset_at=10000,
                            model_buffer_capacity=200000)
    cfg.eval = EvalConfig()
    return cfg


def profile_hopper_acceptance() -> ExperimentConfig:
    """Desk-scale profile driving the acceptance experiments: small enough
    to train many paired runs on a laptop CPU while keeping every moving
    part of the full algorithm."""
    cfg = _hopper_base()
    cfg.env.obs_noise_std = 0.003
    cfg.model = ModelConfig(family="semi", ensemble_size=4, latent_dim=8,
                            width=64, depth=2, lr=1e-3, batch_size=200,
                            max_epochs=12, patience=4)
    cfg.sac = SacConfig(width=128, depth=2, lr=1e-3, batch_size=128,
                        gamma=0.99, tau_smooth=5e-3)
    cfg.train = TrainConfig(N_epochs=10, N_E=500, K=Schedule(5, 25, 0, 4),
                            M=64, G=8, k=Schedule(1, 10, 0, 6), r_D=0.1,
                            H=4, h=5, reset_at=None,
                            model_buffer_capacity=30000)
    cfg.eval = EvalConfig(seeds=(0, 1, 2, 3), n_starts=400, k_eval=20,
                          dataset_steps=18000)
    return cfg


PROFILES = {
    "pendulum-smoke": profile_pendulum_smoke,
    "pendulum-default": profile_pendulum_default,
    "hopper-default": profile_hopper_default,
    "hopper-acceptance": profile_hopper_acceptance,
}


def load_profile(name: str) -> ExperimentConfig:
    if name not in PROFILES:
        raise ValueError(f"unknown profile {name!r}; "
                         f"choose from {sorted(PROFILES)}")
    return PROFILES[name]()
