"""POMDP wrapper around the ground-truth simulator and the control stack.

Observation assembly, the weighted reward, termination, episode management,
and the perturbation hooks for the robustness experiments. The environment
is the stand-in for the real world: its contact model and full state are
invisible to the learner, which only receives observations and rewards.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import statespace
from .controller import GaitConfig, ControlConfig, motor_map, phase, standing_state
from .dynamics import (GeneralizedState, RobotModel, TerrainParams, sim_step,
                       PENDULUM)


@dataclass
class RewardWeights:
    """Per-term weights and scales, mirroring the weighted-sum structure.

    The exponential terms are calibrated so that the reference velocity with
    all other terms maximal gives a per-step reward of about 1.0.
    """

    velocity: float = 0.5
    velocity_scale: float = 1.0      # reward v / scale
    pitch: float = 0.15
    pitch_denom: float = 0.25
    pitch_rate: float = 0.10
    pitch_rate_denom: float = 0.005
    vertical_accel: float = 0.10
    vertical_accel_denom: float = 0.02
    energy: float = 0.15
    energy_denom: float = 100.0
    torque: float = 0.02

    def exp_weight_sum(self) -> float:
        return self.pitch + self.pitch_rate + self.vertical_accel + self.energy


def pendulum_reward_weights() -> RewardWeights:
    # spin task: reward angular velocity, keep the energy and torque terms
    return RewardWeights(velocity=0.8, velocity_scale=8.0,
                         pitch=0.0, pitch_rate=0.0, vertical_accel=0.0,
                         energy=0.2, energy_denom=400.0, torque=0.02)


def linear_limit(tau, tau_min, tau_max):
    """Exponential penalty inside the torque limits, linear beyond them.

    Continuous at the limits (both branches give -1) and at zero.
    """
    tau = np.asarray(tau, dtype=np.float64)
    below = tau < tau_min
    above = tau >= tau_max
    neg = (tau >= tau_min) & (tau < 0.0)
    pos = (tau >= 0.0) & (tau < tau_max)
    out = np.where(below, tau - tau_min - 1.0, 0.0)
    out = np.where(neg, -np.exp(-tau + tau_min), out)
    out = np.where(pos, -np.exp(tau - tau_max), out)
    out = np.where(above, -tau + tau_max - 1.0, out)
    return out


def reward(robot: RobotModel, weights: RewardWeights, s, tau, s_next) -> float:
    """Weighted per-step reward from learner states and the held torque."""
    s = np.asarray(s, dtype=np.float64)
    s_next = np.asarray(s_next, dtype=np.float64)
    w = weights
    if robot.tag == PENDULUM:
        r = w.velocity * s_next[..., 1] / w.velocity_scale
        energy = np.abs(s_next[..., 1] * tau[..., 0])
        r = r + w.energy * np.exp(-energy ** 2 / w.energy_denom)
        r = r + w.torque * linear_limit(tau[..., 0], robot.tau_min[0],
                                        robot.tau_max[0])
        return r
    vx, vz = s_next[..., 3], s_next[..., 4]
    r = w.velocity * vx / w.velocity_scale
    r = r + w.pitch * np.exp(-s_next[..., 0] ** 2 / w.pitch_denom)
    r = r + w.pitch_rate * np.exp(-(s_next[..., 0] - s[..., 0]) ** 2 / w.pitch_rate_denom)
    r = r + w.vertical_accel * np.exp(-(vz - s[..., 4]) ** 2 / w.vertical_accel_denom)
    energy = np.abs(s_next[..., 6] * tau[..., 0]) + np.abs(s_next[..., 7] * tau[..., 1])
    r = r + w.energy * np.exp(-energy ** 2 / w.energy_denom)
    lim = (linear_limit(tau[..., 0], robot.tau_min[0], robot.tau_max[0])
           + linear_limit(tau[..., 1], robot.tau_min[1], robot.tau_max[1])) / 2.0
    return r + w.torque * lim


PITCH_LIMIT = np.pi / 4
PEND_SPEED_LIMIT = 25.0


def terminated(robot: RobotModel, s) -> np.ndarray:
    """d_t = 1 when the base pitch (or pendulum speed) exceeds its limit."""
    s = np.asarray(s, dtype=np.float64)
    if robot.tag == PENDULUM:
        return np.abs(s[..., 1]) > PEND_SPEED_LIMIT
    return np.abs(s[..., 0]) > PITCH_LIMIT


@dataclass
class EpisodeState:
    step: int = 0
    phase_step: int = 0
    done: bool = False
    accumulated_return: float = 0.0


@dataclass
class EnvConfig:
    episode_length: int = 500
    reset_joint_spread: float = 0.02    # rad
    reset_height_spread: float = 0.01   # m
    obs_noise_std: float = 0.0          # per-channel, on the learner state


class Env:
    """One seeded environment instance; deterministic given its rng state."""

    def __init__(self, robot: RobotModel, terrain: TerrainParams,
                 gait: GaitConfig, ctrl: ControlConfig,
                 weights: RewardWeights, cfg: EnvConfig,
                 rng: np.random.Generator):
        self.robot = robot
        self.terrain = terrain
        self.gait = gait
        self.ctrl = ctrl
        self.weights = weights
        self.cfg = cfg
        self.rng = rng
        self.sim: GeneralizedState | None = None
        self.episode = EpisodeState()
        self.step_counter = 0   # lifetime env interactions

    # -- state plumbing -------------------------------------------------------

    @property
    def state_dim(self) -> int:
        return statespace.state_dim(self.robot)

    @property
    def action_dim(self) -> int:
        return statespace.action_dim(self.robot)

    def learner_state(self) -> np.ndarray:
        s = statespace.state_from_sim(self.sim, self.robot)
        if self.cfg.obs_noise_std > 0.0:
            s = s + self.rng.normal(0.0, self.cfg.obs_noise_std, size=s.shape)
        return s

    def observe(self, s: np.ndarray, phase_step: int) -> np.ndarray:
        """Observation vector: learner state plus gait phase features."""
        if not statespace.uses_phase(self.robot):
            return np.asarray(s, dtype=np.float64)
        _, c, sn = phase(phase_step, self.ctrl.dt_ctrl, self.gait.cycle_period)
        return np.concatenate([s, [c, sn]])

    # -- episode control -------------------------------------------------------

    def reset(self) -> np.ndarray:
        if self.robot.tag == PENDULUM:
            q = np.array([self.rng.uniform(-self.cfg.reset_joint_spread,
                                           self.cfg.reset_joint_spread)])
            self.sim = GeneralizedState(q, np.zeros(1))
        else:
            full = standing_state(self.robot, self.gait,
                                  self.terrain.ground_height)
            full[3:5] += self.rng.uniform(-self.cfg.reset_joint_spread,
                                          self.cfg.reset_joint_spread, size=2)
            full[1] += self.rng.uniform(-self.cfg.reset_height_spread,
                                        self.cfg.reset_height_spread)
            self.sim = GeneralizedState(full[:5], full[5:])
        self.episode = EpisodeState()
        return self.learner_state()

    def step(self, s: np.ndarray, action: np.ndarray):
        """Advance one control interval from learner state ``s``.

        The caller passes back the learner state it observed so that
        observation noise stays consistent between acting and logging.
        Returns (s_next, reward, done, info); info carries ground truth
        for evaluation only.
        """
        low, high = statespace.action_bounds(self.robot)
        action = np.clip(np.asarray(action, dtype=np.float64), low, high)
        tau = motor_map(self.robot, self.gait, self.ctrl, s,
                        self.episode.phase_step, action)
        self.sim, info = sim_step(self.sim, tau, self.terrain, self.robot,
                                  self.ctrl.dt_ctrl, self.ctrl.substeps)
        s_next = self.learner_state()
        r = float(reward(self.robot, self.weights, s, tau, s_next))
        done = bool(terminated(self.robot, s_next))
        self.episode.step += 1
        self.episode.phase_step += 1
        self.step_counter += 1
        if not self.episode.done:
            self.episode.accumulated_return += r
        self.episode.done = self.episode.done or done
        info = dict(info)
        info["tau"] = tau
        info["sim_q"] = self.sim.q.copy()
        info["sim_qd"] = self.sim.qd.copy()
        truncated = self.episode.step >= self.cfg.episode_length
        return s_next, r, done, truncated, info
