"""Structured control stack: gait phase, open-loop gait generator, two-link
inverse kinematics, joint PD law, and their composition into the known
motor-torque map.

The torque map is deterministic and known to the learner; during model
training gradients flow through the PD law (the gait target and inverse
kinematics depend only on phase and action, which are constants along a
training segment).

The planar hopper has a single leg, but the gait machinery handles an
arbitrary number of phase-biased legs so the alternating-gait bookkeeping
stays fully exercised.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffengine import ops
from .dynamics import RobotModel, PENDULUM
from . import statespace

TWO_PI = 2.0 * np.pi


@dataclass
class GaitConfig:
    cycle_period: float = 0.5          # s
    swing_height: float = 0.09         # m, peak of the cosine bump is 2x this
    stance_fraction: float = 0.5       # fraction of the cycle in stance
    biases: tuple = (0.0,)             # per-leg phase bias in [0, 1)
    p_stand: tuple = (0.0, -0.32)      # nominal standing foot position, leg frame

    def __post_init__(self):
        if self.cycle_period <= 0:
            raise ValueError("cycle_period must be positive")
        if not 0.0 < self.stance_fraction < 1.0:
            raise ValueError("stance_fraction must be in (0, 1)")
        if self.swing_height < 0:
            raise ValueError("swing_height must be non-negative")


@dataclass
class ControlConfig:
    kp: float = 112.0                  # N m / rad
    kd: float = 3.5                    # N m s / rad
    dt_ctrl: float = 0.01              # s, 100 Hz
    substeps: int = 10                 # ground-truth sim substeps per interval


def phase(step_index, dt_ctrl: float, cycle_period: float):
    """Gait phase angle 2*pi*t/T mod 2*pi, plus (cos, sin) for observations."""
    if cycle_period <= 0:
        raise ValueError("cycle_period must be positive")
    t = np.asarray(step_index, dtype=np.float64) * dt_ctrl
    phi = np.mod(TWO_PI * t / cycle_period, TWO_PI)
    return phi, np.cos(phi), np.sin(phi)


def leg_phase(phi, bias):
    """Normalized per-leg phase (phi/2pi + 0.5 + bias) mod 1."""
    return np.mod(np.asarray(phi) / TWO_PI + 0.5 + bias, 1.0)


def gait_target(leg_phi, dh_gait, cfg: GaitConfig) -> np.ndarray:
    """Foot position target in the leg frame for normalized phase ``leg_phi``.

    Stance adds +dh to the standing height; swing follows the raised-cosine
    bump minus dh. The resulting 2*dh jump at the stance/swing boundary when
    dh != 0 is a property of the formula, kept as written.
    """
    leg_phi = np.asarray(leg_phi, dtype=np.float64)
    dh = np.asarray(dh_gait, dtype=np.float64)
    r = cfg.stance_fraction
    swing = leg_phi >= r
    bump = cfg.swing_height * (1.0 - np.cos(TWO_PI * (leg_phi - r) / (1.0 - r)))
    z_off = np.where(swing, bump - dh, dh)
    x = np.broadcast_to(cfg.p_stand[0], z_off.shape)
    return np.stack([x, cfg.p_stand[1] + z_off], axis=-1)


def forward_kinematics(hip, knee, l1: float, l2: float) -> np.ndarray:
    th1 = np.asarray(hip) - np.pi / 2.0
    th2 = th1 + np.asarray(knee)
    return np.stack([l1 * np.cos(th1) + l2 * np.cos(th2),
                     l1 * np.sin(th1) + l2 * np.sin(th2)], axis=-1)


def inverse_kinematics(target, l1: float, l2: float, margin: float = 1e-3):
    """Closed-form planar two-link IK, knee-backward branch.

    Unreachable targets are clamped to the nearest reachable radius; the
    returned mask flags where clamping occurred.
    """
    target = np.asarray(target, dtype=np.float64)
    tx, tz = target[..., 0], target[..., 1]
    r = np.sqrt(tx * tx + tz * tz)
    r_min = abs(l1 - l2) + margin   # the center is singular (hip angle undefined)
    r_max = l1 + l2                 # full extension itself is fine: knee = 0
    clamped = (r < r_min) | (r > r_max)
    r_c = np.clip(r, r_min, r_max)
    scale = np.where(r > 0, r_c / np.maximum(r, 1e-12), 1.0)
    tx, tz = tx * scale, tz * scale

    cos_knee = (r_c * r_c - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    knee = np.arccos(np.clip(cos_knee, -1.0, 1.0))
    alpha = np.arctan2(tz, tx)
    beta = np.arctan2(l2 * np.sin(knee), l1 + l2 * np.cos(knee))
    hip = alpha - beta + np.pi / 2.0
    return np.stack([hip, knee], axis=-1), clamped


def pd_torque(q_des, q, qd, kp: float, kd: float, tau_min, tau_max):
    """tau = kp (q_des - q) - kd qd, clipped to the joint torque limits.

    Backend-generic: ``q``/``qd`` may be tape Vars during model training.
    """
    tau = kp * (q_des - q) - kd * qd
    return ops.clip(tau, tau_min, tau_max)


def desired_joints(robot: RobotModel, gait: GaitConfig, ctrl: ControlConfig,
                   phase_step, action) -> np.ndarray:
    """Joint targets from (phase, action) alone: gait plus offsets, then IK."""
    action = np.asarray(action, dtype=np.float64)
    phi, _, _ = phase(phase_step, ctrl.dt_ctrl, gait.cycle_period)
    lphi = leg_phase(phi, gait.biases[0])
    target = gait_target(lphi, action[..., 2], gait)
    target = target + np.stack([action[..., 0], action[..., 1]], axis=-1)
    q_des, _ = inverse_kinematics(target, robot.lengths[1], robot.lengths[2])
    return q_des


def motor_map(robot: RobotModel, gait: GaitConfig, ctrl: ControlConfig,
              state, phase_step, action):
    """The known zero-order-hold torque map from (state, phase, action).

    Pendulum: direct torque scaling. Hopper: gait target -> IK -> PD.
    Pure and deterministic; differentiable in ``state``.
    """
    if robot.tag == PENDULUM:
        return action * robot.tau_max[0]
    q_des = desired_joints(robot, gait, ctrl, phase_step, action)
    q_j = state[..., 1:3]
    qd_j = state[..., 6:8]
    return pd_torque(q_des, q_j, qd_j, ctrl.kp, ctrl.kd,
                     robot.tau_min, robot.tau_max)


def standing_state(robot: RobotModel, gait: GaitConfig,
                   terrain_height: float = 0.0) -> np.ndarray:
    """Full sim state posed at the nominal gait stance, foot on the ground."""
    q_des, _ = inverse_kinematics(np.asarray(gait.p_stand), robot.lengths[1],
                                  robot.lengths[2])
    foot = forward_kinematics(q_des[0], q_des[1], robot.lengths[1], robot.lengths[2])
    q = np.array([0.0, terrain_height - foot[1], 0.0, q_des[0], q_des[1]])
    return np.concatenate([q, np.zeros(5)])
