"""Mapping between simulator states, learner-visible states, and net inputs.

The learner sees only proprioceptive state: global position never appears.

Hopper learner state (8): (pitch, hip, knee, vx, vz, pitch_rate, hip_rate,
knee_rate). Base x and z are dropped; the Lagrangian terms are translation
invariant so the model's integrator never needs them.

Pendulum learner state (2): (theta, theta_dot).

``state_features`` produces bounded, roughly unit-scale net inputs and is
backend-generic so propagated (tape) states feed straight back into the
networks during multi-step training.
"""
from __future__ import annotations

import numpy as np

from .diffengine import ops
from .dynamics import GeneralizedState, RobotModel, PENDULUM, HOPPER

_HOPPER_SCALE = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 5.0, 8.0, 8.0])
_PEND_VEL_SCALE = 5.0


def state_dim(robot: RobotModel) -> int:
    return 2 if robot.tag == PENDULUM else 8


def action_dim(robot: RobotModel) -> int:
    return 1 if robot.tag == PENDULUM else 3


def action_bounds(robot: RobotModel) -> tuple[np.ndarray, np.ndarray]:
    if robot.tag == PENDULUM:
        return np.array([-1.0]), np.array([1.0])
    low = np.array([-0.15, -0.075, -0.1])
    high = np.array([0.15, 0.075, 0.0])
    return low, high


def uses_phase(robot: RobotModel) -> bool:
    return robot.tag == HOPPER


def state_from_sim(sim: GeneralizedState, robot: RobotModel) -> np.ndarray:
    if robot.tag == PENDULUM:
        return np.array([sim.q[0], sim.qd[0]])
    return np.concatenate([sim.q[2:5], sim.qd])


def q_qd_from_state(s, robot: RobotModel):
    """Lift a (batched) learner state to (q, qd) with x = z = 0 placeholders.

    Valid because M, C, G and the torque map are independent of base
    translation; backend-generic.
    """
    if robot.tag == PENDULUM:
        return s[..., 0:1], s[..., 1:2]
    zeros = s[..., 0:2] * 0.0
    q = ops.concat([zeros, s[..., 0:3]], axis=-1)
    return q, s[..., 3:8]


def state_from_q_qd(q, qd, robot: RobotModel):
    if robot.tag == PENDULUM:
        return ops.concat([q, qd], axis=-1)
    return ops.concat([q[..., 2:5], qd], axis=-1)


def state_features(s, robot: RobotModel):
    """Bounded net-input features of a (batched) learner state."""
    if robot.tag == PENDULUM:
        th = s[..., 0]
        return ops.stack([ops.cos(th), ops.sin(th),
                          s[..., 1] / _PEND_VEL_SCALE], axis=-1)
    return s * (1.0 / _HOPPER_SCALE)


def feature_dim(robot: RobotModel) -> int:
    return 3 if robot.tag == PENDULUM else 8
