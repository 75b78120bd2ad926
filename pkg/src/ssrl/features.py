"""Net-input assembly shared by the dynamics models and the actor-critic.

Policies and models condition on the learner state, the gait phase features
(when the robot has a gait), and the flattened history window. Histories are
stored newest first as raw states; features are applied per state.
"""
from __future__ import annotations

import numpy as np

from . import statespace
from .controller import GaitConfig, ControlConfig, phase
from .diffengine import ops
from .dynamics import RobotModel


def phase_dim(robot: RobotModel) -> int:
    return 2 if statespace.uses_phase(robot) else 0


def phase_features(robot: RobotModel, gait: GaitConfig, ctrl: ControlConfig,
                   phase_step) -> np.ndarray:
    """(cos, sin) of the gait phase, batched; empty for phase-free robots."""
    step = np.asarray(phase_step)
    if not statespace.uses_phase(robot):
        return np.zeros(step.shape + (0,))
    _, c, s = phase(step, ctrl.dt_ctrl, gait.cycle_period)
    return np.stack([np.broadcast_to(c, step.shape),
                     np.broadcast_to(s, step.shape)], axis=-1)


def history_features(robot: RobotModel, hist) -> np.ndarray:
    """Flatten a (..., h, state_dim) history into per-state features.

    Backend-generic when given a list of (batched) state entries instead of
    an array (the multi-step loss pushes predicted tape states).
    """
    if isinstance(hist, (list, tuple)):
        return ops.concat([statespace.state_features(h, robot) for h in hist],
                          axis=-1)
    h = hist.shape[-2]
    feats = statespace.state_features(hist, robot)
    return feats.reshape(hist.shape[:-2] + (h * feats.shape[-1],))


def obs_dim(robot: RobotModel, history_len: int) -> int:
    return (statespace.feature_dim(robot) + phase_dim(robot)
            + history_len * statespace.feature_dim(robot))


def obs_inputs(robot: RobotModel, gait: GaitConfig, ctrl: ControlConfig,
               s, phase_step, hist) -> np.ndarray:
    """Policy/critic input: state features + phase features + history features."""
    s = np.asarray(s, dtype=np.float64)
    return np.concatenate([
        statespace.state_features(s, robot),
        phase_features(robot, gait, ctrl, phase_step),
        history_features(robot, np.asarray(hist)),
    ], axis=-1)
