"""Ground-truth penalty contact simulator.

Plays the role of the real world: compliant normal force with damping,
smoothed Coulomb friction, viscous joint damping, all integrated with a
substepped semi-implicit Euler. The learner never sees this code; it only
sees the resulting transitions.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .robots import RobotModel, GeneralizedState, HOPPER
from .lagrangian import integrate_arrays


@dataclass
class TerrainParams:
    ground_height: float = 0.0
    k_c: float = 2500.0      # contact stiffness N/m
    c_c: float = 50.0        # contact damping N s/m
    mu: float = 0.6          # friction coefficient
    eps_v: float = 0.05      # friction smoothing velocity m/s

    def __post_init__(self):
        if self.k_c <= 0 or self.c_c <= 0 or self.eps_v <= 0:
            raise ValueError("k_c, c_c, eps_v must be positive")
        if self.mu < 0:
            raise ValueError("mu must be non-negative")


def perturb_terrain(terrain: TerrainParams, factor: float) -> TerrainParams:
    """Scale friction and contact stiffness by ``factor`` in (0, 1]."""
    if not 0.0 < factor <= 1.0:
        raise ValueError("factor must be in (0, 1]")
    return replace(terrain, mu=terrain.mu * factor, k_c=terrain.k_c * factor)


def foot_position(q: np.ndarray, robot: RobotModel) -> np.ndarray:
    th1 = q[2] + q[3] - np.pi / 2.0
    th2 = th1 + q[4]
    l1, l2 = robot.lengths[1], robot.lengths[2]
    return np.array([q[0] + l1 * np.cos(th1) + l2 * np.cos(th2),
                     q[1] + l1 * np.sin(th1) + l2 * np.sin(th2)])


def foot_jacobian(q: np.ndarray, robot: RobotModel) -> np.ndarray:
    th1 = q[2] + q[3] - np.pi / 2.0
    th2 = th1 + q[4]
    l1, l2 = robot.lengths[1], robot.lengths[2]
    jx = -l1 * np.sin(th1) - l2 * np.sin(th2)
    jz = l1 * np.cos(th1) + l2 * np.cos(th2)
    return np.array([[1.0, 0.0, jx, jx, -l2 * np.sin(th2)],
                     [0.0, 1.0, jz, jz, l2 * np.cos(th2)]])


def contact_force(q: np.ndarray, qd: np.ndarray, terrain: TerrainParams,
                  robot: RobotModel) -> np.ndarray:
    """(tangential, normal) ground force at the foot; zero unless penetrating."""
    pf = foot_position(q, robot)
    depth = terrain.ground_height - pf[1]
    if depth <= 0.0:
        return np.zeros(2)
    vf = foot_jacobian(q, robot) @ qd
    fn = max(0.0, terrain.k_c * depth + terrain.c_c * max(0.0, -vf[1]))
    ft = -terrain.mu * fn * np.tanh(vf[0] / terrain.eps_v)
    return np.array([ft, fn])


def external_torque(q: np.ndarray, qd: np.ndarray, terrain: TerrainParams,
                    robot: RobotModel) -> tuple[np.ndarray, np.ndarray]:
    """Generalized external torque J^T F + damping, plus the raw foot force."""
    tau_d = -robot.damping * qd
    if robot.tag != HOPPER:
        return tau_d, np.zeros(2)
    force = contact_force(q, qd, terrain, robot)
    if force[1] == 0.0:
        return tau_d, force
    return foot_jacobian(q, robot).T @ force + tau_d, force


def sim_step(state: GeneralizedState, tau: np.ndarray, terrain: TerrainParams,
             robot: RobotModel, dt: float, substeps: int = 10):
    """One control interval of ground truth: substepped contact + dynamics.

    Torques are held constant (zero-order hold). Returns the next state and
    an info dict with the substep-averaged external generalized torque and
    foot force, which the evaluation harness may inspect but the learner
    must never see.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    h = dt / substeps
    q, qd = state.q, state.qd
    tau_e_sum = np.zeros(robot.ndof)
    force_sum = np.zeros(2)
    for _ in range(substeps):
        tau_e, force = external_torque(q, qd, terrain, robot)
        tau_e_sum += tau_e
        force_sum += force
        q, qd = integrate_arrays(q, qd, tau, tau_e, h, robot)
    info = {"tau_e": tau_e_sum / substeps, "contact_force": force_sum / substeps}
    return GeneralizedState(q, qd), info
