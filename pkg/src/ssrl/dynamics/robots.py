"""Planar desk robots and their parameter records.

Two robots share one generalized-coordinate convention (world x right, z up,
angles counterclockwise, gravity on -z):

PlanarPendulum, 1 DOF

    q = (theta,), theta = 0 hanging straight down, actuated at the pivot.
    Contact-free; used as the oracle and sanity system.

PlanarHopper, 5 DOF

    q = (x, z, pitch, hip, knee)

    A floating planar base with one two-link leg. The hip is mounted at the
    base center of mass. With pitch = hip = knee = 0 the leg points straight
    down and the foot sits at distance l_thigh + l_shank below the base.
    Absolute thigh angle from the +x axis is pitch + hip - pi/2; the knee
    angle adds on top of that. Only hip and knee are actuated.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

PENDULUM = "PlanarPendulum"
HOPPER = "PlanarHopper"


@dataclass
class GeneralizedState:
    """Lagrangian state: generalized coordinates q and velocities qd."""

    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64)
        self.qd = np.asarray(self.qd, dtype=np.float64)
        if self.q.shape != self.qd.shape:
            raise ValueError("q and qd dimensions differ")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.qd))):
            raise ValueError("non-finite state")

    def copy(self) -> "GeneralizedState":
        return GeneralizedState(self.q.copy(), self.qd.copy())


@dataclass
class RobotModel:
    """Geometry, inertia, actuation and limits of one planar robot.

    masses/lengths/inertias are per-link, base first for the hopper.
    ``damping`` is the viscous coefficient per generalized coordinateement;
    ``B`` maps actuator torques to generalized forces (one unit entry per
    actuated joint, zero rows for the unactuated base coordinates).
    """

    tag: str
    masses: np.ndarray          # kg
    lengths: np.ndarray         # m, full link lengths
    com_offsets: np.ndarray     # m, pivot-to-com distance per link
    inertias: np.ndarray        # kg m^2 about each link com
    damping: np.ndarray         # N m s/rad per generalized coordinate
    B: np.ndarray               # (ndof, nact)
    gravity: float = 9.81
    tau_min: np.ndarray = field(default=None)
    tau_max: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in ("masses", "lengths", "com_offsets", "inertias", "damping",
                     "B", "tau_min", "tau_max"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.asarray(v, dtype=np.float64))
        if np.any(self.masses <= 0) or np.any(self.lengths <= 0):
            raise ValueError("masses and lengths must be positive")
        cols = self.B.sum(axis=0)
        if not np.allclose(cols, 1.0) or not np.all((self.B == 0) | (self.B == 1)):
            raise ValueError("B must have one unit entry per actuated joint")

    @property
    def ndof(self) -> int:
        return self.B.shape[0]

    @property
    def nact(self) -> int:
        return self.B.shape[1]


def make_pendulum(mass: float = 1.0, length: float = 0.5, damping: float = 0.0,
                  gravity: float = 9.81, tau_limit: float | None = None) -> RobotModel:
    if tau_limit is None:
        tau_limit = 2.0 * mass * gravity * length
    return RobotModel(
        tag=PENDULUM,
        masses=np.array([mass]),
        lengths=np.array([length]),
        com_offsets=np.array([length]),   # point mass at the tip
        inertias=np.array([0.0]),
        damping=np.array([damping]),
        B=np.array([[1.0]]),
        gravity=gravity,
        tau_min=np.array([-tau_limit]),
        tau_max=np.array([tau_limit]),
    )


def make_hopper(gravity: float = 9.81) -> RobotModel:
    # base, thigh, shank
    return RobotModel(
        tag=HOPPER,
        masses=np.array([2.0, 0.4, 0.3]),
        lengths=np.array([0.2, 0.2, 0.2]),       # base "length" unused
        com_offsets=np.array([0.0, 0.10, 0.10]),
        inertias=np.array([0.4, 0.002, 0.0015]),
        damping=np.array([0.0, 0.0, 0.05, 0.08, 0.08]),
        B=np.array([[0.0, 0.0],
                    [0.0, 0.0],
                    [0.0, 0.0],
                    [1.0, 0.0],
                    [0.0, 1.0]]),
        gravity=gravity,
        tau_min=np.array([-15.0, -15.0]),
        tau_max=np.array([15.0, 15.0]),
    )


def perturb_robot(robot: RobotModel, rng: np.random.Generator,
                  mass_spread: float = 0.25, damping_spread: float = 0.5) -> RobotModel:
    """Independent uniform multipliers on link masses and joint damping.

    Models errors in a-priori knowledge of inertial properties; spreads of
    zero return the robot unchanged.
    """
    masses = robot.masses * rng.uniform(1.0 - mass_spread, 1.0 + mass_spread,
                                        size=robot.masses.shape)
    damping = robot.damping * rng.uniform(1.0 - damping_spread, 1.0 + damping_spread,
                                          size=robot.damping.shape)
    return replace(robot, masses=masses, damping=damping)
