"""Analytic Lagrangian terms and the differentiable semi-implicit integrator.

All term builders are written against the diffengine ops shim, so the same
formulas serve the ground-truth simulator (numpy arrays) and the learned
model's training path (tape Vars, gradients flowing through the integrator).

Hopper conventions (see robots.py): theta1 = pitch + hip - pi/2 is the
absolute thigh angle from +x, theta2 = theta1 + knee the absolute shank
angle. Mass matrix and Coriolis terms are assembled from center-of-mass
Jacobians:

    M = sum_i m_i Jv_i^T Jv_i + I_i Jw_i^T Jw_i
    C(q, qd) = sum_i m_i Jv_i^T (dJv_i/dt qd)      (planar Jw_i is constant)

which keeps every entry a short trig expression instead of generated code.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..diffengine import ops
from .robots import RobotModel, GeneralizedState, PENDULUM, HOPPER

COND_LIMIT = 1e12


@dataclass
class LagrangianTerms:
    """M(q), Coriolis/centrifugal vector C(q,qd), gravity G(q), actuation B."""

    M: object    # (..., n, n)
    C: object    # (..., n)
    G: object    # (..., n)
    B: np.ndarray


def _pendulum_terms(q, qd, robot: RobotModel, m):
    mass = robot.masses[0]
    l = robot.com_offsets[0]
    inertia = mass * l * l + robot.inertias[0]
    theta = q[..., 0]
    M = ops.stack([ops.stack([theta * 0.0 + inertia], axis=-1)], axis=-1)
    C = ops.stack([theta * 0.0], axis=-1)
    G = ops.stack([mass * robot.gravity * l * ops.sin(theta)], axis=-1)
    return LagrangianTerms(M=M, C=C, G=G, B=robot.B)


def _hopper_jacobian_pieces(q, robot: RobotModel, m):
    """cos/sin of the absolute link angles plus the lever terms reused below."""
    pitch = q[..., 2]
    hip = q[..., 3]
    knee = q[..., 4]
    th1 = pitch + hip - np.pi / 2.0
    th2 = th1 + knee
    return ops.cos(th1), ops.sin(th1), ops.cos(th2), ops.sin(th2)


def _hopper_terms(q, qd, robot: RobotModel, m):
    mb, m1, m2 = robot.masses
    Ib, I1, I2 = robot.inertias
    l1 = robot.lengths[1]
    a1, a2 = robot.com_offsets[1], robot.com_offsets[2]
    g = robot.gravity

    c1, s1, c2, s2 = _hopper_jacobian_pieces(q, robot, m)
    zero = q[..., 0] * 0.0
    one = zero + 1.0

    # thigh com jacobian columns for (pitch, hip); knee column is zero
    j1 = -a1 * s1
    k1 = a1 * c1
    J1 = ops.stack([ops.stack([one, zero, j1, j1, zero], axis=-1),
                    ops.stack([zero, one, k1, k1, zero], axis=-1)], axis=-2)
    # shank com jacobian
    j2 = -l1 * s1 - a2 * s2
    k2 = l1 * c1 + a2 * c2
    j2k = -a2 * s2
    k2k = a2 * c2
    J2 = ops.stack([ops.stack([one, zero, j2, j2, j2k], axis=-1),
                    ops.stack([zero, one, k2, k2, k2k], axis=-1)], axis=-2)

    # constant contributions: base mass/inertia and link rotational inertias
    Jw1 = np.array([0.0, 0.0, 1.0, 1.0, 0.0])
    Jw2 = np.array([0.0, 0.0, 1.0, 1.0, 1.0])
    M_const = np.zeros((5, 5))
    M_const[0, 0] = mb
    M_const[1, 1] = mb
    M_const[2, 2] = Ib
    M_const += I1 * np.outer(Jw1, Jw1) + I2 * np.outer(Jw2, Jw2)

    M = m1 * ops.matmul(ops.mT(J1), J1) + m2 * ops.matmul(ops.mT(J2), J2) + M_const

    # centripetal part: dJ/dt qd = -lever * u * omega^2 for each link
    w1 = qd[..., 2] + qd[..., 3]
    w2 = w1 + qd[..., 4]
    v1 = ops.stack([-a1 * c1 * w1 * w1,
                    -a1 * s1 * w1 * w1], axis=-1)
    v2 = ops.stack([-(l1 * c1 * w1 * w1 + a2 * c2 * w2 * w2),
                    -(l1 * s1 * w1 * w1 + a2 * s2 * w2 * w2)], axis=-1)
    C = m1 * ops.matvec(ops.mT(J1), v1) + m2 * ops.matvec(ops.mT(J2), v2)

    g_pitch = g * ((m1 * a1 + m2 * l1) * c1 + m2 * a2 * c2)
    g_knee = g * m2 * a2 * c2
    G = ops.stack([zero, zero + g * (mb + m1 + m2), g_pitch, g_pitch, g_knee],
                  axis=-1)
    return LagrangianTerms(M=M, C=C, G=G, B=robot.B)


def lagrangian_terms(q, qd, robot: RobotModel, m=ops) -> LagrangianTerms:
    """Analytic M, C, G, B at (q, qd); differentiable when given tape Vars."""
    if robot.tag == PENDULUM:
        return _pendulum_terms(q, qd, robot, m)
    if robot.tag == HOPPER:
        return _hopper_terms(q, qd, robot, m)
    raise ValueError(f"unknown robot tag {robot.tag!r}")


def integrate_arrays(q, qd, tau, tau_e, dt: float, robot: RobotModel, m=ops):
    """Semi-implicit Euler step on raw (batched) arrays or tape Vars.

    qdd = M^-1 (B tau + tau_e - C - G); qd' = qd + dt qdd; q' = q + dt qd'.
    """
    terms = lagrangian_terms(q, qd, robot, m)
    rhs = ops.matvec(robot.B, tau) + tau_e - terms.C - terms.G
    qdd = ops.solve(terms.M, rhs)
    qd_next = qd + dt * qdd
    q_next = q + dt * qd_next
    return q_next, qd_next


def integrate(state: GeneralizedState, tau: np.ndarray, tau_e: np.ndarray,
              dt: float, robot: RobotModel) -> GeneralizedState:
    """Single-state semi-implicit step with a conditioning guard on M."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    tau = np.asarray(tau, dtype=np.float64)
    tau_e = np.asarray(tau_e, dtype=np.float64)
    if tau.shape != (robot.nact,) or tau_e.shape != (robot.ndof,):
        raise ValueError("torque dimensions do not match robot")
    M = ops.value(lagrangian_terms(state.q, state.qd, robot).M)
    if np.linalg.cond(M) > COND_LIMIT:
        raise np.linalg.LinAlgError("mass matrix numerically singular")
    q, qd = integrate_arrays(state.q, state.qd, tau, tau_e, dt, robot)
    return GeneralizedState(q, qd)


# -- energies and test oracles (numpy only) -----------------------------------

def kinetic_energy(q: np.ndarray, qd: np.ndarray, robot: RobotModel) -> float:
    M = ops.value(lagrangian_terms(q, qd, robot).M)
    return float(0.5 * qd @ M @ qd)


def potential_energy(q: np.ndarray, robot: RobotModel) -> float:
    g = robot.gravity
    if robot.tag == PENDULUM:
        mass, l = robot.masses[0], robot.com_offsets[0]
        return float(-mass * g * l * np.cos(q[0]))
    mb, m1, m2 = robot.masses
    l1 = robot.lengths[1]
    a1, a2 = robot.com_offsets[1], robot.com_offsets[2]
    th1 = q[2] + q[3] - np.pi / 2.0
    th2 = th1 + q[4]
    z = q[1]
    return float(g * (mb * z + m1 * (z + a1 * np.sin(th1))
                      + m2 * (z + l1 * np.sin(th1) + a2 * np.sin(th2))))


def total_energy(state: GeneralizedState, robot: RobotModel) -> float:
    return kinetic_energy(state.q, state.qd, robot) + potential_energy(state.q, robot)


def mass_matrix_oracle(state: GeneralizedState, robot: RobotModel,
                       eps: float = 1e-3) -> np.ndarray:
    """M from the velocity Hessian of the kinetic energy, by central
    finite differences. Test oracle only; independent of the Jacobian
    assembly used by lagrangian_terms."""
    n = robot.ndof
    M = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            qd = state.qd.copy()

            def T(di, dj):
                v = qd.copy()
                v[i] += di
                v[j] += dj
                return kinetic_energy(state.q, v, robot)

            M[i, j] = (T(eps, eps) - T(eps, -eps) - T(-eps, eps) + T(-eps, -eps)) \
                / (4.0 * eps * eps)
    return M


def _hopper_dM_dq(q: np.ndarray, robot: RobotModel) -> np.ndarray:
    """Analytic dM/dq_l, shape (n, n, n) indexed [l, i, j]; numpy only."""
    mb, m1, m2 = robot.masses
    l1 = robot.lengths[1]
    a1, a2 = robot.com_offsets[1], robot.com_offsets[2]
    th1 = q[2] + q[3] - np.pi / 2.0
    th2 = th1 + q[4]
    c1, s1 = np.cos(th1), np.sin(th1)
    c2, s2 = np.cos(th2), np.sin(th2)

    J1 = np.array([[1, 0, -a1 * s1, -a1 * s1, 0],
                   [0, 1, a1 * c1, a1 * c1, 0]], dtype=np.float64)
    J2 = np.array([[1, 0, -l1 * s1 - a2 * s2, -l1 * s1 - a2 * s2, -a2 * s2],
                   [0, 1, l1 * c1 + a2 * c2, l1 * c1 + a2 * c2, a2 * c2]],
                  dtype=np.float64)
    # partials with respect to the absolute link angles
    dJ1_t1 = np.array([[0, 0, -a1 * c1, -a1 * c1, 0],
                       [0, 0, -a1 * s1, -a1 * s1, 0]], dtype=np.float64)
    dJ2_t1 = np.array([[0, 0, -l1 * c1, -l1 * c1, 0],
                       [0, 0, -l1 * s1, -l1 * s1, 0]], dtype=np.float64)
    dJ2_t2 = np.array([[0, 0, -a2 * c2, -a2 * c2, -a2 * c2],
                       [0, 0, -a2 * s2, -a2 * s2, -a2 * s2]], dtype=np.float64)

    def sym(Ja, dJ):
        return dJ.T @ Ja + Ja.T @ dJ

    dM_t1 = m1 * sym(J1, dJ1_t1) + m2 * sym(J2, dJ2_t1)
    dM_t2 = m2 * sym(J2, dJ2_t2)

    out = np.zeros((5, 5, 5))
    # theta1 depends on pitch and hip; theta2 additionally on knee
    out[2] = dM_t1 + dM_t2
    out[3] = dM_t1 + dM_t2
    out[4] = dM_t2
    return out


def coriolis_matrix(state: GeneralizedState, robot: RobotModel) -> np.ndarray:
    """Christoffel-form Coriolis matrix: the internal form whose skew
    property dM/dt - 2C holds; C @ qd equals the exposed Coriolis vector."""
    n = robot.ndof
    if robot.tag == PENDULUM:
        return np.zeros((n, n))
    dM = _hopper_dM_dq(state.q, robot)
    qd = state.qd
    # C[k, j] = 1/2 sum_l (dM[l][k,j] + dM[j][k,l] - dM[k][j,l]) qd[l]
    C = 0.5 * (np.einsum("lkj,l->kj", dM, qd)
               + np.einsum("jkl,l->kj", dM, qd)
               - np.einsum("kjl,l->kj", dM, qd))
    return C
