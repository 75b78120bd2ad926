from .robots import (GeneralizedState, RobotModel, make_pendulum, make_hopper,
                     perturb_robot, PENDULUM, HOPPER)
from .lagrangian import (LagrangianTerms, lagrangian_terms, integrate,
                         integrate_arrays, kinetic_energy, potential_energy,
                         total_energy, mass_matrix_oracle, coriolis_matrix)
from .contact import (TerrainParams, perturb_terrain, foot_position,
                      foot_jacobian, contact_force, external_torque, sim_step)

__all__ = [
    "GeneralizedState", "RobotModel", "make_pendulum", "make_hopper",
    "perturb_robot", "PENDULUM", "HOPPER",
    "LagrangianTerms", "lagrangian_terms", "integrate", "integrate_arrays",
    "kinetic_energy", "potential_energy", "total_energy",
    "mass_matrix_oracle", "coriolis_matrix",
    "TerrainParams", "perturb_terrain", "foot_position", "foot_jacobian",
    "contact_force", "external_torque", "sim_step",
]
