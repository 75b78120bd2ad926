"""Semi-structured model-based RL on planar desk robots.

Learned external-torque ensembles anchored to analytic Lagrangian dynamics,
auto-regressive uncertainty-aware rollouts, and Dyna-style policy
optimization with soft actor-critic, plus the evaluation harness for the
model-accuracy and sample-efficiency experiments.
"""

__version__ = "0.1.0"
