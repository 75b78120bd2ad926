from .tape import Tape, Var, concat, stack, solve, value_of
from .nn import (MlpParams, mlp_init, mlp_forward, gaussian_nll,
                 positive_variance, params_as_dict, params_from_dict,
                 VAR_FLOOR, VAR_CEIL)
from .optim import OptimizerState, optimizer_init, optimizer_step
from .checkpoint import save_params, load_params, flatten_params
from . import ops

__all__ = [
    "Tape", "Var", "concat", "stack", "solve", "value_of",
    "MlpParams", "mlp_init", "mlp_forward", "gaussian_nll",
    "positive_variance", "params_as_dict", "params_from_dict",
    "VAR_FLOOR", "VAR_CEIL",
    "OptimizerState", "optimizer_init", "optimizer_step",
    "save_params", "load_params", "flatten_params", "ops",
]
