from .history import History, push_batch
from .ensemble import (ModelConfig, SemiStructuredEnsemble, BlackBoxEnsemble,
                       make_ensemble)
from .training import multistep_loss, train_models, holdout_loss
from .rollout import hallucinate

__all__ = [
    "History", "push_batch",
    "ModelConfig", "SemiStructuredEnsemble", "BlackBoxEnsemble", "make_ensemble",
    "multistep_loss", "train_models", "holdout_loss", "hallucinate",
]
