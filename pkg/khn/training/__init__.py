"""Episodic training, prediction and evaluation."""

from khn.training.ablation import AblationResult, aggregation_ablation
from khn.training.evaluate import episode_accuracy, evaluate, evaluate_variants, run_evaluation
from khn.training.loss import episode_loss
from khn.training.predict import Prediction, finetune, predict, predict_episode, tuning_task
from khn.training.trainer import TrainResult, make_optimizer, train

__all__ = [
    "AblationResult",
    "Prediction",
    "TrainResult",
    "aggregation_ablation",
    "episode_accuracy",
    "episode_loss",
    "evaluate",
    "evaluate_variants",
    "finetune",
    "make_optimizer",
    "predict",
    "predict_episode",
    "run_evaluation",
    "train",
    "tuning_task",
]
