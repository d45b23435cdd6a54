"""TuckER link prediction: model, training, evaluation and splits."""

from .evaluation import (
    EvalReport,
    RankedPrediction,
    RankMetrics,
    evaluate,
    known_tails,
    metrics_from_ranks,
    predict_tails,
    rank_of,
)
from .model import (
    TuckerModel,
    confidence,
    load_model,
    save_model,
    score,
    score_all_tails,
)
from .splits import attack_patterns_of, leave_out_attack_patterns, split_dataset
from .training import TrainingResult, gradient_check, loss_and_gradients, train

__all__ = [
    "EvalReport", "RankedPrediction", "RankMetrics", "evaluate", "known_tails",
    "metrics_from_ranks", "predict_tails", "rank_of",
    "TuckerModel", "confidence", "load_model", "save_model", "score", "score_all_tails",
    "attack_patterns_of", "leave_out_attack_patterns", "split_dataset",
    "TrainingResult", "gradient_check", "loss_and_gradients", "train",
]
