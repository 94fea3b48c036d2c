"""pathgen: generative neural pathway explanations for conv classifiers."""

__version__ = "0.1.0"

from .masks import ActivationSet, PathwayMask
from .instrument import TargetModel
from .generator import (
    GeneratorConfig,
    ImportanceScores,
    PathwayGenerator,
    generate_pathway,
)
from .training import TrainConfig, TrainState, kd_loss, sparsity_loss, total_loss, train
from .baselines import (
    ScoreField,
    greedy_prune,
    intgrad_importance,
    magnitude_importance,
    random_mask,
    taylor_importance,
    threshold_to_mask,
)
from .evaluation import (
    ClassPathway,
    MetricReport,
    PredictionRecord,
    accuracy,
    aciou,
    build_class_pathway,
    cam_on_pathway,
    class_variance_stats,
    icr,
    mdc,
    mic,
    roap,
    transfer_eval,
)

__all__ = [
    "ActivationSet",
    "PathwayMask",
    "TargetModel",
    "GeneratorConfig",
    "ImportanceScores",
    "PathwayGenerator",
    "generate_pathway",
    "TrainConfig",
    "TrainState",
    "kd_loss",
    "sparsity_loss",
    "total_loss",
    "train",
    "ScoreField",
    "greedy_prune",
    "intgrad_importance",
    "magnitude_importance",
    "random_mask",
    "taylor_importance",
    "threshold_to_mask",
    "ClassPathway",
    "MetricReport",
    "PredictionRecord",
    "accuracy",
    "aciou",
    "build_class_pathway",
    "cam_on_pathway",
    "class_variance_stats",
    "icr",
    "mdc",
    "mic",
    "roap",
    "transfer_eval",
]
