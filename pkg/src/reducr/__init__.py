"""Robust online batch selection via class-priority reweighting.

A library plus CLI simulator implementing class-priority multiplicative
weights batch selection alongside uniform, train-loss, reference-model
excess-loss, and direct payoff-matrix baselines, with small built-in SGD
learners for synthetic and tabular data.
"""

from .class_weights import (
    HoldoutLossTracker,
    compute_alpha,
    init_weights,
    refresh_holdout_ewma,
    refresh_holdout_full,
    update_weights,
)
from .config import ExperimentConfig, apply_superclass_map, load_config
from .data import (
    DataPool,
    ImbalanceSpec,
    SuperclassMap,
    generate_synthetic,
    load_csv,
    load_pool,
    sample_large_batch,
)
from .experts import (
    ExpertBank,
    train_class_expert,
    train_group_experts,
    train_reference_model,
)
from .kernels import BACKEND
from .learner import (
    MLP,
    LearnerState,
    SoftmaxRegression,
    WeightedBatch,
    evaluate,
    gradient,
    init_learner,
    per_example_loss,
    sgd_step,
)
from .numerics import cross_entropy, log_softmax, make_rng, top_k_indices
from .selection import (
    SelectionContext,
    SelectionResult,
    select,
    select_payoff,
    select_reducr,
    select_rho,
    select_trainloss,
    select_uniform,
)
from .simulator import RunResult, run_experiment, sweep

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DataPool",
    "ExperimentConfig",
    "ExpertBank",
    "HoldoutLossTracker",
    "ImbalanceSpec",
    "LearnerState",
    "MLP",
    "RunResult",
    "SelectionContext",
    "SelectionResult",
    "SoftmaxRegression",
    "SuperclassMap",
    "WeightedBatch",
    "apply_superclass_map",
    "compute_alpha",
    "cross_entropy",
    "evaluate",
    "generate_synthetic",
    "gradient",
    "init_learner",
    "init_weights",
    "load_config",
    "load_csv",
    "load_pool",
    "log_softmax",
    "make_rng",
    "per_example_loss",
    "refresh_holdout_ewma",
    "refresh_holdout_full",
    "run_experiment",
    "sample_large_batch",
    "select",
    "select_payoff",
    "select_reducr",
    "select_rho",
    "select_trainloss",
    "select_uniform",
    "sgd_step",
    "sweep",
    "top_k_indices",
    "train_class_expert",
    "train_group_experts",
    "train_reference_model",
    "update_weights",
]
