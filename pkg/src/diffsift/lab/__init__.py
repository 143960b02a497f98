"""Desk-scale testbed: synthetic ID/OOD classification tasks, linear softmax
policies, SFT and GRPO trainers with analytic gradients, and curated-subset
experiments measuring how training-data difficulty shapes generalization.
"""

from .tasks import LabEpisode, LabTask, SyntheticTaskSpec, episodes_to_arrays, gen_task
from .policy import (
    SoftmaxPolicy,
    evaluate,
    policy_probs,
    policy_probs_batch,
    sample_responses_lab,
    zero_policy,
)
from .train import (
    GrpoStepStats,
    PolicySnapshotPair,
    draw_class_matrix,
    grpo_grad_given_draws,
    grpo_loss_given_draws,
    grpo_step,
    sft_grad,
    sft_step,
)
from .experiment import (
    ExperimentError,
    LabConfig,
    TrainReport,
    load_lab_config,
    run_experiment,
    sign_test,
    summarize,
    write_report_csv,
)

__all__ = [
    "LabEpisode",
    "LabTask",
    "SyntheticTaskSpec",
    "episodes_to_arrays",
    "gen_task",
    "SoftmaxPolicy",
    "evaluate",
    "policy_probs",
    "policy_probs_batch",
    "sample_responses_lab",
    "zero_policy",
    "GrpoStepStats",
    "PolicySnapshotPair",
    "draw_class_matrix",
    "grpo_grad_given_draws",
    "grpo_loss_given_draws",
    "grpo_step",
    "sft_grad",
    "sft_step",
    "ExperimentError",
    "LabConfig",
    "TrainReport",
    "load_lab_config",
    "run_experiment",
    "sign_test",
    "summarize",
    "write_report_csv",
]
