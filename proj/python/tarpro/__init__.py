"""Inference-time target projection for domain generalization."""

from ._tarpro import (
    Dataset,
    Error,
    Pipeline,
    a_distance,
    cluster_stats,
    default_config,
    elbow_index,
    load_checkpoint,
    loss_ls,
    pairwise_loss,
    parse_config,
    run_experiment,
    smooth,
    two_moons,
)

__all__ = [
    "Dataset",
    "Error",
    "Pipeline",
    "a_distance",
    "cluster_stats",
    "default_config",
    "elbow_index",
    "load_checkpoint",
    "loss_ls",
    "pairwise_loss",
    "parse_config",
    "run_experiment",
    "smooth",
    "two_moons",
]
