"""Mahalanobis rerandomization and inference for the sample average treatment effect."""

from ._core import (
    METHODS,
    adjusted_interval,
    analyze,
    bayes_interval,
    chisq_quantile,
    draw_allocation,
    enumerate_acceptance_set,
    generate_dataset,
    ldr_interval,
    mahalanobis,
    neyman_interval,
    run_grid,
)

__all__ = [
    "METHODS",
    "adjusted_interval",
    "analyze",
    "bayes_interval",
    "chisq_quantile",
    "draw_allocation",
    "enumerate_acceptance_set",
    "generate_dataset",
    "ldr_interval",
    "mahalanobis",
    "neyman_interval",
    "run_grid",
]
