"""Dual IRLS for graph p-Laplacians and lp regression."""

from ._core import (
    Integrand,
    PlapError,
    classify,
    knn_graph,
    lp_norm,
    newton_regression,
    pca_reduce,
    random_instance,
    solve_problem,
    solve_regression,
)

__all__ = [
    "Integrand",
    "PlapError",
    "classify",
    "knn_graph",
    "lp_norm",
    "newton_regression",
    "pca_reduce",
    "random_instance",
    "solve_problem",
    "solve_regression",
]
