"""Sample-influence diagnostics for GLMs, scaled up with random projections."""

from .glm import (ConvergenceError, FitOptions, GlmFit, fit_from_coefficients, fit_irls,
                  get_family, irls_weight, pseudo_residuals)
from .influence import (InfluenceReport, LeverageVector, RankDeficientError, case_deletion_delta,
                        clamp_leverage, exact_cooks, exact_influence, exact_leverage,
                        influence_share, influence_sketch, leverage_ratio, pca_leverage)
from .sketch import ProjectionMatrix, ProjectionSpec, make_projection, project, recommend_k
from .sparse import (DiagonalWeights, DimensionError, FactorizationError, JitterPolicy,
                     SparseDesignMatrix, gram, scale_rows, solve_spd, spmm_dense)

__all__ = [
    "ConvergenceError", "DiagonalWeights", "DimensionError", "FactorizationError", "FitOptions",
    "GlmFit", "InfluenceReport", "JitterPolicy", "LeverageVector", "ProjectionMatrix",
    "ProjectionSpec", "RankDeficientError", "SparseDesignMatrix", "case_deletion_delta",
    "clamp_leverage", "exact_cooks", "exact_influence", "exact_leverage", "fit_from_coefficients",
    "fit_irls", "get_family", "gram", "influence_share", "influence_sketch", "irls_weight",
    "leverage_ratio", "make_projection", "pca_leverage", "project", "pseudo_residuals",
    "recommend_k", "scale_rows", "solve_spd", "spmm_dense",
]
