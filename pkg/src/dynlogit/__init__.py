"""Fixed-effect dynamic panel logit: valid moment functions, their numerical discovery and GMM estimation."""

from .gmm import EstimationConfig, EstimationError, EstimationResult, InstrumentPlan, bootstrap_se, estimate, fe_logit_mle, pooled_logit_mle
from .model import ModelSpec, PanelDataset, Parameters, probability_table, simulate_panel

__all__ = [
    "EstimationConfig",
    "EstimationError",
    "EstimationResult",
    "InstrumentPlan",
    "ModelSpec",
    "PanelDataset",
    "Parameters",
    "bootstrap_se",
    "estimate",
    "fe_logit_mle",
    "pooled_logit_mle",
    "probability_table",
    "simulate_panel",
]
