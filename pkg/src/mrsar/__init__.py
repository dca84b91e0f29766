"""Markovian regime-switching time-series models with independent regimes.

Exact forward/backward/EM inference over an augmented state space of
per-regime lag counters, plus truncated variants, dependent-regime and
approximate baselines, a simulator, a brute-force oracle, and an
electricity-price detrending pipeline.
"""

from .backward import InternalInconsistencyError, SmoothedResult, backward_smooth
from .baselines import (
    DependentMrsModel,
    HamiltonResult,
    KimResult,
    dependent_em,
    emlike_fit,
    hamilton_forward,
    kim_backward,
)
from .em import (
    EmError,
    EmSufficientStats,
    FitReport,
    default_start_sampler,
    em_fit,
    multistart,
)
from .forward import (
    ForwardResult,
    UnderflowError,
    ZeroLikelihoodError,
    forward_normalized,
    forward_simple,
)
from .model import (
    EmConfig,
    ModelError,
    MrsModel,
    RegimeSpec,
    canonical_labels,
    model_1,
    model_2,
    spike_example_model,
)
from .oracle import OracleResult, brute_dependent, brute_likelihood
from .pipeline import (
    CandidateFit,
    GapError,
    PriceSeries,
    TrendModel,
    bic,
    candidate_template,
    classify,
    daily_average,
    fit_candidates,
    quartiles,
    rfp_detrend,
)
from .simulate import SimResult, simulate, simulate_dependent
from .states import StateGraph, build_graph, cardinality, enumerate_counters

__all__ = [
    "CandidateFit",
    "DependentMrsModel",
    "EmConfig",
    "EmError",
    "EmSufficientStats",
    "FitReport",
    "ForwardResult",
    "GapError",
    "HamiltonResult",
    "InternalInconsistencyError",
    "KimResult",
    "ModelError",
    "MrsModel",
    "OracleResult",
    "PriceSeries",
    "RegimeSpec",
    "SimResult",
    "SmoothedResult",
    "StateGraph",
    "TrendModel",
    "UnderflowError",
    "ZeroLikelihoodError",
    "backward_smooth",
    "bic",
    "brute_dependent",
    "brute_likelihood",
    "build_graph",
    "candidate_template",
    "canonical_labels",
    "cardinality",
    "classify",
    "daily_average",
    "default_start_sampler",
    "dependent_em",
    "em_fit",
    "emlike_fit",
    "enumerate_counters",
    "fit_candidates",
    "forward_normalized",
    "forward_simple",
    "hamilton_forward",
    "kim_backward",
    "model_1",
    "model_2",
    "multistart",
    "quartiles",
    "rfp_detrend",
    "simulate",
    "simulate_dependent",
    "spike_example_model",
]

__version__ = "0.1.0"
