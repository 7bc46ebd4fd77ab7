"""Hierarchical log-linear density models over finite discrete spaces.

The package learns energy-based models whose interaction structure is chosen
greedily under a heredity rule, decomposes KL error completely into
per-interaction refined information, and scales past exact enumeration with
higher-order block Gibbs sampling and annealed importance sampling.
"""

from .core import (
    DenseTensor,
    InteractionCollection,
    ProbTensor,
    Shape,
    VarSubset,
    center_fibers,
    expand_uniform,
    heredity_count,
    is_hierarchical,
    marginalize,
)
from .data import (
    Dataset,
    SyntheticSpec,
    classify,
    empirical_marginal,
    load_csv,
    split,
    synth_generate,
)
from .errors import (
    CapacityError,
    ConvergenceError,
    DomainError,
    MahgentaError,
    ParseError,
    StepSizeError,
)
from .estimators import MahgentaDensity, ManyBodyDensity
from .info import (
    Chain,
    DecompositionReport,
    canonical_ri,
    decompose_chain,
    entropy,
    greedy_chain,
    information_lattice,
    j_value,
    kl_divergence,
    mmi,
    random_maximal_chain,
    refined_information,
)
from .loglinear import (
    EtaVector,
    ThetaModel,
    energy,
    exact_log_partition,
    gd_fit,
    ipf_project,
    model_eta,
    project,
    purified_gradient,
)
from .sampling import (
    AisEstimate,
    ChainState,
    ais_log_partition,
    block_gibbs_sweep,
    draw_samples,
    estimate_eta,
    stochastic_fit,
)
from .selection import (
    SelectionConfig,
    SelectionHistory,
    mahgenta_fit,
    next_available_interactions,
    score_interaction,
    top_interactions,
)

__version__ = "0.1.0"

__all__ = [
    "AisEstimate",
    "CapacityError",
    "Chain",
    "ChainState",
    "ConvergenceError",
    "Dataset",
    "DecompositionReport",
    "DenseTensor",
    "DomainError",
    "EtaVector",
    "InteractionCollection",
    "MahgentaDensity",
    "MahgentaError",
    "ManyBodyDensity",
    "ParseError",
    "ProbTensor",
    "SelectionConfig",
    "SelectionHistory",
    "Shape",
    "StepSizeError",
    "SyntheticSpec",
    "ThetaModel",
    "VarSubset",
    "ais_log_partition",
    "block_gibbs_sweep",
    "canonical_ri",
    "center_fibers",
    "classify",
    "decompose_chain",
    "draw_samples",
    "empirical_marginal",
    "energy",
    "entropy",
    "estimate_eta",
    "exact_log_partition",
    "expand_uniform",
    "gd_fit",
    "greedy_chain",
    "heredity_count",
    "information_lattice",
    "ipf_project",
    "is_hierarchical",
    "j_value",
    "kl_divergence",
    "load_csv",
    "mahgenta_fit",
    "marginalize",
    "mmi",
    "model_eta",
    "next_available_interactions",
    "project",
    "purified_gradient",
    "random_maximal_chain",
    "refined_information",
    "score_interaction",
    "split",
    "stochastic_fit",
    "synth_generate",
    "top_interactions",
]
