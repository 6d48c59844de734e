"""Training-free neural architecture search for detection backbones.

Scores candidate backbones by the Gaussian upper bound of their feature-map
entropy, aggregated across the five pyramid stages, and searches the block
space with a budget-constrained coarse-to-fine evolutionary loop. No
training, no gradients: one randomized forward pass per candidate.
"""

__version__ = "0.1.0"

from .arch import (
    ArchitectureSpec,
    BlockSpec,
    BlockType,
    CostReport,
    InvalidArchitectureError,
    ParseError,
    ValidationResult,
    cost_report,
    count_depth,
    count_flops,
    count_params,
    parse,
    serialize,
    structural_hash,
    validate,
)
from .engine import (
    FeatureMap,
    ForwardResult,
    NonFiniteActivationError,
    RescaleLedger,
    conv2d,
    gaussian_input,
    relu,
    rescaled_forward,
)
from .entropy import (
    DegenerateArchitectureError,
    DegenerateFeatureMapError,
    EntropyReport,
    StageWeights,
    gaussian_entropy,
    multiscale_entropy,
    stage_entropy,
)
from .evolution import (
    AdmitDecision,
    MutationFlag,
    Population,
    SearchConfig,
    SearchResult,
    admit,
    default_scorer,
    maintain,
    mutate,
    scoring_stream,
    search,
)
from .rng import SeededRng

__all__ = [
    "ArchitectureSpec",
    "BlockSpec",
    "BlockType",
    "CostReport",
    "InvalidArchitectureError",
    "ParseError",
    "ValidationResult",
    "cost_report",
    "count_depth",
    "count_flops",
    "count_params",
    "parse",
    "serialize",
    "structural_hash",
    "validate",
    "FeatureMap",
    "ForwardResult",
    "NonFiniteActivationError",
    "RescaleLedger",
    "conv2d",
    "gaussian_input",
    "relu",
    "rescaled_forward",
    "DegenerateArchitectureError",
    "DegenerateFeatureMapError",
    "EntropyReport",
    "StageWeights",
    "gaussian_entropy",
    "multiscale_entropy",
    "stage_entropy",
    "AdmitDecision",
    "MutationFlag",
    "Population",
    "SearchConfig",
    "SearchResult",
    "admit",
    "default_scorer",
    "maintain",
    "mutate",
    "scoring_stream",
    "search",
    "SeededRng",
]
