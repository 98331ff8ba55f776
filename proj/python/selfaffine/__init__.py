"""Self-affine attractors: open set condition, pseudo norms and measure brackets."""

from ._selfaffine import (
    PseudoNorm,
    SelfAffineError,
    System,
    attractor_cloud,
    chaos_game,
    config_hash,
    decide_osc,
    dim_estimate,
    expansion_set,
    measure_estimate,
    run,
)

__all__ = [
    "PseudoNorm",
    "SelfAffineError",
    "System",
    "attractor_cloud",
    "chaos_game",
    "config_hash",
    "decide_osc",
    "dim_estimate",
    "expansion_set",
    "measure_estimate",
    "run",
]
