"""Cache placement: convex solver, strip layout and per-device realization."""

from .packing import (CacheLayout, Piece, column_configurations, pack_layout,
                      pack_probabilities, realize_cache)
from .solver import (PlacementSolution, SolverError, caching_prob_given_nu,
                     delivery_success_prob, expected_quality_sum, multiplier_bracket,
                     rate_coefficient, solve_placement)

__all__ = [
    "CacheLayout", "Piece", "PlacementSolution", "SolverError",
    "caching_prob_given_nu", "column_configurations", "delivery_success_prob",
    "expected_quality_sum", "multiplier_bracket", "pack_layout", "pack_probabilities",
    "rate_coefficient", "realize_cache", "solve_placement",
]
