"""Randomness amplification toolkit.

Models n-party no-signalling behaviours, builds the parity Bell tests
that certify randomness, solves the adversarial predictability and
distillation linear programs, searches hash functions for the final-bit
extraction, simulates the full protocol, and evaluates the analytic
security bound.
"""

from .polytope import (
    ConditionalDistribution,
    ConstraintMatrix,
    LinearFunctional,
    LinearProgramSpec,
    LPSolution,
    block_functional_value,
    functional_value,
    is_nonsignalling,
    nosignalling_constraints,
    uniform_distribution,
)
from .mermin import (
    BellFunctional,
    deterministic_strategy_value,
    ghz_correlations,
    mermin_coefficients,
    minimum_deterministic_value,
)
from .adversary import (
    OutputFunction,
    PredictabilityResult,
    enumerate_unbiased_functions,
    max_predictability,
    seven_party_predictability,
)
from .distill import (
    DistillationVectors,
    HashSearchConfig,
    extract_bit,
    find_hash_function,
    gamma_threshold,
    majority,
    solve_lambda_vectors,
    verify_hash_function,
)
from .protocol import (
    BoxModel,
    EpsilonSource,
    MonteCarloSummary,
    ProtocolConfig,
    ProtocolTranscript,
    check_quintuplet,
    monte_carlo,
    run_protocol,
    sample_source,
)
from .security import (
    JointBehavior,
    SecurityParams,
    estimation_oracle,
    guessing_probability,
    min_entropy_report,
    recommended_block_count,
    security_bound,
)

__version__ = "0.1.0"
