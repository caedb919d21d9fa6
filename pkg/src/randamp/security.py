r"""Analytic security quantities for the amplification protocol.

The headline bound on an adversary's probability of telling the
protocol's output from an ideal coin is

    P(guess) <= 1/2 + (3 sqrt(N_d) / 2) * [ alpha^N_d
                + 2 * N_b^(log2(1-eps)) * (32 beta eps^-5)^N_d ],

with 0 < alpha < 1 < beta the distillation constants, eps the source
quality, N_d the block size and N_b the number of blocks.  At the
parameters of interest the second term spans hundreds of orders of
magnitude (eps^(-5 N_d) alone overflows doubles), so the evaluator works
in natural-log space throughout; a naive float evaluator is kept for
cross-checking on the part of the grid where it does not overflow.

Choosing N_b = (32 beta eps^-5)^(2 N_d / |log2(1-eps)|) makes the second
term decay like the square of the first; rounding that rule up to a
power of 2 (the protocol needs one) only helps, since the N_b exponent
is negative.

Small explicit joint behaviours P(k, y, t, g, e | z) are supported for
exact evaluation of the guessing probability

    P(guess) = 1/2 + 1/4 * sum_{k,y,t,g} max_z sum_e |P - P_ideal|

and for numerically exercising the estimation inequality

    prod_i [alpha 2^-5 + beta I_i] <= (alpha 2^-5)^N_d
                                      + (2 beta)^N_d [r(b,y) = 0]

on explicit block distributions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mermin import mermin_coefficients
from .polytope import ConditionalDistribution

__all__ = [
    "SecurityParams",
    "JointBehavior",
    "BlockCountResult",
    "EstimationReport",
    "guessing_probability",
    "ideal_counterpart",
    "security_bound",
    "security_bound_naive",
    "recommended_block_count",
    "estimation_oracle",
    "min_entropy_report",
]

MAX_JOINT_STATES = 10 ** 6
MATERIALIZE_LOG2_LIMIT = 62


@dataclass(frozen=True)
class SecurityParams:
    epsilon: float
    block_size: int     # N_d
    log2_blocks: int    # log2(N_b); N_b itself may be astronomically large
    alpha: float
    beta: float

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 0.5:
            raise ValueError(f"epsilon must be in (0, 1/2], got {self.epsilon}")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        if self.log2_blocks < 0:
            raise ValueError("log2_blocks must be >= 0")
        if not 0.0 < self.alpha < 1.0 < self.beta:
            raise ValueError(
                f"need 0 < alpha < 1 < beta, got alpha={self.alpha}, "
                f"beta={self.beta}")

    @classmethod
    def with_block_count(cls, epsilon: float, block_size: int,
                         n_blocks: int, alpha: float,
                         beta: float) -> "SecurityParams":
        if n_blocks < 1 or n_blocks & (n_blocks - 1):
            raise ValueError(f"n_blocks must be a power of 2, got {n_blocks}")
        return cls(epsilon, block_size, n_blocks.bit_length() - 1, alpha, beta)


def security_bound(params: SecurityParams) -> float:
    """Right-hand side of the guessing bound, evaluated in log space."""
    n_d = params.block_size
    prefactor = math.log(3.0) + 0.5 * math.log(n_d)
    term1 = math.exp(prefactor - math.log(2.0) + n_d * math.log(params.alpha))
    log_term2 = (prefactor
                 + params.log2_blocks * math.log(1.0 - params.epsilon)
                 + n_d * (math.log(32.0) + math.log(params.beta)
                          - 5.0 * math.log(params.epsilon)))
    # exp() under/overflow is the point of log space: clamp gracefully.
    term2 = math.exp(log_term2) if log_term2 < 700.0 else math.inf
    return 0.5 + term1 + term2


def security_bound_naive(params: SecurityParams) -> float:
    """Direct float evaluation; overflows outside a small parameter box.

    Kept as an independent cross-check of the log-space path.
    """
    n_d = params.block_size
    n_b = 2.0 ** params.log2_blocks
    pre = 3.0 * math.sqrt(n_d) / 2.0
    term1 = params.alpha ** n_d
    term2 = (2.0 * n_b ** math.log2(1.0 - params.epsilon)
             * (32.0 * params.beta * params.epsilon ** -5.0) ** n_d)
    return 0.5 + pre * (term1 + term2)


@dataclass(frozen=True)
class BlockCountResult:
    """Recommended N_b; ``value`` is None when 2^log2 would not fit an i64."""

    log2: int
    value: int | None

    @property
    def materialized(self) -> bool:
        return self.value is not None


def recommended_block_count(epsilon: float, block_size: int,
                            beta: float) -> BlockCountResult:
    """N_b = (32 beta eps^-5)^(2 N_d / |log2(1-eps)|), next power of 2.

    Computed via log2 throughout; when the exponent exceeds 62 only the
    magnitude log2(N_b) is reported rather than a materialized integer.
    """
    if not 0.0 < epsilon <= 0.5:
        raise ValueError(f"epsilon must be in (0, 1/2], got {epsilon}")
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    if beta <= 0:
        raise ValueError("beta must be positive")
    log2_base = math.log2(32.0 * beta) - 5.0 * math.log2(epsilon)
    exponent = 2.0 * block_size / abs(math.log2(1.0 - epsilon))
    log2_raw = exponent * log2_base
    log2_nb = max(0, math.ceil(log2_raw))
    if log2_nb > MATERIALIZE_LOG2_LIMIT:
        return BlockCountResult(log2=log2_nb, value=None)
    return BlockCountResult(log2=log2_nb, value=2 ** log2_nb)


def min_entropy_report(predictability: float) -> float:
    """Quality of the distilled bit: eps_i = 1 - predictability."""
    if not 0.5 <= predictability <= 1.0:
        raise ValueError(
            f"predictability must be in [1/2, 1], got {predictability}")
    return 1.0 - predictability


# ---------------------------------------------------------------------------
# Explicit joint behaviours and the guessing probability
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JointBehavior:
    """Explicit table P(k, y, t, g, e | z) over small alphabets.

    Axis order is (k, y, t, g, e, z).  The table must be normalized per
    z and must not signal from z to the protocol's side: summing out e
    leaves a table independent of z (within 1e-9).
    """

    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        table.setflags(write=False)
        object.__setattr__(self, "table", table)
        if table.ndim != 6:
            raise ValueError(
                f"expected 6 axes (k, y, t, g, e, z), got {table.ndim}")
        if table.size > MAX_JOINT_STATES:
            raise ValueError(
                f"joint state space {table.size} exceeds the exact-"
                f"enumeration cap {MAX_JOINT_STATES}")
        if table.min() < -1e-12:
            raise ValueError("negative probability in joint table")
        per_z = table.sum(axis=(0, 1, 2, 3, 4))
        if np.abs(per_z - 1.0).max() > 1e-9:
            raise ValueError("table not normalized per z")
        marginal = table.sum(axis=4)
        spread = marginal.max(axis=-1) - marginal.min(axis=-1)
        if spread.max() > 1e-9:
            raise ValueError(
                "marginal over e depends on z (signalling toward the "
                "protocol)")

    @property
    def alphabet_sizes(self) -> tuple[int, ...]:
        return self.table.shape


def ideal_counterpart(behavior: JointBehavior,
                      uniform_axis_size: int = 2) -> JointBehavior:
    """Replace the k-marginal by a fair coin on the first two symbols.

    Branches where k lies beyond ``uniform_axis_size`` (the abort
    symbol) are copied unchanged, matching the convention that an
    aborted run's empty output is already ideal.
    """
    table = behavior.table
    ideal = table.copy()
    rest = table[:uniform_axis_size].sum(axis=0, keepdims=True)
    ideal[:uniform_axis_size] = rest / uniform_axis_size
    return JointBehavior(ideal)


def guessing_probability(behavior: JointBehavior,
                         ideal: JointBehavior) -> float:
    """1/2 + 1/4 sum_{k,y,t,g} max_z sum_e |P - P_ideal|."""
    if behavior.table.shape != ideal.table.shape:
        raise ValueError(
            f"alphabet mismatch: {behavior.table.shape} vs "
            f"{ideal.table.shape}")
    diff = np.abs(behavior.table - ideal.table).sum(axis=4)  # out: e
    worst = diff.max(axis=-1)                                # max over z
    return 0.5 + 0.25 * float(worst.sum())


# ---------------------------------------------------------------------------
# Estimation inequality oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EstimationReport:
    componentwise_max_violation: float
    aggregate_lhs: float
    aggregate_rhs: float

    @property
    def aggregate_violation(self) -> float:
        return self.aggregate_lhs - self.aggregate_rhs

    @property
    def max_violation(self) -> float:
        return max(self.componentwise_max_violation, self.aggregate_violation)


def estimation_oracle(block: ConditionalDistribution, block_size: int,
                      alpha: float, beta: float) -> EstimationReport:
    """Check the estimation inequality on an explicit block distribution.

    Componentwise, for every joint (b, y):

        prod_i [alpha 2^-5 + beta I(a_i, x_i)]
            <= (alpha 2^-5)^N_d + (2 beta)^N_d [any I(a_i, x_i) > 0]

    and, integrated against the block behaviour, the same inequality
    bounds the tensor functional's value.  Violations should never be
    positive; the worst one found is reported.
    """
    if block_size not in (1, 2):
        raise ValueError("explicit blocks supported for block_size in {1, 2}")
    if block.parties != 5 * block_size:
        raise ValueError(
            f"block has {block.parties} parties, expected {5 * block_size}")
    bell = mermin_coefficients(5)
    single = alpha * 2.0 ** -5 + beta * bell.functional.coefficients
    wrong = bell.functional.coefficients > 0.5

    d_single = 2 ** 5
    big = 2 ** (5 * block_size)
    joint = np.arange(big * big, dtype=np.int64)
    b_idx, y_idx = joint % big, joint // big
    lhs = np.ones(big * big)
    any_wrong = np.zeros(big * big, dtype=bool)
    for i in range(block_size):
        a_i = (b_idx >> (5 * i)) & (d_single - 1)
        x_i = (y_idx >> (5 * i)) & (d_single - 1)
        slot = a_i + d_single * x_i
        lhs = lhs * single[slot]
        any_wrong |= wrong[slot]
    rhs = (alpha * 2.0 ** -5) ** block_size + np.where(
        any_wrong, (2.0 * beta) ** block_size, 0.0)
    aggregate_lhs = float(lhs @ block.values)
    aggregate_rhs = float(rhs @ block.values)
    return EstimationReport(
        componentwise_max_violation=float((lhs - rhs).max()),
        aggregate_lhs=aggregate_lhs,
        aggregate_rhs=aggregate_rhs)
