r"""Distillation machinery: majority-bit functionals and the hash search.

Predictability of the majority bit at a fixed setting x0 can be written
as Gamma_w . P with Gamma_w = M_w + Lambda_w, where M_w picks the
outcomes with majority w at x0 and Lambda_w is any vector orthogonal to
the span of no-signalling behaviours.  The solver below looks for three
such vectors (one per majority value plus one slack vector) minimizing a
constant alpha such that, componentwise,

    sqrt(Gamma_0^2 + Gamma_1^2) <= alpha*C + beta*I + Lambda_2      (circle)
    |Gamma_w| <= gamma * sqrt(Gamma_0^2 + Gamma_1^2)                (cone)

with C the normalization functional and I the wrong-parity counting
functional.  The circle bound is linearized by the eight supporting
half-planes of an inscribed octagon (eta = 1/cos(pi/8)); the cone bound
is non-convex (a union of one quadrant cone per sign choice), so a first
LP without the cone constraints is solved to guess the componentwise
signs of Gamma_w, and a second LP re-minimizes alpha with the cone
constraints linearized for those signs.  Any feasible second-stage
solution certifies both bounds regardless of how the signs were guessed;
the guess only affects which certificate (if any) is found.

The hash-search half of the module draws random function tables
f: {0,1}^N_d -> {0,1} from a counter-based generator and exhaustively
verifies the distillation inequality

    |sum_w (delta_{f(w)}^k - 1/2) prod_i Gamma_{w_i}^i|
        <= slack * prod_i Omega_i

over a restricted per-slot domain of (Gamma_0, Gamma_1) pairs, retrying
until a table passes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sparse
from scipy.optimize import linprog

from .mermin import mermin_coefficients
from .polytope import LinearFunctional, index_of, nosignalling_span_basis

__all__ = [
    "DistillationVectors",
    "DistillationInfeasibleError",
    "HashSearchConfig",
    "HashSearchResult",
    "HashSearchError",
    "majority",
    "gamma_threshold",
    "solve_lambda_vectors",
    "find_hash_function",
    "verify_hash_function",
    "hash_family_table",
    "extract_bit",
    "support_pairs",
]

PARTIES = 5
DIM = 4 ** PARTIES  # 1024 components
OCTAGON_SCALE = 1.0 / math.cos(math.pi / 8)  # ~1.082
OCTAGON_ANGLES = tuple((2 * k + 1) * math.pi / 8 for k in range(8))
DEFAULT_BETA = 1.26
ORTHOGONALITY_TOL = 1e-9
BOUND_TOL = 1e-9
SIGN_TIE_TOL = 1e-9
GAMMA_ROUNDING_TOL = 5e-5


def majority(outcome) -> int:
    """Majority vote of the first three outcome bits; the rest are ignored.

    Accepts the packed little-endian outcome integer or any bit sequence
    with party 1 first.
    """
    if isinstance(outcome, (int, np.integer)):
        bits = [(int(outcome) >> i) & 1 for i in range(3)]
    else:
        bits = [int(b) for b in list(outcome)[:3]]
        if len(bits) < 3:
            raise ValueError("outcome must provide at least three bits")
    return 1 if sum(bits) >= 2 else 0


def gamma_threshold(block_size: int, gamma: float,
                    tol: float = GAMMA_ROUNDING_TOL) -> bool:
    """True iff (3 sqrt(N_d))^(-1/N_d) >= gamma - tol.

    The default tolerance absorbs the fact that published gamma values
    are rounded to four decimals: at gamma = 0.9732 exactly, block size
    130 evaluates to 0.973194, which agrees with the quoted constant at
    display precision but loses a strict comparison by 6e-6.
    """
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    value = math.exp(-math.log(3.0 * math.sqrt(block_size)) / block_size)
    return value >= gamma - tol


# ---------------------------------------------------------------------------
# The two-stage vector solve
# ---------------------------------------------------------------------------

class DistillationInfeasibleError(RuntimeError):
    """The LP of the given stage has no solution at the requested gamma."""

    def __init__(self, stage: int, gamma: float):
        super().__init__(
            f"stage-{stage} linear program infeasible at gamma={gamma}")
        self.stage = stage
        self.gamma = gamma


@dataclass(frozen=True)
class DistillationVectors:
    """Certified vectors for one setting; invariants checked on build."""

    setting: int
    gamma: float
    alpha: float
    beta: float
    lambda0: LinearFunctional
    lambda1: LinearFunctional
    lambda2: LinearFunctional

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0 < self.beta:
            raise ValueError(
                f"need 0 < alpha < 1 < beta, got alpha={self.alpha}, "
                f"beta={self.beta}")
        basis = _span_basis()
        for lam in (self.lambda0, self.lambda1, self.lambda2):
            residual = np.abs(basis @ lam.coefficients).max()
            if residual > ORTHOGONALITY_TOL:
                raise ValueError(
                    f"orthogonality residual {residual} exceeds "
                    f"{ORTHOGONALITY_TOL}")
        circle = (self.omega() - self.circle_radius()).max()
        if circle > BOUND_TOL:
            raise ValueError(f"circle bound violated by {circle}")
        omega = self.omega()
        cone = max(
            (np.abs(self.gamma_w(0)) - self.gamma * omega).max(),
            (np.abs(self.gamma_w(1)) - self.gamma * omega).max())
        if cone > BOUND_TOL:
            raise ValueError(f"cone bound violated by {cone}")

    def majority_indicator(self, w: int) -> np.ndarray:
        """M_w: 1 on (a, x0) with majority(a) = w, else 0."""
        m = np.zeros(DIM)
        for a in range(2 ** PARTIES):
            if majority(a) == w:
                m[index_of(a, self.setting, PARTIES)] = 1.0
        return m

    def gamma_w(self, w: int) -> np.ndarray:
        lam = self.lambda0 if w == 0 else self.lambda1
        return self.majority_indicator(w) + lam.coefficients

    def omega(self) -> np.ndarray:
        return np.sqrt(self.gamma_w(0) ** 2 + self.gamma_w(1) ** 2)

    def circle_radius(self) -> np.ndarray:
        bell = mermin_coefficients(PARTIES)
        c = np.full(DIM, 2.0 ** -PARTIES)
        return (self.alpha * c + self.beta * bell.functional.coefficients
                + self.lambda2.coefficients)


@lru_cache(maxsize=1)
def _span_basis() -> np.ndarray:
    return nosignalling_span_basis(PARTIES)


@lru_cache(maxsize=1)
def _bell_vector() -> np.ndarray:
    return mermin_coefficients(PARTIES).functional.coefficients.copy()


def _majority_vectors(setting: int) -> tuple[np.ndarray, np.ndarray]:
    m0 = np.zeros(DIM)
    m1 = np.zeros(DIM)
    for a in range(2 ** PARTIES):
        (m1 if majority(a) else m0)[index_of(a, setting, PARTIES)] = 1.0
    return m0, m1


@lru_cache(maxsize=1)
def _stage1_matrices():
    """Constraint matrices of the sign-guessing LP; setting-independent.

    Columns: [Lambda0 | Lambda1 | Lambda2 | alpha | beta].  The octagon
    rows read eta*cos(t)*Gamma0 + eta*sin(t)*Gamma1 <= alpha*C + beta*I
    + Lambda2, with the M_w offsets moved to the right-hand side (which
    is the only setting-dependent part).
    """
    basis = sparse.csr_matrix(_span_basis())
    n_basis = basis.shape[0]
    zero = sparse.csr_matrix((n_basis, DIM))
    pad = sparse.csr_matrix((n_basis, 2))
    a_eq = sparse.vstack([
        sparse.hstack([basis, zero, zero, pad]),
        sparse.hstack([zero, basis, zero, pad]),
        sparse.hstack([zero, zero, basis, pad]),
    ]).tocsr()
    bell = _bell_vector()
    c_vec = np.full(DIM, 2.0 ** -PARTIES)
    idx = np.arange(DIM)
    rows, cols, vals = [], [], []
    row0 = 0
    for theta in OCTAGON_ANGLES:
        ct = OCTAGON_SCALE * math.cos(theta)
        st = OCTAGON_SCALE * math.sin(theta)
        rows.append(np.repeat(np.arange(row0, row0 + DIM), 5))
        cols.append(np.column_stack(
            [idx, DIM + idx, 2 * DIM + idx,
             np.full(DIM, 3 * DIM), np.full(DIM, 3 * DIM + 1)]).ravel())
        vals.append(np.column_stack(
            [np.full(DIM, ct), np.full(DIM, st), np.full(DIM, -1.0),
             -c_vec, -bell]).ravel())
        row0 += DIM
    a_ub = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(row0, 3 * DIM + 2))
    return a_ub, a_eq


def _stage1_rhs(m0: np.ndarray, m1: np.ndarray) -> np.ndarray:
    parts = []
    for theta in OCTAGON_ANGLES:
        ct = OCTAGON_SCALE * math.cos(theta)
        st = OCTAGON_SCALE * math.sin(theta)
        parts.append(-ct * m0 - st * m1)
    return np.concatenate(parts)


def _guess_signs(solution: np.ndarray, m0: np.ndarray, m1: np.ndarray,
                 tol: float = SIGN_TIE_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise signs of Gamma_w from the stage-1 solution.

    A component whose value sits within the tie tolerance inherits the
    partner component's sign (the cone constraints couple the pair, so a
    vanishing partner must grow in a compatible direction); a doubly
    degenerate component defaults to +1.
    """
    g0 = m0 + solution[:DIM]
    g1 = m1 + solution[DIM: 2 * DIM]
    s0 = np.where(g0 > tol, 1.0, np.where(g0 < -tol, -1.0, 0.0))
    s1 = np.where(g1 > tol, 1.0, np.where(g1 < -tol, -1.0, 0.0))
    tied0 = s0 == 0.0
    tied1 = s1 == 0.0
    s0[tied0] = np.where(s1[tied0] != 0.0, s1[tied0], 1.0)
    s1[tied1] = np.where(s0[tied1] != 0.0, s0[tied1], 1.0)
    return s0, s1


def _stage2_problem(m0, m1, gamma, beta, s0, s1):
    """Second-stage LP in signed variables V_w = s_w * Gamma_w.

    Columns: [V0 | V1 | Lambda2 | alpha] with V_w >= 0 as plain variable
    bounds; the cone inequalities become V_w <= kappa * V_{1-w} with
    kappa = sqrt(gamma^2 / (1 - gamma^2)).
    """
    kappa = math.sqrt(gamma ** 2 / (1.0 - gamma ** 2))
    bell = _bell_vector()
    c_vec = np.full(DIM, 2.0 ** -PARTIES)
    idx = np.arange(DIM)
    rows, cols, vals, rhs = [], [], [], []
    row0 = 0
    for theta in OCTAGON_ANGLES:
        ct = OCTAGON_SCALE * math.cos(theta)
        st = OCTAGON_SCALE * math.sin(theta)
        rows.append(np.repeat(np.arange(row0, row0 + DIM), 4))
        cols.append(np.column_stack(
            [idx, DIM + idx, 2 * DIM + idx, np.full(DIM, 3 * DIM)]).ravel())
        vals.append(np.column_stack(
            [ct * s0, st * s1, np.full(DIM, -1.0), -c_vec]).ravel())
        rhs.append(beta * bell)
        row0 += DIM
    pair_cols = np.column_stack([idx, DIM + idx]).ravel()
    rows.append(np.repeat(np.arange(row0, row0 + DIM), 2))
    cols.append(pair_cols)
    vals.append(np.column_stack([np.ones(DIM), -kappa * np.ones(DIM)]).ravel())
    rhs.append(np.zeros(DIM))
    row0 += DIM
    rows.append(np.repeat(np.arange(row0, row0 + DIM), 2))
    cols.append(pair_cols)
    vals.append(np.column_stack([-kappa * np.ones(DIM), np.ones(DIM)]).ravel())
    rhs.append(np.zeros(DIM))
    row0 += DIM
    a_ub = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(row0, 3 * DIM + 1))

    basis = sparse.csr_matrix(_span_basis())
    n_basis = basis.shape[0]
    zero = sparse.csr_matrix((n_basis, DIM))
    pad = sparse.csr_matrix((n_basis, 1))
    a_eq = sparse.vstack([
        sparse.hstack([basis.multiply(s0[None, :]).tocsr(), zero, zero, pad]),
        sparse.hstack([zero, basis.multiply(s1[None, :]).tocsr(), zero, pad]),
        sparse.hstack([zero, zero, basis, pad]),
    ]).tocsr()
    dense = _span_basis()
    b_eq = np.concatenate([dense @ m0, dense @ m1, np.zeros(n_basis)])
    return a_ub, np.concatenate(rhs), a_eq, b_eq


def solve_lambda_vectors(setting: int, gamma: float,
                         beta: float = DEFAULT_BETA) -> DistillationVectors:
    """Two-stage solve for the distillation vectors at one setting.

    ``beta`` is pinned to its published value in the second stage: the
    certificate is degenerate in beta (a whole interval of values is
    feasible at the optimal alpha), and fixing it keeps the reported
    numbers identical across settings and runs.  Raises
    :class:`DistillationInfeasibleError` when the requested gamma is
    below the feasible range (the second stage is where gamma enters).
    """
    bell = mermin_coefficients(PARTIES)
    if setting not in bell.support:
        raise ValueError(f"setting {setting} is outside the Bell support")
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must be in (0, 1), got {gamma}")
    if not 1.0 < beta:
        raise ValueError(f"beta must exceed 1, got {beta}")

    m0, m1 = _majority_vectors(setting)
    a_ub, a_eq = _stage1_matrices()
    objective = np.zeros(3 * DIM + 2)
    objective[3 * DIM] = 1.0
    bounds = [(None, None)] * (3 * DIM) + [(0.0, 1.0), (1.0, 1000.0)]
    stage1 = linprog(objective, A_ub=a_ub, b_ub=_stage1_rhs(m0, m1),
                     A_eq=a_eq, b_eq=np.zeros(a_eq.shape[0]),
                     bounds=bounds, method="highs")
    if stage1.status in (2, 3):
        raise DistillationInfeasibleError(1, gamma)
    if stage1.status != 0:
        raise RuntimeError(f"stage-1 solver failure: {stage1.message}")

    s0, s1 = _guess_signs(stage1.x, m0, m1)
    a_ub2, b_ub2, a_eq2, b_eq2 = _stage2_problem(m0, m1, gamma, beta, s0, s1)
    objective2 = np.zeros(3 * DIM + 1)
    objective2[3 * DIM] = 1.0
    bounds2 = ([(0.0, None)] * (2 * DIM) + [(None, None)] * DIM
               + [(0.0, 1.0)])
    stage2 = linprog(objective2, A_ub=a_ub2, b_ub=b_ub2, A_eq=a_eq2,
                     b_eq=b_eq2, bounds=bounds2, method="highs")
    if stage2.status == 4:
        # Near the feasibility edge the simplex can stall; the interior
        # point method classifies these instances cleanly.
        stage2 = linprog(objective2, A_ub=a_ub2, b_ub=b_ub2, A_eq=a_eq2,
                         b_eq=b_eq2, bounds=bounds2, method="highs-ipm")
    if stage2.status in (2, 3):
        raise DistillationInfeasibleError(2, gamma)
    if stage2.status != 0:
        raise RuntimeError(f"stage-2 solver failure: {stage2.message}")

    v0 = stage2.x[:DIM]
    v1 = stage2.x[DIM: 2 * DIM]
    lam2 = stage2.x[2 * DIM: 3 * DIM]
    alpha = float(stage2.x[3 * DIM])
    return DistillationVectors(
        setting=setting, gamma=gamma, alpha=alpha, beta=beta,
        lambda0=LinearFunctional(PARTIES, s0 * v0 - m0),
        lambda1=LinearFunctional(PARTIES, s1 * v1 - m1),
        lambda2=LinearFunctional(PARTIES, lam2))


def support_pairs(vectors: DistillationVectors,
                  decimals: int = 9) -> np.ndarray:
    """Distinct (Gamma_0, Gamma_1) pairs over the supported settings.

    Components with both entries zero are dropped (they never constrain
    the hash), and the remaining pairs are deduplicated after rounding,
    giving the restricted per-slot domain used by the hash search.
    """
    bell = mermin_coefficients(PARTIES)
    g0 = vectors.gamma_w(0)
    g1 = vectors.gamma_w(1)
    keep = []
    for x in sorted(bell.support):
        for a in range(2 ** PARTIES):
            i = index_of(a, x, PARTIES)
            keep.append((g0[i], g1[i]))
    pairs = np.round(np.array(keep), decimals)
    pairs = pairs[np.abs(pairs).max(axis=1) > 0.0]
    return np.unique(pairs, axis=0)


# ---------------------------------------------------------------------------
# Hash search
# ---------------------------------------------------------------------------

class HashSearchError(RuntimeError):
    """Every attempted function table failed verification."""

    def __init__(self, attempts: int, union_bound: float):
        super().__init__(
            f"no valid hash function after {attempts} attempts "
            f"(union bound {union_bound:.3g}; existence is only "
            "guaranteed when the bound is below 1)")
        self.attempts = attempts
        self.union_bound = union_bound


@dataclass(frozen=True)
class HashSearchConfig:
    """Search parameters; ``slack`` defaults to 3 sqrt(block_size)."""

    block_size: int
    slack: float | None = None
    seed: int = 0
    max_attempts: int = 100

    def __post_init__(self):
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        if self.slack is not None and self.slack <= 0:
            raise ValueError("slack must be positive")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    @property
    def effective_slack(self) -> float:
        if self.slack is not None:
            return self.slack
        return 3.0 * math.sqrt(self.block_size)


@dataclass(frozen=True)
class HashSearchResult:
    table: np.ndarray          # 2^block_size bits, index w packed little-endian
    block_size: int
    attempts: int
    slack: float
    union_bound: float         # 2 * (#sequences) * exp(-slack^2)
    premise_margin: float      # max |Gamma_w| - (3 sqrt(N_d))^(-1/N_d) Omega

    @property
    def premise_holds(self) -> bool:
        return self.premise_margin <= 1e-9

    def bitstring(self) -> str:
        return "".join(str(int(b)) for b in self.table)


def _as_slot_arrays(gammas: Sequence[np.ndarray],
                    block_size: int) -> list[np.ndarray]:
    if len(gammas) != block_size:
        raise ValueError(
            f"got {len(gammas)} slot tables for block size {block_size}")
    slots = []
    for i, table in enumerate(gammas):
        arr = np.asarray(table, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
            raise ValueError(
                f"slot {i} must be a non-empty (points, 2) array, got "
                f"shape {arr.shape}")
        slots.append(arr)
    return slots


def _hash_values(table: np.ndarray,
                 slots: list[np.ndarray]) -> np.ndarray:
    """Tensor of sum_w (delta_{f(w)}^0 - 1/2) prod_i Gamma_{w_i}^i.

    Index i of the result runs over slot i's support points.  The k=1
    value is the negative of the k=0 value, so one tensor settles both.
    """
    block_size = len(slots)
    signs = np.where(np.asarray(table) == 0, 0.5, -0.5)
    tensor = signs.reshape((2,) * block_size, order="F")
    for slot in slots:
        # contract the leading w-axis, appending that slot's point axis
        tensor = np.tensordot(tensor, slot, axes=([0], [1]))
    return tensor


def verify_hash_function(table: Sequence[int],
                         gammas: Sequence[np.ndarray],
                         slack: float) -> float:
    """Worst excess of |hash value| over slack * prod Omega; <= 0 passes.

    Pure recomputation, independent of how the table was found: it
    enumerates every sequence in the slot domain.
    """
    table = np.asarray(table, dtype=np.int64)
    block_size = int(np.log2(len(table)))
    if 2 ** block_size != len(table):
        raise ValueError("table length must be a power of 2")
    slots = _as_slot_arrays(gammas, block_size)
    values = np.abs(_hash_values(table, slots))
    omega_prod = np.ones(())
    for slot in slots:
        omega = np.sqrt(slot[:, 0] ** 2 + slot[:, 1] ** 2)
        omega_prod = np.multiply.outer(omega_prod, omega)
    return float((values - slack * omega_prod).max())


def find_hash_function(gammas: Sequence[np.ndarray],
                       config: HashSearchConfig) -> HashSearchResult:
    """Randomized search for a table satisfying the distillation bound.

    Function tables are drawn uniformly from a counter-based Philox
    stream (reproducible for a given seed) and each candidate is checked
    exhaustively over the slot domain.  The premise margin and the
    union bound for the restricted domain are reported on the result;
    when the premise fails or the union bound reaches 1 the search is
    still attempted, but a draw is no longer guaranteed to succeed with
    positive probability.
    """
    slots = _as_slot_arrays(gammas, config.block_size)
    slack = config.effective_slack
    n_sequences = 1
    premise_margin = -math.inf
    premise_factor = math.exp(
        -math.log(3.0 * math.sqrt(config.block_size)) / config.block_size)
    for slot in slots:
        n_sequences *= slot.shape[0]
        omega = np.sqrt(slot[:, 0] ** 2 + slot[:, 1] ** 2)
        margin = float((np.abs(slot) - premise_factor * omega[:, None]).max())
        premise_margin = max(premise_margin, margin)
    union_bound = 2.0 * n_sequences * math.exp(-slack ** 2)

    rng = np.random.Generator(np.random.Philox(config.seed))
    verify_tol = 1e-12
    for attempt in range(1, config.max_attempts + 1):
        table = rng.integers(0, 2, size=2 ** config.block_size)
        if verify_hash_function(table, gammas, slack) <= verify_tol:
            return HashSearchResult(
                table=table, block_size=config.block_size, attempts=attempt,
                slack=slack, union_bound=union_bound,
                premise_margin=premise_margin)
    raise HashSearchError(config.max_attempts, union_bound)


# ---------------------------------------------------------------------------
# Bit extraction
# ---------------------------------------------------------------------------

def hash_family_table(name: str, arity: int) -> np.ndarray:
    """Named function families instantiated at a given arity."""
    size = 2 ** arity
    if name == "xor":
        return np.array([bin(w).count("1") & 1 for w in range(size)],
                        dtype=np.int64)
    if name == "const0":
        return np.zeros(size, dtype=np.int64)
    if name == "const1":
        return np.ones(size, dtype=np.int64)
    raise ValueError(f"unknown hash family {name!r}")


def extract_bit(block_outputs: Sequence[int],
                table: Sequence[int]) -> int:
    """Majority bit per quintuplet, then the function table.

    The majority string w indexes the table little-endian: quintuplet i
    contributes bit i of the index.
    """
    table = np.asarray(table, dtype=np.int64)
    arity = int(np.log2(len(table)))
    if 2 ** arity != len(table):
        raise ValueError("table length must be a power of 2")
    outputs = list(block_outputs)
    if len(outputs) != arity:
        raise ValueError(
            f"block has {len(outputs)} quintuplets but the table has "
            f"arity {arity}")
    index = 0
    for i, outcome in enumerate(outputs):
        index |= majority(outcome) << i
    return int(table[index])
