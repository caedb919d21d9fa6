r"""Vector algebra for n-party conditional probability distributions.

A behaviour of n parties, each with a binary input x_i and binary output
a_i, is the table P(a|x) with a, x in {0,1}^n.  We store it as a dense
vector of length 4^n with the fixed index convention

    index = a + 2^n * x,

where outcome and setting strings are packed little-endian: bit i of the
integer is party (i+1)'s bit.  The same convention is used for linear
functionals F so that F . P = sum_{a,x} F(a,x) P(a|x) is a plain dot
product.

The module also generates the no-signalling equality constraints (each
party's marginal must not depend on the other parties' settings), a basis
of the linear span of no-signalling behaviours (used to impose
orthogonality to that span in linear programs), and a thin deterministic
LP wrapper around scipy's HiGHS backend that checks primal feasibility
and the duality gap of every solution it reports as optimal.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sparse
from scipy.optimize import linprog

__all__ = [
    "ConditionalDistribution",
    "LinearFunctional",
    "ConstraintMatrix",
    "LinearProgramSpec",
    "LPSolution",
    "SolverError",
    "bits_to_int",
    "int_to_bits",
    "index_of",
    "split_index",
    "uniform_distribution",
    "normalization_functional",
    "nosignalling_constraints",
    "nosignalling_residuals",
    "is_nonsignalling",
    "nosignalling_span_basis",
    "functional_value",
    "block_functional_value",
    "tensor_distribution",
    "tensor_power_functional",
    "solve_lp_arrays",
]

NONNEG_TOL = 1e-12
NORMALIZATION_TOL = 1e-9
PRIMAL_FEASIBILITY_TOL = 1e-8
DUALITY_GAP_RTOL = 1e-7


# ---------------------------------------------------------------------------
# Bit packing helpers
# ---------------------------------------------------------------------------

def bits_to_int(bits: str | Sequence[int]) -> int:
    """Pack a bit string into an integer, party 1 first (little-endian).

    Accepts a "10010"-style string (party 1 is the leftmost character) or
    any sequence of 0/1 ints.
    """
    value = 0
    for i, b in enumerate(bits):
        bit = int(b)
        if bit not in (0, 1):
            raise ValueError(f"invalid bit {b!r} in {bits!r}")
        value |= bit << i
    return value


def int_to_bits(value: int, parties: int) -> str:
    """Inverse of :func:`bits_to_int`; returns a party-1-leftmost string."""
    if not 0 <= value < 2 ** parties:
        raise ValueError(f"value {value} out of range for {parties} parties")
    return "".join(str((value >> i) & 1) for i in range(parties))


def index_of(a: int, x: int, parties: int) -> int:
    """Component index of outcome a under setting x: a + 2^n * x."""
    d = 2 ** parties
    if not (0 <= a < d and 0 <= x < d):
        raise ValueError(f"(a={a}, x={x}) out of range for {parties} parties")
    return a + d * x


def split_index(idx: int, parties: int) -> tuple[int, int]:
    """Inverse of :func:`index_of`; returns (a, x)."""
    d = 2 ** parties
    if not 0 <= idx < d * d:
        raise ValueError(f"index {idx} out of range for {parties} parties")
    return idx % d, idx // d


def _parity(v: int) -> int:
    return bin(v).count("1") & 1


# ---------------------------------------------------------------------------
# Core vector types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionalDistribution:
    """Dense P(a|x) table for n parties with binary inputs and outputs.

    Invariants enforced at construction: values has length 4^n, entries
    are >= -1e-12, and every setting's column sums to 1 within 1e-9.
    """

    parties: int
    values: np.ndarray

    def __post_init__(self):
        if self.parties < 1:
            raise ValueError("parties must be >= 1")
        values = np.asarray(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        d = 2 ** self.parties
        if values.shape != (d * d,):
            raise ValueError(
                f"expected {d * d} components for {self.parties} parties, "
                f"got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("distribution contains non-finite entries")
        if values.min(initial=0.0) < -NONNEG_TOL:
            raise ValueError(
                f"negative component {values.min()} below tolerance")
        col_sums = values.reshape(d, d).sum(axis=1)
        if np.abs(col_sums - 1.0).max() > NORMALIZATION_TOL:
            worst = np.abs(col_sums - 1.0).max()
            raise ValueError(f"columns not normalized (worst residual {worst})")

    def prob(self, a: int, x: int) -> float:
        return float(self.values[index_of(a, x, self.parties)])

    def column(self, x: int) -> np.ndarray:
        """P(.|x) as a vector over the 2^n outcomes."""
        d = 2 ** self.parties
        return self.values[d * x: d * (x + 1)]

    def permute_parties(self, perm: Sequence[int]) -> "ConditionalDistribution":
        """Relabel parties: new party i is old party perm[i]."""
        n = self.parties
        if sorted(perm) != list(range(n)):
            raise ValueError(f"not a permutation of 0..{n - 1}: {perm}")
        d = 2 ** n
        new = np.empty_like(self.values)
        for x in range(d):
            for a in range(d):
                pa = sum(((a >> perm[i]) & 1) << i for i in range(n))
                px = sum(((x >> perm[i]) & 1) << i for i in range(n))
                new[index_of(pa, px, n)] = self.values[index_of(a, x, n)]
        return ConditionalDistribution(n, new)

    # -- serialization ------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(
            {"parties": self.parties, "values": self.values.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "ConditionalDistribution":
        obj = json.loads(text)
        return cls(int(obj["parties"]), np.asarray(obj["values"], dtype=float))

    def to_csv(self, path) -> None:
        """Write rows a,x,p with party-1-leftmost bit strings."""
        n = self.parties
        d = 2 ** n
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["a", "x", "p"])
            for x in range(d):
                for a in range(d):
                    writer.writerow(
                        [int_to_bits(a, n), int_to_bits(x, n),
                         repr(self.prob(a, x))])

    @classmethod
    def from_csv(cls, path) -> "ConditionalDistribution":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"empty distribution file {path}")
        n = len(rows[0]["a"])
        values = np.zeros(4 ** n)
        for row in rows:
            a, x = bits_to_int(row["a"]), bits_to_int(row["x"])
            values[index_of(a, x, n)] = float(row["p"])
        return cls(n, values)


@dataclass(frozen=True)
class LinearFunctional:
    """Coefficient vector F(a,x), same index convention as distributions."""

    parties: int
    coefficients: np.ndarray

    def __post_init__(self):
        if self.parties < 1:
            raise ValueError("parties must be >= 1")
        coeffs = np.asarray(self.coefficients, dtype=float)
        coeffs.setflags(write=False)
        object.__setattr__(self, "coefficients", coeffs)
        d = 2 ** self.parties
        if coeffs.shape != (d * d,):
            raise ValueError(
                f"expected {d * d} coefficients for {self.parties} parties, "
                f"got shape {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("functional contains non-finite entries")

    def coefficient(self, a: int, x: int) -> float:
        return float(self.coefficients[index_of(a, x, self.parties)])


def uniform_distribution(parties: int) -> ConditionalDistribution:
    """P(a|x) = 2^-n for every outcome and setting."""
    if parties < 1:
        raise ValueError("parties must be >= 1")
    d = 2 ** parties
    return ConditionalDistribution(parties, np.full(d * d, 1.0 / d))


def normalization_functional(parties: int) -> LinearFunctional:
    """Constant functional with components 2^-n; dots to 1 on any behaviour."""
    d = 2 ** parties
    return LinearFunctional(parties, np.full(d * d, 1.0 / d))


def functional_value(functional: LinearFunctional,
                     dist: ConditionalDistribution) -> float:
    """Scalar product F . P = sum_{a,x} F(a,x) P(a|x)."""
    if functional.parties != dist.parties:
        raise ValueError(
            f"party count mismatch: functional has {functional.parties}, "
            f"distribution has {dist.parties}")
    return float(functional.coefficients @ dist.values)


# ---------------------------------------------------------------------------
# Tensor products of behaviours and functionals
# ---------------------------------------------------------------------------
#
# A block of k independent n-party boxes is treated as one (k*n)-party
# behaviour.  Slot i of the block occupies bit positions [i*n, (i+1)*n) of
# both the outcome and the setting integer.

def _slot_index_tables(parties: int, slots: int):
    """For each joint (a, x) index, the per-slot component indices."""
    n, d = parties, 2 ** parties
    big = 2 ** (parties * slots)
    joint_a, joint_x = np.meshgrid(
        np.arange(big, dtype=np.int64), np.arange(big, dtype=np.int64),
        indexing="ij")
    out = []
    for i in range(slots):
        slot_a = (joint_a >> (n * i)) & (d - 1)
        slot_x = (joint_x >> (n * i)) & (d - 1)
        out.append((slot_a + d * slot_x).ravel(order="F"))
    return out


def tensor_distribution(p: ConditionalDistribution,
                        q: ConditionalDistribution) -> ConditionalDistribution:
    """Product behaviour P (x) Q of two independent boxes."""
    n, m = p.parties, q.parties
    dn, dm = 2 ** n, 2 ** m
    big = dn * dm
    values = np.empty(big * big)
    for x in range(big):
        xp, xq = x & (dn - 1), x >> n
        for a in range(big):
            ap, aq = a & (dn - 1), a >> n
            values[a + big * x] = p.prob(ap, xp) * q.prob(aq, xq)
    return ConditionalDistribution(n + m, values)


def tensor_power_functional(functional: LinearFunctional,
                            slots: int) -> LinearFunctional:
    """F^(x)k as a functional on the (k*n)-party joint index space."""
    if slots < 1:
        raise ValueError("slots must be >= 1")
    coeffs = np.ones(4 ** (functional.parties * slots))
    for table in _slot_index_tables(functional.parties, slots):
        coeffs = coeffs * functional.coefficients[table]
    return LinearFunctional(functional.parties * slots, coeffs)


def block_functional_value(functional: LinearFunctional,
                           block: ConditionalDistribution,
                           block_size: int) -> float:
    """Evaluate F^(x)N_d against an explicit block behaviour.

    Explicit block vectors have 4^(n*N_d) components, so this is meant
    for N_d in {1, 2} only.
    """
    if block_size not in (1, 2):
        raise ValueError(
            f"block_size {block_size} not supported (explicit block vectors "
            "blow up combinatorially; use 1 or 2)")
    if block.parties != functional.parties * block_size:
        raise ValueError(
            f"block has {block.parties} parties, expected "
            f"{functional.parties * block_size}")
    return functional_value(tensor_power_functional(functional, block_size),
                            block)


# ---------------------------------------------------------------------------
# No-signalling constraints
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstraintMatrix:
    """Stack of linear equality/inequality rows over behaviour space.

    Rows are held in one sparse matrix; ``row(i)`` materializes a single
    row as a :class:`LinearFunctional` on demand (for n=7 the dense row
    set would not fit in memory).
    """

    parties: int
    matrix: sparse.csr_matrix
    rhs: np.ndarray

    def __post_init__(self):
        rhs = np.asarray(self.rhs, dtype=float)
        rhs.setflags(write=False)
        object.__setattr__(self, "rhs", rhs)
        if self.matrix.shape[0] != rhs.shape[0]:
            raise ValueError(
                f"{self.matrix.shape[0]} rows but {rhs.shape[0]} rhs entries")
        if self.matrix.shape[1] != 4 ** self.parties:
            raise ValueError("row length does not match party count")

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def row(self, i: int) -> LinearFunctional:
        return LinearFunctional(
            self.parties, np.asarray(self.matrix.getrow(i).todense()).ravel())

    def rows(self) -> Iterator[LinearFunctional]:
        for i in range(len(self)):
            yield self.row(i)

    def residuals(self, dist: ConditionalDistribution) -> np.ndarray:
        if dist.parties != self.parties:
            raise ValueError("party count mismatch")
        return self.matrix @ dist.values - self.rhs

    @classmethod
    def from_rows(cls, rows: Sequence[LinearFunctional],
                  rhs: Sequence[float]) -> "ConstraintMatrix":
        if not rows:
            raise ValueError("need at least one row")
        parties = rows[0].parties
        dense = np.vstack([r.coefficients for r in rows])
        return cls(parties, sparse.csr_matrix(dense), np.asarray(rhs, float))


def nosignalling_constraints(parties: int) -> ConstraintMatrix:
    """Equality rows cutting out the no-signalling subspace.

    One row per (party i, other-party outcomes, other-party settings):
    the marginal sum over a_i with x_i = 0 equals the one with x_i = 1.
    Rows are emitted in a fixed sorted order (party, then other settings,
    then other outcomes ascending) so output is reproducible bit for bit.
    """
    n = parties
    if n < 2:
        raise ValueError("no-signalling needs at least 2 parties")
    d = 2 ** n
    half = 2 ** (n - 1)
    rows_idx, cols_idx, vals = [], [], []
    r = 0
    for i in range(n):
        others = [j for j in range(n) if j != i]
        for x_rest in range(half):
            x_base = 0
            for k, j in enumerate(others):
                x_base |= ((x_rest >> k) & 1) << j
            for a_rest in range(half):
                a_base = 0
                for k, j in enumerate(others):
                    a_base |= ((a_rest >> k) & 1) << j
                for a_i in (0, 1):
                    a = a_base | (a_i << i)
                    rows_idx.extend((r, r))
                    cols_idx.append(index_of(a, x_base, n))
                    cols_idx.append(index_of(a, x_base | (1 << i), n))
                    vals.extend((1.0, -1.0))
                r += 1
    matrix = sparse.csr_matrix(
        (vals, (rows_idx, cols_idx)), shape=(r, d * d))
    return ConstraintMatrix(n, matrix, np.zeros(r))


def nosignalling_residuals(dist: ConditionalDistribution) -> np.ndarray:
    """Residual of every no-signalling equality row on the behaviour."""
    return nosignalling_constraints(dist.parties).residuals(dist)


def is_nonsignalling(dist: ConditionalDistribution, tol: float = 1e-9) -> bool:
    """True iff all marginal-equality residuals are within tol.

    Non-negativity and normalization are already guaranteed by the
    :class:`ConditionalDistribution` invariants, so only the signalling
    residuals are checked against the caller's tolerance.
    """
    if dist.parties == 1:
        return True
    return bool(np.abs(nosignalling_residuals(dist)).max() <= tol)


def nosignalling_span_basis(parties: int) -> np.ndarray:
    """Basis (as rows) of the linear span of no-signalling behaviours.

    For each subset S of parties and each assignment x_S of their
    settings, the vector

        e(a, x) = (-1)^(parity of a restricted to S) * [x agrees with x_S]

    is a combination of no-signalling behaviours, and the 3^n such
    vectors span the whole no-signalling subspace.  A functional is
    orthogonal to every no-signalling behaviour iff it is orthogonal to
    all rows returned here.
    """
    n = parties
    d = 2 ** n
    a_parity = np.empty((d, d))
    rows = []
    all_a = np.arange(d)
    for size in range(n + 1):
        for subset in combinations(range(n), size):
            mask = 0
            for j in subset:
                mask |= 1 << j
            signs = np.array([
                -1.0 if _parity(a & mask) else 1.0 for a in all_a])
            for x_assign in range(2 ** size):
                x_s = 0
                for k, j in enumerate(subset):
                    x_s |= ((x_assign >> k) & 1) << j
                vec = np.zeros(d * d)
                for x in range(d):
                    if (x & mask) != x_s:
                        continue
                    vec[d * x: d * (x + 1)] = signs
                rows.append(vec)
    del a_parity
    return np.array(rows)


# ---------------------------------------------------------------------------
# Linear programming
# ---------------------------------------------------------------------------

class SolverError(RuntimeError):
    """LP backend failed or returned an uncertifiable solution."""


@dataclass(frozen=True)
class LPSolution:
    """Outcome of one LP solve with its certificate data.

    For ``status == "optimal"`` the constructor has already verified the
    primal feasibility residual (<= 1e-8) and the relative duality gap
    (<= 1e-7); an uncertifiable solution raises :class:`SolverError`
    instead of being returned.
    """

    status: str  # optimal | infeasible | unbounded
    value: float
    primal: np.ndarray | None
    dual: np.ndarray | None
    feasibility_residual: float = 0.0
    duality_gap: float = 0.0


@dataclass(frozen=True)
class LinearProgramSpec:
    """LP over behaviour space: optimize F . P subject to row constraints."""

    objective: LinearFunctional
    sense: str  # "max" or "min"
    equalities: ConstraintMatrix | None = None
    inequalities: ConstraintMatrix | None = None  # rows . P <= rhs
    lower: np.ndarray | None = None  # default 0
    upper: np.ndarray | None = None  # default +inf

    def __post_init__(self):
        if self.sense not in ("max", "min"):
            raise ValueError(f"sense must be 'max' or 'min', got {self.sense}")
        dim = self.objective.coefficients.shape[0]
        for mat in (self.equalities, self.inequalities):
            if mat is not None and mat.matrix.shape[1] != dim:
                raise ValueError("constraint width does not match objective")
        for bnd in (self.lower, self.upper):
            if bnd is not None and np.shape(bnd) != (dim,):
                raise ValueError("bound length does not match objective")

    def solve(self) -> LPSolution:
        dim = self.objective.coefficients.shape[0]
        lower = np.zeros(dim) if self.lower is None else self.lower
        upper = np.full(dim, np.inf) if self.upper is None else self.upper
        return solve_lp_arrays(
            self.objective.coefficients,
            a_ub=None if self.inequalities is None else self.inequalities.matrix,
            b_ub=None if self.inequalities is None else self.inequalities.rhs,
            a_eq=None if self.equalities is None else self.equalities.matrix,
            b_eq=None if self.equalities is None else self.equalities.rhs,
            bounds=np.column_stack([lower, upper]),
            sense=self.sense)


def solve_lp_arrays(c, a_ub=None, b_ub=None, a_eq=None, b_eq=None,
                    bounds=None, sense="min",
                    feasibility_tol=PRIMAL_FEASIBILITY_TOL,
                    gap_rtol=DUALITY_GAP_RTOL) -> LPSolution:
    """Solve min/max c.x with HiGHS and certify the reported optimum.

    The returned duals follow scipy's marginal convention for the
    minimization form (objective flipped back for sense="max").
    """
    c = np.asarray(c, dtype=float)
    sign = 1.0 if sense == "min" else -1.0
    result = linprog(sign * c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                     bounds=bounds, method="highs")
    if result.status == 2:
        return LPSolution("infeasible", np.nan, None, None)
    if result.status == 3:
        return LPSolution("unbounded", np.nan, None, None)
    if result.status != 0:
        raise SolverError(f"HiGHS failed (status {result.status}): "
                          f"{result.message}")

    x = result.x
    value = float(c @ x)

    # Primal feasibility residual over all constraint classes.
    residual = 0.0
    if a_eq is not None and a_eq.shape[0]:
        residual = max(residual, float(np.abs(a_eq @ x - b_eq).max()))
    if a_ub is not None and a_ub.shape[0]:
        residual = max(residual, float(np.maximum(a_ub @ x - b_ub, 0).max()))
    if bounds is not None:
        arr = np.asarray(bounds, dtype=float)
        lo, hi = arr[:, 0], arr[:, 1]
        residual = max(residual, float(np.maximum(lo - x, 0).max(initial=0)))
        residual = max(residual, float(np.maximum(x - hi, 0).max(initial=0)))
    if residual > feasibility_tol:
        raise SolverError(f"primal feasibility residual {residual} exceeds "
                          f"{feasibility_tol}")

    # Dual objective from HiGHS marginals; finite-bound terms only (duals
    # vanish at non-binding infinite bounds).
    dual_value = 0.0
    dual_parts = []
    if a_eq is not None and a_eq.shape[0]:
        y = result.eqlin.marginals
        dual_value += float(np.asarray(b_eq) @ y)
        dual_parts.append(y)
    if a_ub is not None and a_ub.shape[0]:
        y = result.ineqlin.marginals
        dual_value += float(np.asarray(b_ub) @ y)
        dual_parts.append(y)
    if bounds is not None:
        arr = np.asarray(bounds, dtype=float)
        lo, hi = arr[:, 0], arr[:, 1]
        lo_m = result.lower.marginals
        hi_m = result.upper.marginals
        finite_lo = np.isfinite(lo)
        finite_hi = np.isfinite(hi)
        dual_value += float(lo[finite_lo] @ lo_m[finite_lo])
        dual_value += float(hi[finite_hi] @ hi_m[finite_hi])
    gap = abs(float(sign * c @ x) - dual_value) / max(1.0, abs(value))
    if gap > gap_rtol:
        raise SolverError(f"relative duality gap {gap} exceeds {gap_rtol}")

    dual = np.concatenate(dual_parts) if dual_parts else np.zeros(0)
    return LPSolution("optimal", value, x, dual,
                      feasibility_residual=residual, duality_gap=gap)
