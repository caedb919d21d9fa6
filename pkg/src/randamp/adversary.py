r"""Adversarial predictability over the maximally violating polytope.

How well can a no-signalling adversary pin down a function of the
measurement outcomes while still delivering the maximal violation of
the parity Bell test?  The answer is a linear program over behaviours
P(a|x): maximize the probability mass of {a : g(a) = v} in the column
of a fixed setting x0, subject to non-negativity, normalization, the
no-signalling equalities, and the maximal-violation condition.  The
latter is imposed componentwise (every wrong-parity supported component
is pinned to zero), which is equivalent to requiring the Bell value to
vanish but keeps the LP sparse.

For three parties every balanced function of the outcomes can be fixed
deterministically; for five parties the majority of the first three
outcomes resists: its predictability is exactly 3/4.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from itertools import combinations
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sparse

from .mermin import BellFunctional, mermin_coefficients
from .polytope import (
    LPSolution,
    index_of,
    nosignalling_constraints,
    solve_lp_arrays,
)

__all__ = [
    "OutputFunction",
    "PredictabilityResult",
    "ResourceLimitError",
    "max_predictability",
    "best_predictability",
    "enumerate_unbiased_functions",
    "seven_party_predictability",
    "SEVEN_PARTY_FUNCTION",
]


class ResourceLimitError(RuntimeError):
    """A large LP was requested without the explicit opt-in flag."""


@dataclass(frozen=True)
class OutputFunction:
    """Boolean function of m selected outcome bits.

    ``table`` lists the value on every m-bit input, indexed little-endian
    (selected bit j is bit j of the index); ``bit_selector`` names which
    outcome positions feed the function, party numbering from 0.
    """

    arity: int
    table: tuple[int, ...]
    bit_selector: tuple[int, ...]

    def __post_init__(self):
        if len(self.table) != 2 ** self.arity:
            raise ValueError(
                f"table has {len(self.table)} entries, expected "
                f"{2 ** self.arity}")
        if any(b not in (0, 1) for b in self.table):
            raise ValueError("table entries must be bits")
        if len(self.bit_selector) != self.arity:
            raise ValueError("bit_selector length must equal arity")
        if len(set(self.bit_selector)) != self.arity:
            raise ValueError("bit_selector positions must be distinct")

    def of_outcome(self, outcome: int) -> int:
        """Value on a packed outcome integer."""
        idx = 0
        for j, pos in enumerate(self.bit_selector):
            idx |= ((outcome >> pos) & 1) << j
        return self.table[idx]

    def is_unbiased(self) -> bool:
        return sum(self.table) * 2 == len(self.table)

    @classmethod
    def majority3(cls) -> "OutputFunction":
        """Majority vote of the first three outcome bits."""
        table = tuple(1 if bin(w).count("1") >= 2 else 0 for w in range(8))
        return cls(arity=3, table=table, bit_selector=(0, 1, 2))

    @classmethod
    def constant(cls, value: int, arity: int = 1) -> "OutputFunction":
        return cls(arity=arity, table=(int(value),) * 2 ** arity,
                   bit_selector=tuple(range(arity)))

    @classmethod
    def from_hex(cls, hex_table: str,
                 bit_selector: Sequence[int] | None = None) -> "OutputFunction":
        """Parse a table given as hex; bit i of the value is table[i]."""
        bits = 4 * len(hex_table)
        arity = (bits - 1).bit_length()
        if 2 ** arity != bits:
            raise ValueError(
                f"hex table encodes {bits} entries, not a power of 2")
        value = int(hex_table, 16)
        table = tuple((value >> i) & 1 for i in range(bits))
        if bit_selector is None:
            bit_selector = tuple(range(arity))
        return cls(arity=arity, table=table, bit_selector=tuple(bit_selector))

    def to_hex(self) -> str:
        value = sum(b << i for i, b in enumerate(self.table))
        return format(value, f"0{len(self.table) // 4 or 1}x")


@dataclass(frozen=True)
class PredictabilityResult:
    setting: int
    target: int
    optimum: float
    certificate: LPSolution
    solve_ms: float = 0.0

    def __post_init__(self):
        if not -1e-9 <= self.optimum <= 1.0 + 1e-9:
            raise ValueError(f"optimum {self.optimum} outside [0, 1]")


def _violation_free_bounds(bell: BellFunctional) -> np.ndarray:
    """Per-component bounds with wrong-parity supported events pinned to 0."""
    n = bell.parties
    d = 2 ** n
    bounds = np.zeros((d * d, 2))
    bounds[:, 1] = np.inf
    forced = bell.functional.coefficients > 0.5
    bounds[forced, 1] = 0.0
    return bounds


def _normalization_rows(parties: int):
    d = 2 ** parties
    rows = np.repeat(np.arange(d), d)
    cols = np.concatenate([np.arange(d * x, d * (x + 1)) for x in range(d)])
    mat = sparse.csr_matrix(
        (np.ones(d * d), (rows, cols)), shape=(d, d * d))
    return mat, np.ones(d)


def max_predictability(bell: BellFunctional, g: OutputFunction,
                       setting: int, target: int,
                       enforce_max_violation: bool = True,
                       ) -> PredictabilityResult:
    """Optimal no-signalling probability of g(a) = target at ``setting``.

    With ``enforce_max_violation`` the behaviour is restricted to the
    maximal-violation face of the polytope; without it any non-constant
    function can be fixed deterministically and the optimum is 1.
    """
    if setting not in bell.support:
        raise ValueError(f"setting {setting} is outside the Bell support")
    if target not in (0, 1):
        raise ValueError("target must be 0 or 1")
    n = bell.parties
    d = 2 ** n
    start = time.perf_counter()
    ns = nosignalling_constraints(n)
    norm_mat, norm_rhs = _normalization_rows(n)
    a_eq = sparse.vstack([ns.matrix, norm_mat]).tocsr()
    b_eq = np.concatenate([ns.rhs, norm_rhs])
    objective = np.zeros(d * d)
    for a in range(d):
        if g.of_outcome(a) == target:
            objective[index_of(a, setting, n)] = 1.0
    if enforce_max_violation:
        bounds = _violation_free_bounds(bell)
    else:
        bounds = np.zeros((d * d, 2))
        bounds[:, 1] = np.inf
    solution = solve_lp_arrays(objective, a_eq=a_eq, b_eq=b_eq,
                               bounds=bounds, sense="max")
    if solution.status != "optimal":
        raise RuntimeError(
            f"predictability LP ended with status {solution.status}; the "
            "maximal-violation face is never empty, so this indicates a "
            "solver failure")
    elapsed = (time.perf_counter() - start) * 1e3
    return PredictabilityResult(
        setting=setting, target=target,
        optimum=min(max(solution.value, 0.0), 1.0),
        certificate=solution, solve_ms=elapsed)


def best_predictability(bell: BellFunctional, g: OutputFunction,
                        setting: int) -> float:
    """max over both target values; the adversary picks the easier one."""
    return max(
        max_predictability(bell, g, setting, v).optimum for v in (0, 1))


def enumerate_unbiased_functions(arity: int) -> Iterator[OutputFunction]:
    """All functions with exactly 2^(m-1) preimages of 0, sorted.

    The count is binomial(2^m, 2^(m-1)); m = 5 already yields ~6e8
    functions, so iterate lazily.
    """
    if arity < 1 or arity > 5:
        raise ValueError("arity must be between 1 and 5")
    size = 2 ** arity
    selector = tuple(range(arity))
    for zeros in combinations(range(size), size // 2):
        table = [1] * size
        for z in zeros:
            table[z] = 0
        yield OutputFunction(arity=arity, table=tuple(table),
                             bit_selector=selector)


# Five-bit function taking 0 on inputs 00000, 01111, 00111 (party 1
# leftmost) and 1 elsewhere; applied to the first five outputs of the
# seven-party test its predictability drops below the majority's 3/4.
SEVEN_PARTY_FUNCTION = OutputFunction(
    arity=5,
    table=tuple(0 if w in (0, 0b11110, 0b11100) else 1 for w in range(32)),
    bit_selector=(0, 1, 2, 3, 4))


def seven_party_predictability(target: int = 1,
                               setting: int | None = None,
                               allow_large: bool = False,
                               g: OutputFunction | None = None,
                               ) -> PredictabilityResult:
    """Predictability LP for seven parties (16384 variables).

    Gated behind ``allow_large`` because the solve takes minutes and a
    few hundred MB; pass the flag (or the CLI's --allow-large) to run.
    """
    if not allow_large:
        raise ResourceLimitError(
            "the 7-party LP has 4^7 = 16384 variables; pass "
            "allow_large=True to solve it")
    bell = mermin_coefficients(7)
    if setting is None:
        setting = 2 ** 7 - 1  # all-ones setting
    if g is None:
        g = SEVEN_PARTY_FUNCTION
    return max_predictability(bell, g, setting, target)
