r"""Parity Bell tests for odd party counts and their quantum realization.

For odd n, half of the 2^n joint settings take part in the test: those
whose number of 0-bits is even.  Each participating setting x carries a
required outcome parity

    target(x) = (number of 0-bits in x / 2) mod 2,

and the Bell expression counts wrong-parity events,

    B(P) = sum over x in X, a with parity(a) != target(x) of P(a|x).

Local deterministic strategies cannot reach B = 0 (for n=5 the minimum
is 6), while measuring the n-qubit |0...0> + |1...1> state with Pauli-X
for input 1 and Pauli-Y for input 0 gives B = 0 exactly: whenever the
number of Y measurements is even the state is a +-1 eigenstate of the
measured operator and the observed parity is pinned to target(x).

The correlation table of that state has the closed form

    P(a|x) = 2^-(n-1) * [parity(a) = target(x)]   (even Y count)
    P(a|x) = 2^-n                                  (odd Y count)

which is what :func:`ghz_correlations` produces; tests compare it against
a dense statevector simulation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import product
from typing import Iterator, Mapping, Sequence

import numpy as np

from .polytope import (
    ConditionalDistribution,
    LinearFunctional,
    index_of,
    int_to_bits,
)

__all__ = [
    "BellFunctional",
    "mermin_coefficients",
    "ghz_correlations",
    "deterministic_strategy_value",
    "all_deterministic_strategies",
    "minimum_deterministic_value",
]


def _popcount(v: int) -> int:
    return bin(v).count("1")


@dataclass(frozen=True)
class BellFunctional:
    """Wrong-parity counting functional with its support structure.

    ``support`` is the set of participating settings X; ``parity_target``
    maps each x in X to the outcome parity required there.  The
    underlying coefficient vector is 1 exactly on (a, x) with x in X and
    parity(a) != parity_target(x).
    """

    parties: int
    functional: LinearFunctional
    support: frozenset[int]
    parity_target: Mapping[int, int]

    def __post_init__(self):
        n, d = self.parties, 2 ** self.parties
        if len(self.support) != 2 ** (n - 1):
            raise ValueError(
                f"support has {len(self.support)} settings, expected "
                f"{2 ** (n - 1)}")
        coeffs = self.functional.coefficients
        for x in range(d):
            for a in range(d):
                expected = 1.0 if (
                    x in self.support
                    and (_popcount(a) & 1) != self.parity_target[x]) else 0.0
                if coeffs[index_of(a, x, n)] != expected:
                    raise ValueError(
                        f"coefficient at (a={a}, x={x}) is "
                        f"{coeffs[index_of(a, x, n)]}, expected {expected}")

    @property
    def x0_settings(self) -> list[int]:
        """Settings with required parity 0, ascending."""
        return sorted(x for x in self.support if self.parity_target[x] == 0)

    @property
    def x1_settings(self) -> list[int]:
        """Settings with required parity 1, ascending."""
        return sorted(x for x in self.support if self.parity_target[x] == 1)

    def to_json(self) -> str:
        n, d = self.parties, 2 ** self.parties
        pairs = []
        for x in sorted(self.support):
            for a in range(d):
                if self.functional.coefficients[index_of(a, x, n)]:
                    pairs.append([int_to_bits(a, n), int_to_bits(x, n)])
        return json.dumps({
            "parties": n,
            "X0": [int_to_bits(x, n) for x in self.x0_settings],
            "X1": [int_to_bits(x, n) for x in self.x1_settings],
            "coefficients": pairs,
        })


def mermin_coefficients(parties: int) -> BellFunctional:
    """Bell functional for an odd number of parties.

    For n=5 the participating settings split into the six weight-1 and
    weight-5 strings (required parity 0) and the ten weight-3 strings
    (required parity 1).
    """
    n = parties
    if n < 3 or n % 2 == 0:
        raise ValueError(f"parties must be odd and >= 3, got {n}")
    d = 2 ** n
    coeffs = np.zeros(d * d)
    support = []
    target: dict[int, int] = {}
    for x in range(d):
        zeros = n - _popcount(x)
        if zeros % 2:
            continue
        support.append(x)
        target[x] = (zeros // 2) % 2
        for a in range(d):
            if (_popcount(a) & 1) != target[x]:
                coeffs[index_of(a, x, n)] = 1.0
    return BellFunctional(n, LinearFunctional(n, coeffs),
                          frozenset(support), target)


def ghz_correlations(parties: int) -> ConditionalDistribution:
    """Correlations of the n-qubit GHZ state under X/Y measurements.

    Input bit 1 selects a Pauli-X measurement, input bit 0 a Pauli-Y
    measurement; outcome bit 0 is the +1 eigenvalue.
    """
    n = parties
    if n < 3 or n % 2 == 0 or n > 9:
        raise ValueError(
            f"parties must be odd with 3 <= n <= 9, got {n}")
    d = 2 ** n
    values = np.zeros(d * d)
    for x in range(d):
        n_y = n - _popcount(x)
        if n_y % 2:
            values[d * x: d * (x + 1)] = 1.0 / d
            continue
        pinned = (n_y // 2) % 2
        weight = 2.0 ** (-(n - 1))
        for a in range(d):
            if (_popcount(a) & 1) == pinned:
                values[index_of(a, x, n)] = weight
    return ConditionalDistribution(n, values)


# ---------------------------------------------------------------------------
# Local deterministic strategies
# ---------------------------------------------------------------------------

Strategy = Sequence[tuple[int, int]]  # per party: (output on input 0, on input 1)


def deterministic_strategy_value(strategy: Strategy,
                                 bell: BellFunctional) -> float:
    """Bell value of the local deterministic behaviour the strategy induces."""
    n = bell.parties
    if len(strategy) != n:
        raise ValueError(f"strategy has {len(strategy)} parties, expected {n}")
    value = 0
    for x in bell.support:
        parity = 0
        for i in range(n):
            parity ^= strategy[i][(x >> i) & 1] & 1
        if parity != bell.parity_target[x]:
            value += 1
    return float(value)


def all_deterministic_strategies(parties: int) -> Iterator[Strategy]:
    """All 4^n local deterministic strategies, lexicographic order."""
    return product(product((0, 1), repeat=2), repeat=parties)


def minimum_deterministic_value(bell: BellFunctional) -> float:
    """Exhaustive minimum of the Bell value over deterministic strategies."""
    return min(deterministic_strategy_value(s, bell)
               for s in all_deterministic_strategies(bell.parties))
