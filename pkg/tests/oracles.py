"""Independent brute-force oracles used only by the test suite.

Everything here recomputes expected values along a different path from
the library code: a dense statevector simulation for the quantum
correlation table, direct enumerations for combinatorial counts, and
naive summations for functional values.
"""

import numpy as np


def ghz_statevector_table(parties: int) -> np.ndarray:
    """Measurement table of (|0...0> + |1...1>)/sqrt(2), brute force.

    Input bit 1 measures Pauli-X, input bit 0 Pauli-Y; outcome bit 0 is
    the +1 eigenvalue.  Returns the 4^n vector with index a + 2^n * x,
    bits packed little-endian (bit i = party i).
    """
    n = parties
    dim = 2 ** n
    psi = np.zeros(dim, dtype=complex)
    psi[0] = 1.0 / np.sqrt(2.0)
    psi[dim - 1] = 1.0 / np.sqrt(2.0)
    # Rows are the measurement-basis bras for outcomes 0, 1.
    bras_x = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)
    bras_y = np.array([[1, -1j], [1, 1j]], dtype=complex) / np.sqrt(2.0)
    table = np.zeros(dim * dim)
    for x in range(dim):
        amplitudes = psi.reshape((2,) * n)
        for qubit in range(n):
            basis = bras_x if (x >> qubit) & 1 else bras_y
            amplitudes = np.tensordot(basis, amplitudes, axes=([1], [qubit]))
            amplitudes = np.moveaxis(amplitudes, 0, qubit)
        probs = np.abs(amplitudes) ** 2
        for a in range(dim):
            outcome_bits = tuple((a >> i) & 1 for i in range(n))
            table[a + dim * x] = probs[outcome_bits]
    return table


def parity(v: int) -> int:
    return bin(v).count("1") & 1


def naive_bell_value(table: np.ndarray, parties: int) -> float:
    """Wrong-parity mass summed with explicit loops (no vectorization)."""
    dim = 2 ** parties
    total = 0.0
    for x in range(dim):
        zeros = parties - bin(x).count("1")
        if zeros % 2:
            continue
        target = (zeros // 2) % 2
        for a in range(dim):
            if parity(a) != target:
                total += table[a + dim * x]
    return total


def brute_force_signalling_violation(values: np.ndarray, parties: int) -> float:
    """Largest marginal mismatch over parties/settings, direct loops."""
    n, dim = parties, 2 ** parties
    worst = 0.0
    for i in range(n):
        for x in range(dim):
            x_flip = x ^ (1 << i)
            if x > x_flip:
                continue
            for a_rest in range(dim // 2):
                a_base = 0
                k = 0
                for j in range(n):
                    if j == i:
                        continue
                    a_base |= ((a_rest >> k) & 1) << j
                    k += 1
                m0 = sum(values[(a_base | (b << i)) + dim * x]
                         for b in (0, 1))
                m1 = sum(values[(a_base | (b << i)) + dim * x_flip]
                         for b in (0, 1))
                worst = max(worst, abs(m0 - m1))
    return worst
