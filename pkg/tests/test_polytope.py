import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from randamp.polytope import (
    ConditionalDistribution,
    ConstraintMatrix,
    LinearFunctional,
    LinearProgramSpec,
    bits_to_int,
    block_functional_value,
    functional_value,
    index_of,
    int_to_bits,
    is_nonsignalling,
    normalization_functional,
    nosignalling_constraints,
    nosignalling_residuals,
    nosignalling_span_basis,
    solve_lp_arrays,
    split_index,
    tensor_distribution,
    uniform_distribution,
)
from randamp.mermin import ghz_correlations, mermin_coefficients

from oracles import brute_force_signalling_violation


def random_distribution(parties, rng):
    d = 2 ** parties
    cols = rng.random((d, d)) + 1e-3
    cols /= cols.sum(axis=1, keepdims=True)
    return ConditionalDistribution(parties, cols.ravel())


def signalling_example():
    """n=2 behaviour where party 1's outcome copies party 2's setting."""
    values = np.zeros(16)
    for x in range(4):
        x2 = (x >> 1) & 1
        for a in range(4):
            if (a & 1) == x2:
                values[index_of(a, x, 2)] = 0.5
    return ConditionalDistribution(2, values)


class TestIndexing:
    def test_roundtrip(self):
        for idx in range(4 ** 3):
            a, x = split_index(idx, 3)
            assert index_of(a, x, 3) == idx

    def test_bitstring_convention(self):
        # party 1 is the leftmost character and the least significant bit
        assert bits_to_int("10000") == 1
        assert bits_to_int("00001") == 16
        assert int_to_bits(1, 5) == "10000"

    def test_invalid_bits_rejected(self):
        with pytest.raises(ValueError):
            bits_to_int("120")


class TestConditionalDistribution:
    def test_uniform(self):
        dist = uniform_distribution(5)
        assert np.allclose(dist.values, 1 / 32)
        c = normalization_functional(5)
        assert functional_value(c, dist) == pytest.approx(1.0)

    def test_uniform_single_party(self):
        assert np.allclose(uniform_distribution(1).values, 0.5)

    def test_uniform_rejects_zero_parties(self):
        with pytest.raises(ValueError):
            uniform_distribution(0)

    def test_normalization_enforced(self):
        values = np.full(16, 0.3)
        with pytest.raises(ValueError, match="normalized"):
            ConditionalDistribution(2, values)

    def test_negative_component_rejected(self):
        values = np.full(16, 0.25)
        values[0] = -1e-6
        values[1] = 0.25 + 1e-6
        with pytest.raises(ValueError, match="negative"):
            ConditionalDistribution(2, values)

    def test_tolerates_solver_roundoff(self):
        values = np.full(16, 0.25)
        values[0] = -5e-13
        values[1] = 0.5 - values[0] - 0.25
        ConditionalDistribution(2, values)  # should not raise

    def test_json_roundtrip(self):
        dist = uniform_distribution(2)
        again = ConditionalDistribution.from_json(dist.to_json())
        np.testing.assert_array_equal(again.values, dist.values)
        assert json.loads(dist.to_json())["parties"] == 2

    def test_csv_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        dist = random_distribution(2, rng)
        path = tmp_path / "dist.csv"
        dist.to_csv(path)
        again = ConditionalDistribution.from_csv(path)
        np.testing.assert_allclose(again.values, dist.values, atol=1e-15)


class TestNoSignalling:
    def test_uniform_satisfies_all_rows(self):
        res = nosignalling_residuals(uniform_distribution(2))
        assert np.abs(res).max() == 0.0

    def test_ghz_is_nonsignalling(self):
        assert is_nonsignalling(ghz_correlations(5), tol=1e-12)

    def test_signalling_example_violates(self):
        res = nosignalling_residuals(signalling_example())
        assert np.abs(res).max() >= 0.5
        assert not is_nonsignalling(signalling_example(), tol=1e-9)

    def test_kernel_dimension_bipartite(self):
        ns = nosignalling_constraints(2)
        norm = np.zeros((4, 16))
        for x in range(4):
            norm[x, 4 * x: 4 * (x + 1)] = 1.0
        stacked = np.vstack([ns.matrix.toarray(), norm])
        rank = np.linalg.matrix_rank(stacked)
        assert 16 - rank == 8

    def test_residuals_match_brute_force(self):
        rng = np.random.default_rng(11)
        for parties in (2, 3):
            dist = random_distribution(parties, rng)
            worst = np.abs(nosignalling_residuals(dist)).max()
            oracle = brute_force_signalling_violation(dist.values, parties)
            assert worst == pytest.approx(oracle, abs=1e-12)

    def test_residual_permutation_symmetry(self):
        rng = np.random.default_rng(7)
        dist = random_distribution(3, rng)
        perm = [2, 0, 1]
        base = np.sort(np.abs(nosignalling_residuals(dist)))
        permuted = np.sort(np.abs(nosignalling_residuals(
            dist.permute_parties(perm))))
        np.testing.assert_allclose(base, permuted, atol=1e-12)

    def test_constraint_matrix_row_access(self):
        ns = nosignalling_constraints(2)
        row = ns.row(0)
        assert row.parties == 2
        assert np.abs(row.coefficients).sum() == 4  # two +1, two -1

    def test_row_count_matches_rhs(self):
        with pytest.raises(ValueError):
            ConstraintMatrix.from_rows(
                [LinearFunctional(2, np.zeros(16))], [0.0, 1.0])


class TestSpanBasis:
    def test_rank_is_three_to_the_n(self):
        for parties in (2, 3):
            basis = nosignalling_span_basis(parties)
            assert basis.shape[0] == 3 ** parties
            assert np.linalg.matrix_rank(basis) == 3 ** parties

    def test_nonsignalling_behaviours_lie_in_row_space(self):
        # Orthogonal complement of the rows must annihilate GHZ and uniform.
        basis = nosignalling_span_basis(3)
        _, _, vt = np.linalg.svd(basis)
        complement = vt[3 ** 3:]
        for dist in (uniform_distribution(3), ghz_correlations(3)):
            np.testing.assert_allclose(
                complement @ dist.values, 0.0, atol=1e-12)


class TestFunctionals:
    def test_normalization_functional_on_any_distribution(self):
        rng = np.random.default_rng(5)
        dist = random_distribution(3, rng)
        assert functional_value(normalization_functional(3), dist) == \
            pytest.approx(1.0, abs=1e-12)

    def test_zero_functional(self):
        f = LinearFunctional(2, np.zeros(16))
        assert functional_value(f, uniform_distribution(2)) == 0.0

    def test_party_mismatch_rejected(self):
        f = LinearFunctional(2, np.zeros(16))
        with pytest.raises(ValueError, match="mismatch"):
            functional_value(f, uniform_distribution(3))

    def test_mermin_on_uniform(self):
        bell = mermin_coefficients(5)
        value = functional_value(bell.functional, uniform_distribution(5))
        assert value == pytest.approx(8.0, abs=1e-12)

    @given(weight=st.floats(0.0, 1.0), seed=st.integers(0, 2 ** 16))
    @settings(max_examples=25, deadline=None)
    def test_bilinearity_on_mixtures(self, weight, seed):
        rng = np.random.default_rng(seed)
        p1 = random_distribution(2, rng)
        p2 = random_distribution(2, rng)
        f = LinearFunctional(2, rng.standard_normal(16))
        mix = ConditionalDistribution(
            2, weight * p1.values + (1 - weight) * p2.values)
        direct = functional_value(f, mix)
        combined = (weight * functional_value(f, p1)
                    + (1 - weight) * functional_value(f, p2))
        assert direct == pytest.approx(combined, abs=1e-12)


class TestBlockTensors:
    def test_block_size_one_degenerates(self):
        bell = mermin_coefficients(5)
        ghz = ghz_correlations(5)
        assert block_functional_value(bell.functional, ghz, 1) == \
            pytest.approx(functional_value(bell.functional, ghz), abs=1e-12)

    def test_product_distribution_factorizes(self):
        rng = np.random.default_rng(9)
        p = random_distribution(2, rng)
        q = random_distribution(2, rng)
        f = LinearFunctional(2, rng.standard_normal(16))
        block = tensor_distribution(p, q)
        # same functional on both slots
        lhs = block_functional_value(f, block, 2)
        rhs = functional_value(f, p) * functional_value(f, q)
        assert lhs == pytest.approx(rhs, abs=1e-10)

    def test_scaled_mermin_block_value(self):
        # alpha*C + beta*I on a product of two quantum tables gives
        # alpha^2 because the quantum tables zero out the I part.
        alpha = 0.8842
        bell = mermin_coefficients(5)
        f = LinearFunctional(
            5, alpha / 32 + 1.26 * bell.functional.coefficients)
        ghz = ghz_correlations(5)
        block = tensor_distribution(ghz, ghz)
        value = block_functional_value(f, block, 2)
        assert value == pytest.approx(alpha ** 2, abs=1e-10)
        assert value == pytest.approx(0.78181, abs=1e-4)

    def test_large_blocks_rejected(self):
        bell = mermin_coefficients(5)
        with pytest.raises(ValueError, match="block_size"):
            block_functional_value(bell.functional,
                                   ghz_correlations(5), 3)


class TestLinearProgram:
    def test_known_optimum_with_certificate(self):
        # max x0 + x1 s.t. x0 + 2 x1 <= 4, x0 <= 3, x >= 0 -> 3.5
        import scipy.sparse as sparse
        a_ub = sparse.csr_matrix(np.array([[1.0, 2.0], [1.0, 0.0]]))
        sol = solve_lp_arrays(np.array([1.0, 1.0]), a_ub=a_ub,
                              b_ub=np.array([4.0, 3.0]),
                              bounds=np.array([[0, np.inf], [0, np.inf]]),
                              sense="max")
        assert sol.status == "optimal"
        assert sol.value == pytest.approx(3.5)
        assert sol.feasibility_residual <= 1e-8
        assert sol.duality_gap <= 1e-7

    def test_infeasible_detected(self):
        import scipy.sparse as sparse
        a_eq = sparse.csr_matrix(np.array([[1.0]]))
        sol = solve_lp_arrays(np.array([1.0]), a_eq=a_eq,
                              b_eq=np.array([-2.0]),
                              bounds=np.array([[0.0, np.inf]]))
        assert sol.status == "infeasible"

    def test_spec_interface(self):
        # maximize total mass at one setting of a normalized behaviour
        norm_rows = [LinearFunctional(
            2, np.array([1.0 if idx // 4 == x else 0.0 for idx in range(16)]))
            for x in range(4)]
        eq = ConstraintMatrix.from_rows(norm_rows, np.ones(4))
        objective = LinearFunctional(
            2, np.array([1.0 if idx < 4 else 0.0 for idx in range(16)]))
        spec = LinearProgramSpec(objective=objective, sense="max",
                                 equalities=eq)
        sol = spec.solve()
        assert sol.status == "optimal"
        assert sol.value == pytest.approx(1.0)
