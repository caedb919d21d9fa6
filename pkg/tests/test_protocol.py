import numpy as np
import pytest

from randamp.mermin import ghz_correlations, mermin_coefficients
from randamp.polytope import bits_to_int, uniform_distribution
from randamp.protocol import (
    BoxModel,
    EpsilonSource,
    ProtocolConfig,
    ProtocolError,
    check_quintuplet,
    monte_carlo,
    run_protocol,
    sample_source,
)


class TestEpsilonSource:
    def test_honest_uniform_frequency(self):
        source = EpsilonSource.honest_uniform(seed=11)
        bits = sample_source(source, 100_000)
        assert abs(bits.mean() - 0.5) < 0.01

    def test_adversarial_band_respected(self):
        source = EpsilonSource.adversarial_constant(0.2, bias=0.0, seed=5)
        bits = sample_source(source, 20_000)
        # bias 0 is clamped to epsilon = 0.2
        assert 0.15 < bits.mean() < 0.25

    def test_policy_sees_history(self):
        seen = []

        def policy(history):
            seen.append(len(history))
            return 0.5

        source = EpsilonSource(epsilon=0.3, policy=policy, seed=1)
        sample_source(source, 4)
        assert seen == [0, 1, 2, 3]

    def test_prefix_probability_band(self):
        # empirical check of the three-bit band [eps^3, (1-eps)^3]
        eps = 0.3
        source = EpsilonSource(epsilon=eps, bias=0.7, seed=3)
        draws = np.array([sample_source(
            EpsilonSource(epsilon=eps, bias=0.7, seed=1000 + i), 3)
            for i in range(4000)])
        _, counts = np.unique(draws, axis=0, return_counts=True)
        freq = counts / len(draws)
        margin = 4 * np.sqrt(0.25 / len(draws))
        assert freq.max() <= (1 - eps) ** 3 + margin
        assert freq.min() >= eps ** 3 - margin

    def test_invalid_epsilon(self):
        with pytest.raises(ValueError):
            EpsilonSource(epsilon=0.0)
        with pytest.raises(ValueError):
            EpsilonSource(epsilon=0.6)

    def test_bias_outside_band_rejected(self):
        with pytest.raises(ValueError):
            EpsilonSource(epsilon=0.3, bias=0.9)


class TestBoxModels:
    def test_quantum_box_respects_support(self):
        bell = mermin_coefficients(5)
        box = BoxModel.ideal_quantum()
        rng = np.random.default_rng(0)
        settings = np.array(sorted(bell.support) * 50)
        outcomes = box.sample(settings, rng)
        for a, x in zip(outcomes, settings):
            assert check_quintuplet(int(a), int(x), bell)

    def test_deterministic_box(self):
        box = BoxModel.local_deterministic([(0, 1)] * 5)
        rng = np.random.default_rng(0)
        settings = np.array([bits_to_int("10100"), bits_to_int("00000")])
        outcomes = box.sample(settings, rng)
        np.testing.assert_array_equal(outcomes, settings)  # output = input

    def test_custom_box_must_be_nonsignalling(self):
        values = np.zeros(16)
        for x in range(4):
            x2 = (x >> 1) & 1
            for a in range(4):
                if (a & 1) == x2:
                    values[a + 4 * x] = 0.5
        from randamp.polytope import ConditionalDistribution
        signalling = ConditionalDistribution(2, values)
        with pytest.raises(ValueError, match="signalling"):
            BoxModel.custom_nonsignalling(signalling)

    def test_custom_box_sampling_matches_distribution(self):
        box = BoxModel.custom_nonsignalling(uniform_distribution(2))
        rng = np.random.default_rng(4)
        outcomes = box.sample(np.zeros(8000, dtype=np.int64), rng)
        counts = np.bincount(outcomes, minlength=4) / 8000
        np.testing.assert_allclose(counts, 0.25, atol=0.03)


class TestCheckQuintuplet:
    def test_examples(self):
        bell = mermin_coefficients(5)
        assert check_quintuplet(bits_to_int("00000"), bits_to_int("11111"),
                                bell)
        assert not check_quintuplet(bits_to_int("00000"),
                                    bits_to_int("00111"), bell)

    def test_single_flip_breaks_a_pass(self):
        bell = mermin_coefficients(5)
        x = bits_to_int("11111")
        a = bits_to_int("00000")
        assert check_quintuplet(a, x, bell)
        assert not check_quintuplet(a ^ 1, x, bell)

    def test_unsupported_setting_rejected(self):
        bell = mermin_coefficients(5)
        with pytest.raises(ValueError):
            check_quintuplet(0, bits_to_int("00000"), bell)


class TestRunProtocol:
    def test_transcript_consistency(self):
        config = ProtocolConfig(n_quintuplets=64, n_blocks=4, seed=99)
        bell = mermin_coefficients(5)
        transcript = run_protocol(config)
        assert transcript.abort_stage in ("none", "step2", "step4")
        if transcript.abort_stage == "step2":
            assert transcript.final_bit is None
            return
        # g recomputed from r values, excluding the distilling block
        others = np.delete(transcript.r_values, transcript.distill_index)
        assert transcript.g == int(others.all())
        # r recomputed from raw data
        for j in range(transcript.n_blocks):
            xs, outs = transcript.block_slice(j)
            expected = all(check_quintuplet(int(a), int(x), bell)
                           for a, x in zip(outs, xs))
            assert transcript.r_values[j] == int(expected)
        # the distilling block's r value never influences g
        flipped = transcript.r_values.copy()
        flipped[transcript.distill_index] ^= 1
        assert transcript.g == int(np.delete(
            flipped, transcript.distill_index).all())
        # side information excludes the distilling block
        assert len(transcript.side_information["blocks"]) == \
            transcript.n_blocks - 1

    def test_source_bit_accounting(self):
        config = ProtocolConfig(n_quintuplets=64, n_blocks=4, seed=5)
        transcript = run_protocol(config)
        if transcript.abort_stage == "step2":
            assert transcript.source_bits_used == 5 * 64
        else:
            assert transcript.source_bits_used == 5 * 64 + 2

    def test_step2_abort_boundary(self):
        # survivors < N/3 aborts; survivors >= N/3 proceeds.  Use rigged
        # sources to force exact survivor counts.
        bell = mermin_coefficients(5)
        n = 9
        threshold = 3  # N/3
        supported = bits_to_int("11111")
        unsupported = bits_to_int("00000")

        def rigged(count_supported):
            bits = []
            for j in range(n):
                x = supported if j < count_supported else unsupported
                bits.extend((x >> i) & 1 for i in range(5))
            return bits

        class FixedSource:
            def __init__(self, bits):
                self.bits = list(bits)

            def make(self):
                it = iter(self.bits + [0] * 10)

                def policy(history):
                    return float(next(it))

                # epsilon=0.5 forces bias 0.5 for everything, so use a
                # policy returning 0/1 probabilities clamped at 1e-9
                return EpsilonSource(epsilon=1e-9, policy=policy)

        for survivors, expect_abort in ((threshold - 1, True),
                                        (threshold, False)):
            src = FixedSource(rigged(survivors)).make()
            config = ProtocolConfig(
                n_quintuplets=n, n_blocks=1, hash_function="xor",
                source=src, boxes=BoxModel.ideal_quantum(), seed=1)
            transcript = run_protocol(config)
            assert (transcript.abort_stage == "step2") == expect_abort

    def test_hash_arity_mismatch(self):
        config = ProtocolConfig(n_quintuplets=64, n_blocks=4,
                                hash_function=(0, 1), seed=0)
        with pytest.raises(ProtocolError, match="arity"):
            run_protocol(config)

    def test_block_count_validation(self):
        with pytest.raises(ValueError, match="power of 2"):
            ProtocolConfig(n_quintuplets=64, n_blocks=3)
        with pytest.raises(ValueError, match="too large"):
            ProtocolConfig(n_quintuplets=16, n_blocks=8)


class TestMonteCarlo:
    def test_honest_runs(self):
        config = ProtocolConfig(n_quintuplets=64, n_blocks=4,
                                hash_function="xor", seed=7)
        summary = monte_carlo(config, 400)
        assert summary.step4_aborts == 0
        assert summary.step2_abort_rate < 0.02
        assert abs(summary.maj_zero_rate - 0.5) < 0.02

    def test_all_zero_boxes_abort_step4(self):
        config = ProtocolConfig(n_quintuplets=64, n_blocks=4,
                                boxes=BoxModel.all_zero(), seed=8)
        summary = monte_carlo(config, 300)
        assert summary.step4_abort_rate > 0.99

    def test_adversarial_source_aborts_step2(self):
        # push every input bit toward 0: settings concentrate on 00000,
        # which is outside the support
        source = EpsilonSource.adversarial_constant(1e-4, bias=0.0)
        config = ProtocolConfig(n_quintuplets=30, n_blocks=2,
                                source=source, seed=9)
        summary = monte_carlo(config, 50)
        assert summary.step2_abort_rate == 1.0

    def test_reproducible_with_seed(self):
        config = ProtocolConfig(n_quintuplets=64, n_blocks=4, seed=123)
        first = monte_carlo(config, 100).to_dict()
        second = monte_carlo(config, 100).to_dict()
        assert first == second

    def test_quantum_boxes_always_pass_checks(self):
        bell = mermin_coefficients(5)
        violations = []

        def collect(t):
            if t.abort_stage != "step2":
                assert t.g == 1 and t.abort_stage == "none"

        config = ProtocolConfig(n_quintuplets=32, n_blocks=2, seed=17)
        summary = monte_carlo(config, 200, collect=collect)
        assert summary.step4_aborts == 0
