import numpy as np
import pytest

from randamp.adversary import (
    OutputFunction,
    ResourceLimitError,
    SEVEN_PARTY_FUNCTION,
    best_predictability,
    enumerate_unbiased_functions,
    max_predictability,
    seven_party_predictability,
)
from randamp.mermin import mermin_coefficients
from randamp.polytope import bits_to_int


class TestOutputFunction:
    def test_majority3(self):
        maj = OutputFunction.majority3()
        assert maj.of_outcome(bits_to_int("00111")) == 0
        assert maj.of_outcome(bits_to_int("11000")) == 1
        assert maj.of_outcome(bits_to_int("00011")) == 0  # bits 4,5 ignored
        assert maj.is_unbiased()

    def test_hex_roundtrip(self):
        maj = OutputFunction.majority3()
        again = OutputFunction.from_hex(maj.to_hex())
        assert again.table == maj.table

    def test_invalid_table_rejected(self):
        with pytest.raises(ValueError):
            OutputFunction(arity=2, table=(0, 1, 2, 1), bit_selector=(0, 1))

    def test_selector_must_match_arity(self):
        with pytest.raises(ValueError):
            OutputFunction(arity=2, table=(0, 1, 1, 0), bit_selector=(0,))


class TestUnbiasedEnumeration:
    def test_counts(self):
        assert sum(1 for _ in enumerate_unbiased_functions(3)) == 70
        assert sum(1 for _ in enumerate_unbiased_functions(2)) == 6
        assert sum(1 for _ in enumerate_unbiased_functions(1)) == 2

    def test_arity_one_is_identity_and_negation(self):
        tables = {f.table for f in enumerate_unbiased_functions(1)}
        assert tables == {(0, 1), (1, 0)}

    def test_every_function_unbiased(self):
        assert all(f.is_unbiased() for f in enumerate_unbiased_functions(3))

    def test_arity_limit(self):
        with pytest.raises(ValueError):
            list(enumerate_unbiased_functions(6))


class TestFivePartyMajority:
    def test_bound_is_three_quarters_sample_settings(self):
        bell = mermin_coefficients(5)
        maj = OutputFunction.majority3()
        for setting in (bits_to_int("10000"), bits_to_int("11111")):
            for target in (0, 1):
                result = max_predictability(bell, maj, setting, target)
                assert result.optimum == pytest.approx(0.75, abs=1e-6)
                assert result.certificate.duality_gap <= 1e-7

    def test_unconstrained_adversary_is_deterministic(self):
        bell = mermin_coefficients(5)
        maj = OutputFunction.majority3()
        result = max_predictability(bell, maj, bits_to_int("11111"), 0,
                                    enforce_max_violation=False)
        assert result.optimum == pytest.approx(1.0, abs=1e-9)

    def test_setting_outside_support_rejected(self):
        bell = mermin_coefficients(5)
        with pytest.raises(ValueError, match="support"):
            max_predictability(bell, OutputFunction.majority3(),
                               bits_to_int("00000"), 0)

    def test_constant_function_fully_predictable(self):
        bell = mermin_coefficients(5)
        g = OutputFunction.constant(0, arity=1)
        result = max_predictability(bell, g, bits_to_int("11111"), 0)
        assert result.optimum == pytest.approx(1.0, abs=1e-9)


class TestThreePartyAttack:
    def test_sample_of_unbiased_functions_fixable(self):
        bell = mermin_coefficients(3)
        setting = bits_to_int("111")
        functions = list(enumerate_unbiased_functions(3))
        for g in functions[::7]:  # sample 10 of the 70
            assert best_predictability(bell, g, setting) == \
                pytest.approx(1.0, abs=1e-6)

    def test_some_functions_need_the_other_target(self):
        # the function that is 1 exactly on the allowed parity class can
        # only be pinned to 1, not 0
        bell = mermin_coefficients(3)
        setting = bits_to_int("100")
        allowed = [a for a in range(8)
                   if (bin(a).count("1") & 1) == bell.parity_target[setting]]
        table = [1 if a in allowed else 0 for a in range(8)]
        g = OutputFunction(arity=3, table=tuple(table), bit_selector=(0, 1, 2))
        zero = max_predictability(bell, g, setting, 0).optimum
        one = max_predictability(bell, g, setting, 1).optimum
        assert zero == pytest.approx(0.0, abs=1e-9)
        assert one == pytest.approx(1.0, abs=1e-9)


class TestSevenParty:
    def test_resource_gate(self):
        with pytest.raises(ResourceLimitError):
            seven_party_predictability()

    def test_quoted_function_table(self):
        f = SEVEN_PARTY_FUNCTION
        assert f.of_outcome(bits_to_int("0000000")) == 0
        assert f.of_outcome(bits_to_int("0111100")) == 0   # first five: 01111
        assert f.of_outcome(bits_to_int("0011100")) == 0   # first five: 00111
        assert f.of_outcome(bits_to_int("1000000")) == 1

    @pytest.mark.stretch
    def test_predictability_two_thirds(self):
        result = seven_party_predictability(allow_large=True)
        assert result.optimum == pytest.approx(2 / 3, abs=1e-5)

    @pytest.mark.stretch
    def test_majority_embeds(self):
        bell = mermin_coefficients(7)
        result = max_predictability(
            bell, OutputFunction.majority3(), 2 ** 7 - 1, 0)
        assert result.optimum <= 0.75 + 1e-6
