import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from p2codec.errors import ConfigError, CorruptProviderOutputError, UnsupportedCheckError
from p2codec.providers import (
    AdaptiveContextModel,
    UNIFORM_PMF,
    counting_oracle_pmf,
    factorization_check,
    sample_distribution,
    validate_pmf,
)
from p2codec.providers.base import ProbabilityProvider
from p2codec.serialization import OrderingMode
from p2codec.tokens import (
    PromptConfig,
    build_digital_token_map,
    identity_token_map,
)

JOINT = OrderingMode.CHANNEL_JOINT
OFF = PromptConfig.off()


def fresh(order=0, alpha=1):
    return AdaptiveContextModel(order=order, alpha=alpha).begin(OFF, JOINT)


class TestAdaptiveModel:
    def test_order0_empty_context_uniform(self):
        pmf = fresh().next_pmf()
        assert np.all(pmf == 1.0 / 256.0)
        validate_pmf(pmf)

    def test_order0_counts_after_three_observes(self):
        s = fresh()
        for _ in range(3):
            s.observe(7)
        pmf = s.next_pmf()
        assert pmf[7] == 4.0 / 259.0
        assert pmf[8] == 1.0 / 259.0
        validate_pmf(pmf)

    def test_order1_pair_counts(self):
        s = fresh(order=1)
        for _ in range(3):
            s.observe(10)
            s.observe(20)
        s.observe(10)
        pmf = s.next_pmf()
        assert pmf[20] == 4.0 / 259.0

    def test_observe_strictly_increases_own_mass(self):
        s = fresh()
        for sym in (3, 3, 200, 17):
            before = s.next_pmf()[sym]
            s.observe(sym)
            assert s.next_pmf()[sym] > before

    def test_two_sessions_identical(self, rng):
        seq = rng.integers(0, 256, 100).tolist()
        a, b = fresh(order=2), fresh(order=2)
        for sym in seq:
            pa, pb = a.next_pmf(), b.next_pmf()
            assert np.array_equal(pa, pb)
            a.observe(sym)
            b.observe(sym)

    def test_two_begins_identical_first_pmf(self):
        provider = AdaptiveContextModel(order=1)
        assert np.array_equal(
            provider.begin(OFF, JOINT).next_pmf(), provider.begin(OFF, JOINT).next_pmf()
        )

    def test_mass_invariant_over_768_steps(self, rng):
        s = fresh(order=1)
        for sym in rng.integers(0, 256, 768):
            validate_pmf(s.next_pmf())
            s.observe(int(sym))

    def test_alternating_sequence_converges(self):
        # Small smoothing lets a repeating 0,1 pattern dominate quickly.
        s = fresh(order=1, alpha="0.01")
        steps = 0
        while steps < 300:
            nxt = steps % 2
            pmf = s.next_pmf()
            s.observe(nxt)
            steps += 1
        assert s.next_pmf()[steps % 2] > 0.9

    def test_rejects_order_3(self):
        with pytest.raises(ConfigError):
            AdaptiveContextModel(order=3)

    def test_rejects_nonpositive_alpha(self):
        with pytest.raises(ConfigError):
            AdaptiveContextModel(order=0, alpha=0)

    def test_prompt_token_accounting(self):
        provider = AdaptiveContextModel(order=0)
        on = provider.begin(PromptConfig.default_for(JOINT), JOINT)
        off = provider.begin(OFF, JOINT)
        assert on.prompt_token_count > 0
        assert off.prompt_token_count == 0
        # Prompt presence never changes the model's distributions.
        assert np.array_equal(on.next_pmf(), off.next_pmf())

    def test_identity_token_map(self):
        assert AdaptiveContextModel(order=0).token_map == identity_token_map()

    def test_fingerprint_distinguishes_configs(self):
        fp = {
            AdaptiveContextModel(order=o, alpha=a).fingerprint
            for o in (0, 1, 2)
            for a in (1, "0.5")
        }
        assert len(fp) == 6


class TestOracleEquivalence:
    """Incremental counts must match brute-force recounting, bit for bit."""

    def _compare(self, history, order, alpha=1):
        session = AdaptiveContextModel(order=order, alpha=alpha).begin(OFF, JOINT)
        for sym in history:
            session.observe(sym)
        model = session.next_pmf()
        oracle = counting_oracle_pmf(list(history), order, alpha)
        assert np.array_equal(model, oracle), (history, order)

    @pytest.mark.parametrize("order", [0, 1, 2])
    def test_exhaustive_small_alphabet(self, order):
        # Every context of length <= 6 over {0, 1, 2}.
        def rec(history):
            self._compare(history, order)
            if len(history) < 6:
                for sym in (0, 1, 2):
                    rec(history + [sym])

        rec([])

    @pytest.mark.parametrize("order", [0, 1, 2])
    def test_sampled_full_alphabet(self, order, rng):
        for _ in range(300):
            n = int(rng.integers(0, 21))
            history = rng.integers(0, 256, n).tolist()
            self._compare(history, order)

    def test_sampled_fractional_alpha(self, rng):
        for _ in range(50):
            history = rng.integers(0, 8, int(rng.integers(0, 15))).tolist()
            self._compare(history, 1, alpha="0.25")


class TestFactorization:
    def test_order0_closed_form(self):
        joint, product = factorization_check(
            AdaptiveContextModel(order=0), [], (0, 0, 0)
        )
        expected = (1.0 / 256.0) * (2.0 / 257.0) * (3.0 / 258.0)
        assert joint == product == expected

    def test_equality_over_random_contexts(self, rng):
        provider = AdaptiveContextModel(order=1)
        for _ in range(200):
            ctx = rng.integers(0, 256, int(rng.integers(0, 30))).tolist()
            pixel = tuple(int(v) for v in rng.integers(0, 256, 3))
            joint, product = factorization_check(provider, ctx, pixel)
            assert joint == product

    def test_rejects_nondeterministic_provider(self):
        class Flaky(ProbabilityProvider):
            name = "flaky"
            deterministic = False

        with pytest.raises(UnsupportedCheckError):
            factorization_check(Flaky(), [], (0, 0, 0))


class TestSampleDistribution:
    def test_equal_logits_uniform(self):
        pmf = sample_distribution(np.zeros(256))
        assert np.allclose(pmf, 1.0 / 256.0, atol=1e-15)
        validate_pmf(pmf)

    def test_closed_form_gather(self):
        # ln(2) at value 1's token, ln(1) elsewhere: p[1] = 2/257.
        token_map = build_digital_token_map(lambda s: [int(s) + 100])
        logits = np.zeros(1000)
        logits[token_map.forward[1]] = math.log(2.0)
        pmf = sample_distribution(logits, token_map)
        assert math.isclose(pmf[1], 2.0 / 257.0, rel_tol=1e-12)
        assert math.isclose(pmf[0], 1.0 / 257.0, rel_tol=1e-12)
        validate_pmf(pmf)

    @given(shift=st.floats(-200, 200), seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_shift_invariance(self, shift, seed):
        logits = np.random.default_rng(seed).normal(0, 5, 256)
        base = sample_distribution(logits)
        shifted = sample_distribution(logits + shift)
        assert np.all(np.abs(base - shifted) <= 1e-12)

    def test_rejects_nan(self):
        logits = np.zeros(256)
        logits[3] = np.nan
        with pytest.raises(CorruptProviderOutputError):
            sample_distribution(logits)

    def test_rejects_inf(self):
        logits = np.zeros(256)
        logits[3] = np.inf
        with pytest.raises(CorruptProviderOutputError):
            sample_distribution(logits)

    def test_rejects_undersized_vocabulary(self):
        token_map = build_digital_token_map(lambda s: [int(s) + 100])
        with pytest.raises(CorruptProviderOutputError):
            sample_distribution(np.zeros(300), token_map)


class TestFork:
    def test_fork_is_independent(self, rng):
        s = fresh(order=1)
        for sym in rng.integers(0, 256, 50):
            s.observe(int(sym))
        f = s.fork()
        assert np.array_equal(s.next_pmf(), f.next_pmf())
        f.observe(9)
        assert not np.array_equal(s.next_pmf(), f.next_pmf())

    def test_uniform_pmf_is_shared_readonly(self):
        pmf = fresh().next_pmf()
        assert pmf is UNIFORM_PMF
        with pytest.raises(ValueError):
            pmf[0] = 0.5
