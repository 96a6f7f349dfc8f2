import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from p2codec.errors import CorruptStreamError, TokenizerUnsuitableError
from p2codec.serialization import OrderingMode, SymbolSequence
from p2codec.tokens import (
    PromptConfig,
    build_digital_token_map,
    default_prompt_text,
    detokenize_symbols,
    identity_token_map,
    map_fingerprint,
    tokenize_context,
    word_tokenizer,
)

JOINT = OrderingMode.CHANNEL_JOINT


def _seq(values):
    return SymbolSequence(symbols=np.asarray(values, dtype=np.uint8), ordering=JOINT)


class TestBuildMap:
    def test_identity_vocabulary(self):
        m = build_digital_token_map(lambda s: [int(s)])
        assert m.forward == tuple(range(256))

    def test_multi_token_value_rejected(self):
        def probe(s):
            if s == "255":
                return [2, 55]
            return [int(s)]

        with pytest.raises(TokenizerUnsuitableError, match="255"):
            build_digital_token_map(probe)

    def test_duplicate_ids_rejected(self):
        with pytest.raises(TokenizerUnsuitableError, match="collide"):
            build_digital_token_map(lambda s: [min(int(s), 254)])

    def test_shifted_vocabulary_is_bijective(self):
        m = build_digital_token_map(lambda s: [1000 + int(s) * 7])
        assert len(set(m.forward)) == 256
        for z in range(256):
            assert m.inverse[m.forward[z]] == z


class TestTokenizeContext:
    def test_empty_prompt(self):
        ctx = tokenize_context(
            PromptConfig.off(), _seq([10, 255]), identity_token_map(), word_tokenizer
        )
        assert ctx.prompt_ids == ()
        assert ctx.symbol_ids.tolist() == [10, 255]

    def test_prompt_plus_patch_token_count(self):
        # A backend whose tokenizer spends 19 tokens on the default prompt
        # sees 19 + 768 = 787 context tokens for a 16x16 RGB patch.
        def nineteen_token_prompt(text):
            assert text == default_prompt_text(JOINT)
            return list(range(1000, 1019))

        seq = _seq(np.arange(768) % 256)
        ctx = tokenize_context(
            PromptConfig.default_for(JOINT), seq, identity_token_map(), nineteen_token_prompt
        )
        assert len(ctx.prompt_ids) == 19
        assert ctx.total_tokens == 787

    def test_symbol_ids_use_map_lookup(self):
        m = build_digital_token_map(lambda s: [500 + int(s)])
        ctx = tokenize_context(PromptConfig.off(), _seq([0, 128, 255]), m, word_tokenizer)
        assert ctx.symbol_ids.tolist() == [500, 628, 755]

    def test_prompt_tokens_never_enter_symbols(self):
        seq = _seq([1, 2, 3])
        on = tokenize_context(
            PromptConfig.default_for(JOINT), seq, identity_token_map(), word_tokenizer
        )
        off = tokenize_context(PromptConfig.off(), seq, identity_token_map(), word_tokenizer)
        assert on.symbol_ids.tolist() == off.symbol_ids.tolist() == [1, 2, 3]
        assert len(on.prompt_ids) > 0 and len(off.prompt_ids) == 0


class TestDetokenize:
    def test_identity(self):
        assert detokenize_symbols([10, 255], identity_token_map()) == [10, 255]

    def test_bijection_law(self):
        m = build_digital_token_map(lambda s: [77 + int(s) * 3])
        assert detokenize_symbols(m.forward, m) == list(range(256))

    def test_unknown_id_is_corrupt_stream(self):
        with pytest.raises(CorruptStreamError):
            detokenize_symbols([256], identity_token_map())

    @given(st.lists(st.integers(0, 255), min_size=0, max_size=768))
    @settings(max_examples=50, deadline=None)
    def test_round_trip(self, values):
        m = build_digital_token_map(lambda s: [9000 - int(s)])
        ctx = tokenize_context(PromptConfig.off(), _seq(values), m, word_tokenizer)
        assert detokenize_symbols(ctx.symbol_ids, m) == values


class TestFingerprint:
    def test_stable_and_distinct(self):
        a = map_fingerprint(identity_token_map())
        b = map_fingerprint(identity_token_map())
        c = map_fingerprint(build_digital_token_map(lambda s: [int(s) + 1]))
        assert a == b
        assert a != c
        assert 0 <= a < 2**64


def test_default_prompts_differ_by_mode():
    joint = default_prompt_text(OrderingMode.CHANNEL_JOINT)
    indep = default_prompt_text(OrderingMode.CHANNEL_INDEPENDENT)
    assert "RGB pixel" in joint
    assert "sub-pixel" in indep
    assert joint != indep


def test_disabled_prompt_has_no_text():
    assert PromptConfig("whatever", enabled=False).effective_text == ""
