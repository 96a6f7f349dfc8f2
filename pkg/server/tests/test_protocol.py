import numpy as np
import pytest

from p2server import protocol as wp


def test_init_request_round_trip():
    raw = wp.build_init_request(1, 0, True, 0xABCD, "Predict the next")
    back = wp.parse_init_request(raw)
    assert back == {
        "version": 1,
        "ordering": 0,
        "expects_deterministic": True,
        "map_fingerprint": 0xABCD,
        "prompt_text": "Predict the next",
    }


def test_init_response_round_trip():
    ids = tuple(range(3, 259))
    raw = wp.build_init_response(400, 1023, 21, ids, 2**60 + 9)
    back = wp.parse_init_response(raw)
    assert back["digital_token_ids"] == ids
    assert back["context_window"] == 1023
    assert back["prompt_token_count"] == 21
    assert back["model_fingerprint"] == 2**60 + 9


def test_predict_round_trip_and_payload_size():
    gathered = np.arange(256, dtype="<f4").tobytes()
    assert len(gathered) == 1024
    raw = wp.build_predict_response(gathered)
    back = wp.parse_predict_response(raw)
    assert back["logits256"] == gathered and back["full_logits"] == b""

    full = np.zeros(400, dtype="<f4").tobytes()
    raw = wp.build_predict_response(gathered, full=full, flags=wp.FLAG_FULL_VOCAB)
    back = wp.parse_predict_response(raw)
    assert back["full_logits"] == full


def test_predict_response_rejects_wrong_size():
    with pytest.raises(wp.ProtocolError):
        wp.build_predict_response(b"\x00" * 1000)


def test_error_round_trip():
    raw = wp.build_error(wp.ERR_TOKENIZER_UNSUITABLE, "value 255 splits")
    assert wp.parse_error(raw) == (wp.ERR_TOKENIZER_UNSUITABLE, "value 255 splits")


def test_reset_round_trip():
    assert wp.parse_reset_request(wp.build_reset_request(42)) == 42
