"""Server-side implementation of the version-1 codec wire protocol.

Frames are u32le length + payload; payload byte 0 is the message type.
INIT_REQ    u8 version; u8 ordering; u8 expects_deterministic;
            u64le map_fingerprint; u32le prompt_len; prompt UTF-8.
INIT_RESP   u32le vocab_size; u32le context_window; u32le prompt_token_count;
            256 x u32le digital token IDs; u64le model_fingerprint.
PREDICT_REQ u32le session_id; u8 flags (bit0 = include full-vocab logits);
            u32le n_new; n_new symbol bytes.
PREDICT_RESP u8 flags; 1024 bytes of 256 f32le gathered logits;
            [u32le vocab_size; vocab f32le full logits] when bit0 set.
RESET_REQ   u32le session_id.  RESET_RESP: empty.
ERROR       u16le code; u32le msg_len; message UTF-8.
"""

from __future__ import annotations

import struct

MSG_INIT_REQ = 1
MSG_INIT_RESP = 2
MSG_PREDICT_REQ = 3
MSG_PREDICT_RESP = 4
MSG_RESET_REQ = 5
MSG_RESET_RESP = 6
MSG_ERROR = 7

ERR_TOKENIZER_UNSUITABLE = 1
ERR_CONTEXT_OVERFLOW = 2
ERR_PROVIDER_UNAVAILABLE = 3
ERR_PROTOCOL = 4
ERR_DETERMINISM_UNSUPPORTED = 5

FLAG_FULL_VOCAB = 0x01
PROTOCOL_VERSION = 1
MAX_FRAME = 64 * 1024 * 1024


class ProtocolError(Exception):
    pass


def recv_exact(sock, n: int) -> bytes:
    chunks = []
    while n:
        chunk = sock.recv(n)
        if not chunk:
            raise ConnectionError("peer closed mid-frame")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def recv_frame(sock) -> bytes:
    (length,) = struct.unpack("<I", recv_exact(sock, 4))
    if length > MAX_FRAME:
        raise ProtocolError(f"oversized frame: {length}")
    return recv_exact(sock, length)


def send_frame(sock, payload: bytes) -> None:
    sock.sendall(struct.pack("<I", len(payload)) + payload)


def parse_init_request(payload: bytes) -> dict:
    version, ordering, det, fp, plen = struct.unpack_from("<BBBQI", payload, 1)
    return {
        "version": version,
        "ordering": ordering,
        "expects_deterministic": bool(det),
        "map_fingerprint": fp,
        "prompt_text": payload[16 : 16 + plen].decode("utf-8"),
    }


def build_init_request(
    version: int,
    ordering: int,
    expects_deterministic: bool,
    map_fingerprint: int,
    prompt_text: str,
) -> bytes:
    prompt = prompt_text.encode("utf-8")
    return (
        struct.pack(
            "<BBBBQI",
            MSG_INIT_REQ,
            version,
            ordering,
            int(expects_deterministic),
            map_fingerprint,
            len(prompt),
        )
        + prompt
    )


def build_init_response(
    vocab_size: int,
    context_window: int,
    prompt_token_count: int,
    digital_token_ids: tuple[int, ...],
    model_fingerprint: int,
) -> bytes:
    return struct.pack(
        "<BIII256IQ",
        MSG_INIT_RESP,
        vocab_size,
        context_window,
        prompt_token_count,
        *digital_token_ids,
        model_fingerprint,
    )


def parse_init_response(payload: bytes) -> dict:
    fields = struct.unpack_from("<III256IQ", payload, 1)
    return {
        "vocab_size": fields[0],
        "context_window": fields[1],
        "prompt_token_count": fields[2],
        "digital_token_ids": tuple(fields[3:259]),
        "model_fingerprint": fields[259],
    }


def parse_predict_request(payload: bytes) -> dict:
    session_id, flags, n = struct.unpack_from("<IBI", payload, 1)
    return {
        "session_id": session_id,
        "flags": flags,
        "new_symbols": payload[10 : 10 + n],
    }


def build_predict_request(session_id: int, flags: int, new_symbols: bytes) -> bytes:
    return (
        struct.pack("<BIBI", MSG_PREDICT_REQ, session_id, flags, len(new_symbols))
        + new_symbols
    )


def build_predict_response(gathered: bytes, full: bytes = b"", flags: int = 0) -> bytes:
    if len(gathered) != 1024:
        raise ProtocolError(f"gathered logits must be 1024 bytes, got {len(gathered)}")
    out = struct.pack("<BB", MSG_PREDICT_RESP, flags) + gathered
    if flags & FLAG_FULL_VOCAB:
        out += struct.pack("<I", len(full) // 4) + full
    return out


def parse_predict_response(payload: bytes) -> dict:
    flags = payload[1]
    gathered = payload[2:1026]
    full = b""
    if flags & FLAG_FULL_VOCAB:
        (vocab,) = struct.unpack_from("<I", payload, 1026)
        full = payload[1030 : 1030 + 4 * vocab]
    return {"flags": flags, "logits256": gathered, "full_logits": full}


def build_reset_request(session_id: int) -> bytes:
    return struct.pack("<BI", MSG_RESET_REQ, session_id)


def parse_reset_request(payload: bytes) -> int:
    return struct.unpack_from("<I", payload, 1)[0]


def build_reset_response() -> bytes:
    return struct.pack("<B", MSG_RESET_RESP)


def build_error(code: int, message: str) -> bytes:
    msg = message.encode("utf-8")
    return struct.pack("<BHI", MSG_ERROR, code, len(msg)) + msg


def parse_error(payload: bytes) -> tuple[int, str]:
    code, mlen = struct.unpack_from("<HI", payload, 1)
    return code, payload[7 : 7 + mlen].decode("utf-8", errors="replace")
