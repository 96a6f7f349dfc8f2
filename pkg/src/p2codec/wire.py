"""Version-1 wire protocol for remote probability backends.

Transport is any reliable byte stream (TCP or Unix socket). Every message is
a length-prefixed frame:

    u32le payload_length | payload

and the payload starts with a one-byte message type:

    INIT_REQ (1)      u8 version; u8 ordering (0 joint / 1 independent);
                      u8 expects_deterministic; u64le map_fingerprint
                      (0 = not yet known); u32le prompt_len; prompt UTF-8.
    INIT_RESP (2)     u32le vocab_size; u32le context_window;
                      u32le prompt_token_count; 256 x u32le digital token
                      IDs; u64le model_fingerprint.
    PREDICT_REQ (3)   u32le session_id; u8 flags (bit0 = also return the
                      full-vocabulary logits for a gather audit);
                      u32le n_new; n_new bytes of new symbols since the
                      last call on this session.
    PREDICT_RESP (4)  u8 flags (echo); 1024 bytes = 256 x f32le logits
                      gathered at the digital token IDs; if bit0:
                      u32le vocab_size then vocab_size x f32le full logits.
    RESET_REQ (5)     u32le session_id.
    RESET_RESP (6)    empty.
    ERROR (7)         u16le code; u32le msg_len; message UTF-8.

The server does the vocabulary gather; the client does softmax and CDF
quantization, so all entropy-critical arithmetic happens on one side.
Logits travel as raw IEEE-754 32-bit values: encoder and decoder see
bit-identical inputs.
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    ContextOverflowError,
    CorruptStreamError,
    ProviderUnavailableError,
    TokenizerUnsuitableError,
)

__all__ = [
    "PROTOCOL_VERSION",
    "MSG_INIT_REQ",
    "MSG_INIT_RESP",
    "MSG_PREDICT_REQ",
    "MSG_PREDICT_RESP",
    "MSG_RESET_REQ",
    "MSG_RESET_RESP",
    "MSG_ERROR",
    "ERR_TOKENIZER_UNSUITABLE",
    "ERR_CONTEXT_OVERFLOW",
    "ERR_PROVIDER_UNAVAILABLE",
    "ERR_PROTOCOL",
    "ERR_DETERMINISM_UNSUPPORTED",
    "FLAG_FULL_VOCAB",
    "InitRequest",
    "InitResponse",
    "PredictRequest",
    "PredictResponse",
    "send_frame",
    "recv_frame",
    "pack_init_request",
    "unpack_init_request",
    "pack_init_response",
    "unpack_init_response",
    "pack_predict_request",
    "unpack_predict_request",
    "pack_predict_response",
    "unpack_predict_response",
    "pack_reset_request",
    "unpack_reset_request",
    "pack_reset_response",
    "pack_error",
    "raise_wire_error",
    "connect",
]

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 64 * 1024 * 1024

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


@dataclass(frozen=True)
class InitRequest:
    version: int
    ordering: int
    expects_deterministic: bool
    map_fingerprint: int
    prompt_text: str


@dataclass(frozen=True)
class InitResponse:
    vocab_size: int
    context_window: int
    prompt_token_count: int
    digital_token_ids: tuple[int, ...]
    model_fingerprint: int


@dataclass(frozen=True)
class PredictRequest:
    session_id: int
    flags: int
    new_symbols: bytes


@dataclass(frozen=True)
class PredictResponse:
    flags: int
    logits256: bytes
    full_logits: bytes = b""

    def logits_array(self) -> np.ndarray:
        return np.frombuffer(self.logits256, dtype="<f4").astype(np.float64)

    def full_logits_array(self) -> np.ndarray:
        return np.frombuffer(self.full_logits, dtype="<f4").astype(np.float64)


# ---------------------------------------------------------------- framing


def send_frame(sock, payload: bytes) -> None:
    sock.sendall(struct.pack("<I", len(payload)) + payload)


def _recv_exact(sock, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ProviderUnavailableError("connection closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def recv_frame(sock) -> bytes:
    (length,) = struct.unpack("<I", _recv_exact(sock, 4))
    if length > MAX_FRAME_BYTES:
        raise CorruptStreamError(f"frame of {length} bytes exceeds protocol limit")
    return _recv_exact(sock, length)


# ------------------------------------------------------------ pack/unpack


def pack_init_request(req: InitRequest) -> bytes:
    prompt = req.prompt_text.encode("utf-8")
    return (
        struct.pack(
            "<BBBBQI",
            MSG_INIT_REQ,
            req.version,
            req.ordering,
            1 if req.expects_deterministic else 0,
            req.map_fingerprint,
            len(prompt),
        )
        + prompt
    )


def unpack_init_request(payload: bytes) -> InitRequest:
    if payload[0] != MSG_INIT_REQ:
        raise CorruptStreamError(f"expected INIT request, got type {payload[0]}")
    version, ordering, det, fp, plen = struct.unpack_from("<BBBQI", payload, 1)
    prompt = payload[16 : 16 + plen].decode("utf-8")
    return InitRequest(
        version=version,
        ordering=ordering,
        expects_deterministic=bool(det),
        map_fingerprint=fp,
        prompt_text=prompt,
    )


def pack_init_response(resp: InitResponse) -> bytes:
    return struct.pack(
        "<BIII256IQ",
        MSG_INIT_RESP,
        resp.vocab_size,
        resp.context_window,
        resp.prompt_token_count,
        *resp.digital_token_ids,
        resp.model_fingerprint,
    )


def unpack_init_response(payload: bytes) -> InitResponse:
    if payload[0] == MSG_ERROR:
        raise_wire_error(payload)
    if payload[0] != MSG_INIT_RESP:
        raise CorruptStreamError(f"expected INIT response, got type {payload[0]}")
    fields = struct.unpack_from("<III256IQ", payload, 1)
    return InitResponse(
        vocab_size=fields[0],
        context_window=fields[1],
        prompt_token_count=fields[2],
        digital_token_ids=tuple(fields[3:259]),
        model_fingerprint=fields[259],
    )


def pack_predict_request(req: PredictRequest) -> bytes:
    return (
        struct.pack("<BIBI", MSG_PREDICT_REQ, req.session_id, req.flags, len(req.new_symbols))
        + req.new_symbols
    )


def unpack_predict_request(payload: bytes) -> PredictRequest:
    if payload[0] != MSG_PREDICT_REQ:
        raise CorruptStreamError(f"expected PREDICT request, got type {payload[0]}")
    session_id, flags, n = struct.unpack_from("<IBI", payload, 1)
    return PredictRequest(
        session_id=session_id, flags=flags, new_symbols=payload[10 : 10 + n]
    )


def pack_predict_response(resp: PredictResponse) -> bytes:
    if len(resp.logits256) != 1024:
        raise CorruptStreamError(
            f"gathered logits payload must be 1024 bytes, got {len(resp.logits256)}"
        )
    head = struct.pack("<BB", MSG_PREDICT_RESP, resp.flags) + resp.logits256
    if resp.flags & FLAG_FULL_VOCAB:
        head += struct.pack("<I", len(resp.full_logits) // 4) + resp.full_logits
    return head


def unpack_predict_response(payload: bytes) -> PredictResponse:
    if payload[0] == MSG_ERROR:
        raise_wire_error(payload)
    if payload[0] != MSG_PREDICT_RESP:
        raise CorruptStreamError(f"expected PREDICT response, got type {payload[0]}")
    flags = payload[1]
    logits256 = payload[2:1026]
    if len(logits256) != 1024:
        raise CorruptStreamError("short PREDICT response")
    full = b""
    if flags & FLAG_FULL_VOCAB:
        (vocab,) = struct.unpack_from("<I", payload, 1026)
        full = payload[1030 : 1030 + 4 * vocab]
        if len(full) != 4 * vocab:
            raise CorruptStreamError("short full-vocabulary logits")
    return PredictResponse(flags=flags, logits256=logits256, full_logits=full)


def pack_reset_request(session_id: int) -> bytes:
    return struct.pack("<BI", MSG_RESET_REQ, session_id)


def unpack_reset_request(payload: bytes) -> int:
    if payload[0] != MSG_RESET_REQ:
        raise CorruptStreamError(f"expected RESET request, got type {payload[0]}")
    return struct.unpack_from("<I", payload, 1)[0]


def pack_reset_response() -> bytes:
    return struct.pack("<B", MSG_RESET_RESP)


def pack_error(code: int, message: str) -> bytes:
    msg = message.encode("utf-8")
    return struct.pack("<BHI", MSG_ERROR, code, len(msg)) + msg


def raise_wire_error(payload: bytes) -> None:
    code, mlen = struct.unpack_from("<HI", payload, 1)
    message = payload[7 : 7 + mlen].decode("utf-8", errors="replace")
    if code == ERR_TOKENIZER_UNSUITABLE:
        raise TokenizerUnsuitableError(message)
    if code == ERR_CONTEXT_OVERFLOW:
        raise ContextOverflowError(message)
    if code == ERR_DETERMINISM_UNSUPPORTED:
        raise ProviderUnavailableError(f"determinism unsupported: {message}")
    raise ProviderUnavailableError(message)


# ------------------------------------------------------------- transport


def connect(address: str, timeout: float | None = 30.0) -> socket.socket:
    """Open a stream connection to `host:port` or `unix:/path`."""
    try:
        if address.startswith("unix:"):
            sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
            sock.settimeout(timeout)
            sock.connect(address[len("unix:") :])
            return sock
        host, _, port = address.rpartition(":")
        if not host:
            raise ProviderUnavailableError(f"bad address {address!r}, need host:port")
        sock = socket.create_connection((host, int(port)), timeout=timeout)
        return sock
    except OSError as exc:
        raise ProviderUnavailableError(f"cannot connect to {address}: {exc}") from exc
