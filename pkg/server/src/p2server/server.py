"""Socket server answering codec PREDICT queries from the language model.

Each connection carries one INIT (prompt text + ordering + determinism
expectations) and then any number of sessions. A session holds the token
context and the model's KV cache; PREDICT extends the context with the
delta symbols and returns the 256 logits gathered at the digital token IDs,
as raw little-endian float32. Per-session state means distinct patches are
independent, and batch-of-one deterministic evaluation keeps encode and
decode walking bit-identical logits.
"""

from __future__ import annotations

import socket
import threading
from dataclasses import dataclass
from pathlib import Path

import torch

from . import protocol as wp
from .corpus import build_chat_context
from .lora import merge_adapter
from .model import TinyCausalLM, load_checkpoint, model_fingerprint
from .tokenizer import WordDigitTokenizer


@dataclass
class ServerConfig:
    checkpoint: str | Path
    adapter: str | Path | None = None
    device: str = "cpu"
    deterministic: bool = True
    context_window: int | None = None  # override; defaults to model window
    chat_wrapper: bool = False  # reserved: role wrappers around the prompt


@dataclass
class _Session:
    past: list | None = None
    length: int = 0  # tokens already in the KV cache
    last_logits: bytes | None = None
    last_full: bytes | None = None


class LogitsServer:
    def __init__(self, config: ServerConfig) -> None:
        self.config = config
        self.tokenizer = WordDigitTokenizer()
        # Probing before serving: every value 0..255 must be a single,
        # distinct token or this vocabulary cannot be served losslessly.
        self.digital_ids = self.tokenizer.probe_digital_map()
        self.model: TinyCausalLM = load_checkpoint(config.checkpoint)
        extra = ""
        if config.adapter:
            merge_adapter(self.model, config.adapter)
            extra = f"adapter:{Path(config.adapter).name}"
        self.model.to(config.device)
        self.model.eval()
        self.fingerprint = model_fingerprint(self.model, extra=extra)
        window = self.model.cfg.max_context - 1  # one slot reserved for BOS
        if config.context_window is not None:
            window = min(window, config.context_window)
        self.context_window = window
        self._id_index = torch.tensor(self.digital_ids, dtype=torch.long)
        self._sock: socket.socket | None = None
        self._threads: list[threading.Thread] = []
        self.address: str | None = None

    # ----------------------------------------------------------- lifecycle

    def start(self, host: str = "127.0.0.1", port: int = 0) -> str:
        """Bind and serve on a background thread; returns host:port."""
        if self.config.deterministic:
            torch.use_deterministic_algorithms(True)
            torch.set_num_threads(1)
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(16)
        self.address = "%s:%d" % self._sock.getsockname()
        accept = threading.Thread(target=self._accept_loop, daemon=True)
        accept.start()
        self._threads.append(accept)
        return self.address

    def serve_forever(self, host: str, port: int) -> None:
        print(f"p2server listening on {self.start(host, port)}", flush=True)
        try:
            threading.Event().wait()
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    def stop(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None

    def _accept_loop(self) -> None:
        while self._sock is not None:
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            t = threading.Thread(target=self._serve_connection, args=(conn,), daemon=True)
            t.start()
            self._threads.append(t)

    # ---------------------------------------------------------- connection

    def _serve_connection(self, conn: socket.socket) -> None:
        sessions: dict[int, _Session] = {}
        prompt_ids: list[int] = []
        try:
            while True:
                try:
                    payload = wp.recv_frame(conn)
                except (ConnectionError, OSError):
                    return
                kind = payload[0]
                if kind == wp.MSG_INIT_REQ:
                    req = wp.parse_init_request(payload)
                    if req["version"] != wp.PROTOCOL_VERSION:
                        wp.send_frame(
                            conn,
                            wp.build_error(
                                wp.ERR_PROTOCOL, f"unsupported version {req['version']}"
                            ),
                        )
                        continue
                    if req["expects_deterministic"] and not self.config.deterministic:
                        wp.send_frame(
                            conn,
                            wp.build_error(
                                wp.ERR_DETERMINISM_UNSUPPORTED,
                                "server not running in deterministic mode",
                            ),
                        )
                        continue
                    prompt_ids = self.tokenizer.tokenize(req["prompt_text"])
                    if len(prompt_ids) + 1 >= self.context_window:
                        wp.send_frame(
                            conn,
                            wp.build_error(
                                wp.ERR_CONTEXT_OVERFLOW,
                                f"prompt alone ({len(prompt_ids)} tokens) fills the window",
                            ),
                        )
                        continue
                    sessions.clear()
                    wp.send_frame(
                        conn,
                        wp.build_init_response(
                            vocab_size=self.tokenizer.vocab_size,
                            context_window=self.context_window,
                            prompt_token_count=len(prompt_ids),
                            digital_token_ids=self.digital_ids,
                            model_fingerprint=self.fingerprint,
                        ),
                    )
                elif kind == wp.MSG_PREDICT_REQ:
                    req = wp.parse_predict_request(payload)
                    try:
                        resp = self._predict(
                            sessions, prompt_ids, req["session_id"],
                            req["new_symbols"], req["flags"],
                        )
                    except _Overflow as exc:
                        resp = wp.build_error(wp.ERR_CONTEXT_OVERFLOW, str(exc))
                    wp.send_frame(conn, resp)
                elif kind == wp.MSG_RESET_REQ:
                    sessions.pop(wp.parse_reset_request(payload), None)
                    wp.send_frame(conn, wp.build_reset_response())
                else:
                    wp.send_frame(
                        conn, wp.build_error(wp.ERR_PROTOCOL, f"unknown message {kind}")
                    )
        finally:
            conn.close()

    def _predict(
        self,
        sessions: dict[int, _Session],
        prompt_ids: list[int],
        session_id: int,
        new_symbols: bytes,
        flags: int,
    ) -> bytes:
        session = sessions.get(session_id)
        if session is None:
            session = _Session()
            sessions[session_id] = session
        if session.length == 0:
            # First query: run BOS + prompt + any symbols in one pass.
            ids = build_chat_context(
                prompt_ids,
                [self.tokenizer.symbol_id(s) for s in new_symbols],
                self.tokenizer.bos_id,
            )
        else:
            ids = [self.tokenizer.symbol_id(s) for s in new_symbols]
        if session.length + len(ids) > self.context_window + 1:  # +1 for BOS
            raise _Overflow(
                f"session {session_id}: context {session.length + len(ids)} exceeds "
                f"window {self.context_window}"
            )
        if ids:
            with torch.no_grad():
                batch = torch.tensor([ids], dtype=torch.long, device=self.config.device)
                logits, session.past = self.model.logits_for_next(
                    batch, session.past, start_pos=session.length
                )
            session.length += len(ids)
            row = logits[0].detach().cpu().numpy().astype("<f4")
            session.last_logits = row[list(self.digital_ids)].tobytes()
            session.last_full = row.tobytes()
        elif session.last_logits is None:
            raise _Overflow("empty first PREDICT on a session with no context")
        full = session.last_full if flags & wp.FLAG_FULL_VOCAB else b""
        return wp.build_predict_response(
            session.last_logits, full=full, flags=flags & wp.FLAG_FULL_VOCAB
        )


class _Overflow(Exception):
    pass
