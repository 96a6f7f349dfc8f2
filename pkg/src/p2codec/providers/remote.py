"""Client-side provider speaking the version-1 wire protocol.

One connection serves many sessions (one per coded sequence). The prompt and
ordering mode are connection-level: they are fixed by the INIT exchange that
the first begin() triggers. Requests are serialized under a lock, so
sessions owned by different worker threads can share the connection.
"""

from __future__ import annotations

import itertools
import threading

import numpy as np

from .. import wire
from ..errors import ConfigError, ProviderUnavailableError
from ..serialization import OrderingMode
from ..tokens import DigitalTokenMap, PromptConfig, map_fingerprint
from .base import ProbabilityProvider, ProviderSession
from .sampling import sample_distribution

__all__ = ["RemoteProvider"]


class _RemoteSession(ProviderSession):
    def __init__(
        self,
        provider: "RemoteProvider",
        session_id: int,
        prompt_token_count: int,
        mode: OrderingMode,
        channel: int | None,
    ) -> None:
        super().__init__(prompt_token_count, mode, channel, deterministic=True)
        self._provider = provider
        self._id = session_id
        self._pending: list[int] = []
        self._closed = False

    def next_pmf(self) -> np.ndarray:
        resp = self._provider._predict(self._id, bytes(self._pending))
        self._pending.clear()
        return sample_distribution(resp.logits_array())

    def observe(self, symbol: int) -> None:
        self._pending.append(symbol)
        self.history.append(symbol)

    def fork(self) -> "_RemoteSession":
        # The server holds the context, so forking means replaying the
        # history into a fresh session; valid for a deterministic backend.
        clone = self._provider.begin_raw(self.mode, self.channel)
        for s in self.history:
            clone.observe(s)
        return clone

    def verify_gather(self) -> bool:
        """Audit the server-side gather against a client-side one."""
        resp = self._provider._predict(
            self._id, bytes(self._pending), flags=wire.FLAG_FULL_VOCAB
        )
        self._pending.clear()
        gathered = resp.logits_array()
        full = resp.full_logits_array()
        client_side = full[self._provider.token_map.forward_array()]
        return bool(np.array_equal(gathered, client_side))

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._provider._reset(self._id)


class RemoteProvider(ProbabilityProvider):
    def __init__(self, address: str, expects_deterministic: bool = True) -> None:
        self.address = address
        self.expects_deterministic = expects_deterministic
        self.deterministic = expects_deterministic
        self.name = f"remote:{address}"
        self._sock = None
        self._lock = threading.Lock()
        self._ids = itertools.count(1)
        self._init: wire.InitResponse | None = None
        self._prompt_text: str | None = None
        self._mode: OrderingMode | None = None
        self._token_map: DigitalTokenMap | None = None

    # ------------------------------------------------------------ wiring

    def ensure_init(self, prompt: PromptConfig, mode: OrderingMode) -> None:
        """Perform the INIT handshake, or verify config compatibility."""
        with self._lock:
            if self._init is not None:
                if self._prompt_text != prompt.effective_text or self._mode != mode:
                    raise ConfigError(
                        "remote provider already initialized with a different "
                        "prompt/ordering; open a new provider for a new config"
                    )
                return
            self._sock = wire.connect(self.address)
            req = wire.InitRequest(
                version=wire.PROTOCOL_VERSION,
                ordering=int(mode),
                expects_deterministic=self.expects_deterministic,
                map_fingerprint=0,
                prompt_text=prompt.effective_text,
            )
            wire.send_frame(self._sock, wire.pack_init_request(req))
            resp = wire.unpack_init_response(wire.recv_frame(self._sock))
            token_map = DigitalTokenMap(forward=resp.digital_token_ids)
            self._init = resp
            self._prompt_text = prompt.effective_text
            self._mode = mode
            self._token_map = token_map
            self.context_window = resp.context_window

    def _require_init(self) -> wire.InitResponse:
        if self._init is None:
            raise ProviderUnavailableError(
                "remote provider not initialized; call begin() first"
            )
        return self._init

    def _predict(self, session_id: int, new_symbols: bytes, flags: int = 0):
        with self._lock:
            if self._sock is None:
                raise ProviderUnavailableError("remote provider connection closed")
            req = wire.PredictRequest(
                session_id=session_id, flags=flags, new_symbols=new_symbols
            )
            wire.send_frame(self._sock, wire.pack_predict_request(req))
            return wire.unpack_predict_response(wire.recv_frame(self._sock))

    def _reset(self, session_id: int) -> None:
        with self._lock:
            if self._sock is None:
                return
            wire.send_frame(self._sock, wire.pack_reset_request(session_id))
            wire.recv_frame(self._sock)

    # ---------------------------------------------------------- provider

    @property
    def fingerprint(self) -> int:
        return self._require_init().model_fingerprint

    @property
    def token_map(self) -> DigitalTokenMap:
        if self._token_map is None:
            raise ProviderUnavailableError(
                "remote provider not initialized; call begin() first"
            )
        return self._token_map

    @property
    def prompt_token_count(self) -> int:
        return self._require_init().prompt_token_count

    def map_fingerprint(self) -> int:
        return map_fingerprint(self.token_map)

    def begin(
        self,
        prompt: PromptConfig,
        mode: OrderingMode,
        channel: int | None = None,
    ) -> _RemoteSession:
        self.ensure_init(prompt, mode)
        return self.begin_raw(mode, channel)

    def begin_raw(self, mode: OrderingMode, channel: int | None) -> _RemoteSession:
        init = self._require_init()
        return _RemoteSession(self, next(self._ids), init.prompt_token_count, mode, channel)

    def close(self) -> None:
        with self._lock:
            if self._sock is not None:
                try:
                    self._sock.close()
                finally:
                    self._sock = None
