"""Length-prefixed JSON wire protocol between the engine and a model server.

Framing: 4-byte big-endian payload length, then UTF-8 JSON. Every request
carries the protocol version ("v": 1) and an "op"; distributions travel as
64-bit floats, either as probabilities or as log-probabilities depending on
the request's "encoding" field.

Ops:
  hello            -> {"vocab_size", "eos_token", "capabilities", "model_id"}
  next_dist        {"context", "temperature"}           -> {"vocab_size", "dists": [row]}
  batch_next_dist  {"contexts", "temperature"}          -> {"vocab_size", "dists": rows}
  score            {"context", "continuation"}          -> {"logprobs": [...]}
  decode           {"tokens": [...]}                    -> {"pieces": [...], "text"}

Errors come back as {"ok": false, "error": {"code", "message"}}; partial
batch failures are whole-batch errors by design.
"""
from __future__ import annotations

import json
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .backend import CAP_SCORE, DistributionProvider
from .dist import Dist
from .errors import (
    ContextTooLongError,
    InvalidInputError,
    ProtocolError,
    TransportError,
    UnsupportedOperationError,
)

PROTOCOL_VERSION = 1
MAX_MESSAGE_BYTES = 256 * 1024 * 1024
_LEN = struct.Struct(">I")

ERR_BAD_REQUEST = "bad_request"
ERR_UNSUPPORTED_OP = "unsupported_op"
ERR_UNSUPPORTED_CAPABILITY = "unsupported_capability"
ERR_CONTEXT_TOO_LONG = "context_too_long"
ERR_AUTH = "auth"
ERR_INTERNAL = "internal"


def send_message(sock: socket.socket, obj: dict) -> None:
    payload = json.dumps(obj).encode("utf-8")
    if len(payload) > MAX_MESSAGE_BYTES:
        raise ProtocolError(f"message of {len(payload)} bytes exceeds the {MAX_MESSAGE_BYTES} cap")
    sock.sendall(_LEN.pack(len(payload)) + payload)


def recv_message(sock: socket.socket) -> dict | None:
    """One framed message, or None on clean EOF before any byte."""
    header = _recv_exact(sock, _LEN.size, allow_eof=True)
    if header is None:
        return None
    (length,) = _LEN.unpack(header)
    if length > MAX_MESSAGE_BYTES:
        raise ProtocolError(f"peer announced a {length}-byte message, cap is {MAX_MESSAGE_BYTES}")
    payload = _recv_exact(sock, length, allow_eof=False)
    try:
        return json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"undecodable message: {exc}") from exc


def _recv_exact(sock: socket.socket, n: int, allow_eof: bool):
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(min(n - got, 1 << 20))
        if not chunk:
            if allow_eof and got == 0:
                return None
            raise TransportError("connection closed mid-message")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def _encode_rows(dists: Sequence[Dist], encoding: str) -> list[list[float]]:
    if encoding == "prob":
        return [d.probs.tolist() for d in dists]
    if encoding == "logprob":
        return [np.log(d.probs).tolist() for d in dists]
    raise ProtocolError(f"unknown distribution encoding {encoding!r}")


def _decode_rows(rows, encoding: str) -> list[Dist]:
    out = []
    for row in rows:
        arr = np.asarray(row, dtype=np.float64)
        if encoding == "logprob":
            arr = np.exp(arr)
        out.append(Dist(arr))
    return out


# --- server ----------------------------------------------------------------


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        server: ProtocolServer = self.server.owner  # type: ignore[attr-defined]
        while True:
            try:
                req = recv_message(self.request)
            except (TransportError, ProtocolError, OSError):
                return
            if req is None:
                return
            try:
                resp = server.answer(req)
            except Exception as exc:  # a serving loop must not die on one bad request
                resp = _error(ERR_INTERNAL, f"{type(exc).__name__}: {exc}")
            try:
                send_message(self.request, resp)
            except OSError:
                return


def _error(code: str, message: str) -> dict:
    return {"v": PROTOCOL_VERSION, "ok": False, "error": {"code": code, "message": message}}


class _ThreadingTCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class ProtocolServer:
    """Serves any DistributionProvider over the wire protocol."""

    def __init__(
        self,
        provider: DistributionProvider,
        host: str = "127.0.0.1",
        port: int = 0,
        auth_token: str | None = None,
        model_id: str = "provider",
        max_context_chars: int | None = None,
    ):
        self.provider = provider
        self.auth_token = auth_token
        self.model_id = model_id
        self.max_context_chars = max_context_chars
        self._tcp = _ThreadingTCPServer((host, port), _Handler)
        self._tcp.owner = self
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._tcp.server_address[:2]

    def start(self) -> "ProtocolServer":
        self._thread = threading.Thread(target=self._tcp.serve_forever, daemon=True)
        self._thread.start()
        return self

    def shutdown(self) -> None:
        self._tcp.shutdown()
        self._tcp.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "ProtocolServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.shutdown()

    # -- request dispatch --

    def answer(self, req: dict) -> dict:
        if not isinstance(req, dict) or req.get("v") != PROTOCOL_VERSION:
            return _error(ERR_BAD_REQUEST, f"missing or unsupported protocol version: {req.get('v')!r}")
        if self.auth_token is not None and req.get("auth") != self.auth_token:
            return _error(ERR_AUTH, "missing or invalid auth token")
        op = req.get("op")
        encoding = req.get("encoding", "prob")
        p = self.provider
        try:
            if op == "hello":
                return self._ok(
                    vocab_size=p.vocab_size,
                    eos_token=p.eos_token,
                    capabilities=sorted(p.capabilities),
                    model_id=self.model_id,
                )
            if op in ("next_dist", "batch_next_dist"):
                contexts = [req["context"]] if op == "next_dist" else list(req["contexts"])
                if not contexts:
                    return _error(ERR_BAD_REQUEST, "empty context batch")
                self._check_lengths(contexts)
                temperature = float(req.get("temperature", 1.0))
                dists = p.next_distribution_batch(contexts, temperature)
                return self._ok(vocab_size=p.vocab_size, dists=_encode_rows(dists, encoding))
            if op == "score":
                if CAP_SCORE not in p.capabilities:
                    return _error(ERR_UNSUPPORTED_CAPABILITY, "provider cannot score continuations")
                self._check_lengths([req["context"]])
                logprobs = p.score_continuation(req["context"], req["continuation"])
                return self._ok(logprobs=[float(x) for x in logprobs])
            if op == "decode":
                tokens = [int(t) for t in req["tokens"]]
                pieces = [p.decode([t]) for t in tokens]
                return self._ok(pieces=pieces, text="".join(pieces))
            return _error(ERR_UNSUPPORTED_OP, f"unknown op {op!r}")
        except ContextTooLongError as exc:
            return _error(ERR_CONTEXT_TOO_LONG, str(exc))
        except (KeyError, TypeError, ValueError, InvalidInputError) as exc:
            return _error(ERR_BAD_REQUEST, f"{type(exc).__name__}: {exc}")

    def _check_lengths(self, contexts: Sequence[str]) -> None:
        if self.max_context_chars is None:
            return
        for c in contexts:
            if len(c) > self.max_context_chars:
                raise ContextTooLongError(
                    f"context of {len(c)} chars exceeds server limit {self.max_context_chars}"
                )

    def _ok(self, **fields) -> dict:
        return {"v": PROTOCOL_VERSION, "ok": True, **fields}


def serve_provider(provider: DistributionProvider, **kwargs) -> ProtocolServer:
    return ProtocolServer(provider, **kwargs).start()


# --- client ----------------------------------------------------------------


@dataclass(frozen=True)
class RemoteBackendConfig:
    endpoint: str  # "host:port"
    timeout: float = 30.0
    retries: int = 2
    auth_token: str | None = None
    pool_size: int = 2
    encoding: str = "prob"

    def __post_init__(self):
        if not self.timeout > 0:
            raise InvalidInputError("timeout must be > 0")
        if self.pool_size < 1:
            raise InvalidInputError("pool_size must be >= 1")
        if self.encoding not in ("prob", "logprob"):
            raise InvalidInputError(f"unknown encoding {self.encoding!r}")

    def host_port(self) -> tuple[str, int]:
        host, _, port = self.endpoint.rpartition(":")
        if not host or not port.isdigit():
            raise InvalidInputError(f"endpoint must look like host:port, got {self.endpoint!r}")
        return host, int(port)


class RemoteBackend(DistributionProvider):
    """Protocol client implementing DistributionProvider over a socket pool."""

    def __init__(self, config: RemoteBackendConfig):
        self.config = config
        self._pool: list[socket.socket] = []
        self._lock = threading.Lock()
        hello = self._request({"op": "hello"})
        try:
            self.vocab_size = int(hello["vocab_size"])
            self.eos_token = int(hello["eos_token"])
            self.capabilities = frozenset(hello["capabilities"])
            self.model_id = str(hello.get("model_id", ""))
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed hello response: {hello!r}") from exc

    # -- pool plumbing --

    def _connect(self) -> socket.socket:
        host, port = self.config.host_port()
        try:
            sock = socket.create_connection((host, port), timeout=self.config.timeout)
        except OSError as exc:
            raise TransportError(f"cannot reach {self.config.endpoint}: {exc}") from exc
        return sock

    def _borrow(self) -> socket.socket:
        with self._lock:
            if self._pool:
                return self._pool.pop()
        return self._connect()

    def _give_back(self, sock: socket.socket) -> None:
        with self._lock:
            if len(self._pool) < self.config.pool_size:
                self._pool.append(sock)
                return
        sock.close()

    def close(self) -> None:
        with self._lock:
            for sock in self._pool:
                sock.close()
            self._pool.clear()

    def _request(self, body: dict) -> dict:
        msg = {"v": PROTOCOL_VERSION, **body}
        if self.config.auth_token is not None:
            msg["auth"] = self.config.auth_token
        last_exc: Exception | None = None
        for _ in range(self.config.retries + 1):
            sock = None
            try:
                sock = self._borrow()
                send_message(sock, msg)
                resp = recv_message(sock)
                if resp is None:
                    raise TransportError("server closed the connection")
                self._give_back(sock)
                return self._check(resp)
            except (TransportError, OSError) as exc:
                if sock is not None:
                    sock.close()
                last_exc = exc if isinstance(exc, TransportError) else TransportError(str(exc))
        raise last_exc  # type: ignore[misc]

    @staticmethod
    def _check(resp: dict) -> dict:
        if not isinstance(resp, dict) or resp.get("v") != PROTOCOL_VERSION:
            raise ProtocolError(f"bad protocol version in response: {resp!r}")
        if resp.get("ok"):
            return resp
        err = resp.get("error") or {}
        code, message = err.get("code", ERR_INTERNAL), err.get("message", "")
        if code == ERR_CONTEXT_TOO_LONG:
            raise ContextTooLongError(message)
        if code == ERR_UNSUPPORTED_CAPABILITY:
            raise UnsupportedOperationError(message)
        raise ProtocolError(f"server error {code}: {message}")

    # -- DistributionProvider --

    def next_distribution(self, context: str, temperature: float = 1.0) -> Dist:
        resp = self._request(
            {"op": "next_dist", "context": context, "temperature": temperature, "encoding": self.config.encoding}
        )
        return self._rows(resp, expected=1)[0]

    def next_distribution_batch(self, contexts: Sequence[str], temperature: float = 1.0) -> list[Dist]:
        if not contexts:
            raise InvalidInputError("batch must contain at least one context")
        resp = self._request(
            {
                "op": "batch_next_dist",
                "contexts": list(contexts),
                "temperature": temperature,
                "encoding": self.config.encoding,
            }
        )
        return self._rows(resp, expected=len(contexts))

    def _rows(self, resp: dict, expected: int) -> list[Dist]:
        rows = resp.get("dists")
        if rows is None or len(rows) != expected:
            raise ProtocolError(f"expected {expected} distribution rows, got {rows if rows is None else len(rows)}")
        dists = _decode_rows(rows, self.config.encoding)
        for d in dists:
            if len(d) != int(resp.get("vocab_size", len(d))) or len(d) != self.vocab_size:
                raise ProtocolError(f"distribution length {len(d)} does not match vocab {self.vocab_size}")
        return dists

    def score_continuation(self, context: str, continuation: str) -> list[float]:
        resp = self._request({"op": "score", "context": context, "continuation": continuation})
        try:
            return [float(x) for x in resp["logprobs"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed score response: {resp!r}") from exc

    def decode(self, tokens: Sequence[int]) -> str:
        resp = self._request({"op": "decode", "tokens": [int(t) for t in tokens]})
        try:
            return str(resp["text"])
        except (KeyError, TypeError) as exc:
            raise ProtocolError(f"malformed decode response: {resp!r}") from exc
