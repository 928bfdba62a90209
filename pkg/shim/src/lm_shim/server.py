"""The wire-protocol server: length-prefixed JSON over TCP, version 1.

Implements the engine-facing contract: hello, next_dist, batch_next_dist,
score, decode, plus a health op reporting vocab size and model identifier.
Distributions are transmitted as 64-bit floats; when a request does not name
an encoding the server answers with log-probabilities, which preserve tail
precision better than raw probabilities.

Batch requests are answered item by item in order; a failure anywhere fails
the whole batch, matching the engine's step-abort semantics.
"""
from __future__ import annotations

import argparse
import json
import socketserver
import struct
import threading
from dataclasses import dataclass

import numpy as np

from .model import DEFAULT_CHECKPOINT, ContextLengthError, NextTokenModel
from . import vocab

PROTOCOL_VERSION = 1
MAX_MESSAGE_BYTES = 256 * 1024 * 1024
_LEN = struct.Struct(">I")

CAPABILITIES = ["batched", "next_dist", "teacher_force_score"]


@dataclass(frozen=True)
class ShimConfig:
    model_dir: str = str(DEFAULT_CHECKPOINT)
    device: str = "cpu"
    max_context_chars: int = 1900
    host: str = "127.0.0.1"
    port: int = 8123
    auth_token: str | None = None

    def __post_init__(self):
        if self.max_context_chars < 1:
            raise ValueError("max_context_chars must be >= 1")


def _recv_exact(sock, n: int):
    chunks, got = [], 0
    while got < n:
        chunk = sock.recv(min(n - got, 1 << 20))
        if not chunk:
            return None if got == 0 else b""
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def _read_message(sock):
    header = _recv_exact(sock, _LEN.size)
    if not header:
        return None
    (length,) = _LEN.unpack(header)
    if length > MAX_MESSAGE_BYTES:
        return None
    payload = _recv_exact(sock, length)
    if not payload:
        return None
    return json.loads(payload.decode("utf-8"))


def _write_message(sock, obj) -> None:
    payload = json.dumps(obj).encode("utf-8")
    sock.sendall(_LEN.pack(len(payload)) + payload)


def _error(code: str, message: str) -> dict:
    return {"v": PROTOCOL_VERSION, "ok": False, "error": {"code": code, "message": message}}


def _ok(**fields) -> dict:
    return {"v": PROTOCOL_VERSION, "ok": True, **fields}


def _encode_rows(rows, encoding: str):
    if encoding == "logprob":
        return [np.log(row).tolist() for row in rows]
    return [row.tolist() for row in rows]


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        shim: ShimServer = self.server.shim  # type: ignore[attr-defined]
        while True:
            try:
                req = _read_message(self.request)
            except (OSError, json.JSONDecodeError, UnicodeDecodeError):
                return
            if req is None:
                return
            try:
                resp = shim.answer(req)
            except Exception as exc:
                resp = _error("internal", f"{type(exc).__name__}: {exc}")
            try:
                _write_message(self.request, resp)
            except OSError:
                return


class _TCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class ShimServer:
    """Serves one NextTokenModel; all model calls are serialized by a lock."""

    def __init__(self, config: ShimConfig = ShimConfig()):
        self.config = config
        self.model = NextTokenModel(config.model_dir, config.device)
        self._lock = threading.Lock()
        self._tcp = _TCPServer((config.host, config.port), _Handler)
        self._tcp.shim = self
        self._thread: threading.Thread | None = None

    @property
    def address(self):
        return self._tcp.server_address[:2]

    def start(self) -> "ShimServer":
        self._thread = threading.Thread(target=self._tcp.serve_forever, daemon=True)
        self._thread.start()
        return self

    def shutdown(self) -> None:
        self._tcp.shutdown()
        self._tcp.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "ShimServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.shutdown()

    # -- dispatch --

    def answer(self, req: dict) -> dict:
        if not isinstance(req, dict) or req.get("v") != PROTOCOL_VERSION:
            return _error("bad_request", f"missing or unsupported protocol version: {req.get('v')!r}")
        if self.config.auth_token is not None and req.get("auth") != self.config.auth_token:
            return _error("auth", "missing or invalid auth token")
        op = req.get("op")
        encoding = req.get("encoding", "logprob")
        if encoding not in ("prob", "logprob"):
            return _error("bad_request", f"unknown encoding {encoding!r}")
        try:
            if op in ("hello", "health"):
                resp = _ok(vocab_size=self.model.vocab_size, model_id=self.model.model_id)
                if op == "hello":
                    resp.update(eos_token=self.model.eos_token, capabilities=CAPABILITIES)
                return resp
            if op in ("next_dist", "batch_next_dist"):
                contexts = [req["context"]] if op == "next_dist" else list(req["contexts"])
                if not contexts:
                    return _error("bad_request", "empty context batch")
                temperature = float(req.get("temperature", 1.0))
                rows = []
                with self._lock:
                    for ctx in contexts:
                        self._check_length(ctx)
                        rows.append(self.model.next_distribution(ctx, temperature))
                return _ok(vocab_size=self.model.vocab_size, dists=_encode_rows(rows, encoding))
            if op == "score":
                context, continuation = req["context"], req["continuation"]
                self._check_length(context + continuation)
                with self._lock:
                    logprobs = self.model.score_continuation(context, continuation)
                return _ok(logprobs=logprobs)
            if op == "decode":
                pieces = [vocab.decode_one(int(t)) for t in req["tokens"]]
                return _ok(pieces=pieces, text="".join(pieces))
            return _error("unsupported_op", f"unknown op {op!r}")
        except ContextLengthError as exc:
            return _error("context_too_long", str(exc))
        except (KeyError, TypeError, ValueError) as exc:
            return _error("bad_request", f"{type(exc).__name__}: {exc}")

    def _check_length(self, text: str) -> None:
        if len(text) > self.config.max_context_chars:
            raise ContextLengthError(
                f"context of {len(text)} chars exceeds the configured {self.config.max_context_chars}"
            )


def serve(config: ShimConfig = ShimConfig()) -> None:
    """Blocking entry point: serve until interrupted."""
    server = ShimServer(config).start()
    host, port = server.address
    print(f"lm-shim serving {server.model.model_id} on {host}:{port}")
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        server.shutdown()


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model-dir", default=str(DEFAULT_CHECKPOINT))
    ap.add_argument("--device", default="cpu")
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8123)
    ap.add_argument("--max-context-chars", type=int, default=1900)
    ap.add_argument("--auth-token", default=None)
    args = ap.parse_args(argv)
    serve(
        ShimConfig(
            model_dir=args.model_dir,
            device=args.device,
            max_context_chars=args.max_context_chars,
            host=args.host,
            port=args.port,
            auth_token=args.auth_token,
        )
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
