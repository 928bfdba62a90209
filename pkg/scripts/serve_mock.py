#!/usr/bin/env python3
"""Serve a mock backend over the wire protocol, for remote-backend runs.

Example:
    python3 scripts/serve_mock.py --port 8765 &
    privgen privatize --doc fixtures/docs/synth-0000.json \
        --backend remote:127.0.0.1:8765 --tmax 30 --seed 1 --out out.jsonl
"""
import argparse
import threading

from privgen import MockModel
from privgen.wire import ProtocolServer


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8765)
    ap.add_argument("--mode", choices=("uniform", "ngram"), default="ngram")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--auth-token", default=None)
    args = ap.parse_args()

    provider = MockModel(mode=args.mode, seed=args.seed)
    server = ProtocolServer(
        provider, host=args.host, port=args.port, auth_token=args.auth_token, model_id=f"mock-{args.mode}"
    )
    server.start()
    host, port = server.address
    print(f"serving mock ({args.mode}, seed {args.seed}) on {host}:{port}; Ctrl-C to stop")
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
