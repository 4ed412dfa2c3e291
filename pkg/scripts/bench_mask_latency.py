#!/usr/bin/env python3
"""Benchmark mask-service round-trip latency over a large synthetic context."""

import argparse
import json
import statistics
import sys
import threading
import time

import numpy as np
import requests

from recallspan.mask_service import make_http_server


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--context-len", type=int, default=128_000)
    ap.add_argument("--vocab", type=int, default=256)
    ap.add_argument("--requests", type=int, default=100)
    ap.add_argument("--seed", type=int, default=5)
    args = ap.parse_args()

    server = make_http_server("127.0.0.1", 0)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    host, port = server.server_address[:2]
    base = f"http://{host}:{port}"
    http = requests.Session()

    def call(obj):
        resp = http.post(base, data=json.dumps(obj).encode(), timeout=60)
        resp.raise_for_status()
        return json.loads(resp.text.strip())

    tokens = np.random.default_rng(args.seed).integers(
        0, args.vocab - 2, size=args.context_len
    ).tolist()
    config = {
        "r_start_id": args.vocab - 2,
        "r_end_id": args.vocab - 1,
        "vocab_size": args.vocab,
    }
    started = time.perf_counter()
    call({"op": "create", "session": "bench", "context": tokens, "config": config})
    print(f"create ({args.context_len} tokens): {time.perf_counter() - started:.3f}s")
    call({"op": "observe", "session": "bench", "token": config["r_start_id"]})

    latencies = []
    for _ in range(args.requests):
        t0 = time.perf_counter()
        mask = call({"op": "mask", "session": "bench"})
        latencies.append((time.perf_counter() - t0) * 1000)
        assert mask["ok"]
    latencies.sort()
    print(f"mask requests: {args.requests}")
    print(f"  median: {statistics.median(latencies):.3f} ms")
    print(f"  p90:    {latencies[int(0.9 * len(latencies))]:.3f} ms")
    print(f"  max:    {latencies[-1]:.3f} ms")
    server.shutdown()
    server.server_close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
