#!/usr/bin/env python3
"""End-to-end demo: generate a mixed corpus, evaluate against the stub, score it."""

import argparse
import json
import sys
import tempfile
from pathlib import Path

from recallspan.cli import main as cli


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=20)
    ap.add_argument("--length", type=int, default=900)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workdir", help="keep artifacts here instead of a temp dir")
    args = ap.parse_args()

    workdir = Path(args.workdir) if args.workdir else Path(tempfile.mkdtemp(prefix="recallspan-"))
    workdir.mkdir(parents=True, exist_ok=True)
    tasks = workdir / "tasks.jsonl"
    results = workdir / "results.jsonl"
    summary = workdir / "summary.json"
    scores = workdir / "scores.jsonl"

    steps = [
        ["gen", "--category",
         "kv_retrieval,reasoning_retrieval,multi_niah,majority_vote,top_n_vote",
         "--length", str(args.length), "--seed", str(args.seed),
         "--count", str(args.count), "--out", str(tasks)],
        ["eval", "--tasks", str(tasks), "--stub",
         "--out", str(results), "--summary", str(summary)],
        ["score", "--results", str(results), "--tasks", str(tasks), "--out", str(scores)],
    ]
    for argv in steps:
        print(f"$ recallspan {' '.join(argv)}")
        code = cli(argv)
        if code != 0:
            return code

    report = json.loads(summary.read_text())
    score_rows = [json.loads(line) for line in scores.read_text().splitlines()]
    print(f"\nartifacts in {workdir}")
    print(f"recall usage rate: {report['recall_usage_rate']:.2f}")
    print(f"mean composite reward: {score_rows[-1]['summary']['reward']:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
