#!/usr/bin/env python3
"""Run seeded mock-policy episodes and report faithfulness and work-bound stats."""

import argparse
import statistics
import sys

import numpy as np

from recallspan.decode import DecoderConfig
from recallspan.sim import MockPolicy, check_faithfulness, run_episode


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--episodes", type=int, default=200)
    ap.add_argument("--context-len", type=int, default=4096)
    ap.add_argument("--vocab", type=int, default=256)
    ap.add_argument("--max-steps", type=int, default=64)
    ap.add_argument("--open-prob", type=float, default=0.3)
    ap.add_argument("--close-prob", type=float, default=0.2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = DecoderConfig(
        r_start_id=args.vocab - 2, r_end_id=args.vocab - 1, vocab_size=args.vocab
    )
    rng = np.random.default_rng(args.seed)
    spans = 0
    violations = 0
    bound_breaches = 0
    visit_ratios = []
    for episode_seed in range(args.seed, args.seed + args.episodes):
        prompt = rng.integers(0, args.vocab - 2, size=args.context_len).tolist()
        policy = MockPolicy(
            kind="seeded_random",
            seed=episode_seed,
            span_open_probability=args.open_prob,
            span_close_probability=args.close_prob,
        )
        result = run_episode(prompt, policy, cfg, max_steps=args.max_steps)
        try:
            spans += check_faithfulness(result)
        except AssertionError:
            violations += 1
        for stats in result.span_stats:
            bound = stats.snapshot_len + sum(stats.candidate_sizes[:-1])
            if stats.visits > bound:
                bound_breaches += 1
            if bound:
                visit_ratios.append(stats.visits / bound)

    print(f"episodes:            {args.episodes}")
    print(f"spans checked:       {spans}")
    print(f"faithfulness fails:  {violations}")
    print(f"work-bound breaches: {bound_breaches}")
    if visit_ratios:
        print(f"median visits/bound: {statistics.median(visit_ratios):.4f}")
        print(f"max visits/bound:    {max(visit_ratios):.4f}")
    return 1 if (violations or bound_breaches) else 0


if __name__ == "__main__":
    sys.exit(main())
