"""Command-line surface: task generation, scoring, evaluation, mask service.

    recallspan gen --category kv_retrieval --length 8000 --seed 1 --count 10
    recallspan score --results results.jsonl --tasks tasks.jsonl
    recallspan eval --tasks tasks.jsonl --stub --out results.jsonl
    recallspan mask-serve --port 7811

All flags can be preloaded from a JSON config file via --config.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

import requests

from .errors import DegenerateCompletionError, RecallSpanError
from .eval_runner import (
    DEFAULT_SYSTEM_PROMPT,
    EndpointConfig,
    read_results_jsonl,
    run_batch,
    score_completion,
    summarize,
    write_results_jsonl,
)
from .mask_service import make_http_server, serve_stdio
from .rewards import load_reward_configs
from .stub_server import StubChatServer
from .taskgen import (
    CATEGORIES,
    TaskSpec,
    generate,
    read_tasks_jsonl,
    write_tasks_jsonl,
)


def _open_out(path: Optional[str]):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8"), True


CATEGORY_ALIASES = {
    "kv": "kv_retrieval",
    "reasoning": "reasoning_retrieval",
    "niah": "multi_niah",
    "majority": "majority_vote",
    "topn": "top_n_vote",
}


def cmd_gen(args: argparse.Namespace) -> int:
    if args.spec_file:
        with open(args.spec_file, encoding="utf-8") as fh:
            raw_specs = json.load(fh)
        specs = [TaskSpec(**obj) for obj in raw_specs]
    else:
        if not args.category:
            print("gen: --category (or --spec-file) is required", file=sys.stderr)
            return 2
        categories = [
            CATEGORY_ALIASES.get(c.strip(), c.strip())
            for c in args.category.split(",")
            if c.strip()
        ]
        extras = json.loads(args.extras) if args.extras else {}
        specs = []
        for i in range(args.count):
            specs.append(
                TaskSpec(
                    category=categories[i % len(categories)],
                    target_length=args.length,
                    store_format=args.format,
                    query_position=args.position,
                    seed=args.seed + i,
                    extras=extras,
                )
            )
    tasks = [generate(spec) for spec in specs]
    out, owned = _open_out(args.out)
    try:
        write_tasks_jsonl(tasks, out)
    finally:
        if owned:
            out.close()
    print(f"generated {len(tasks)} task(s)", file=sys.stderr)
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    results = read_results_jsonl(args.results)
    if not results:
        print("score: results file is empty", file=sys.stderr)
        return 2
    tasks = {t.id: t for t in read_tasks_jsonl(args.tasks)}
    configs = load_reward_configs(args.reward_config)
    rows = []
    skipped = []
    for result in results:
        task = tasks.get(result.task_id)
        if task is None:
            skipped.append(result.task_id)
            continue
        cfg = configs.get(task.category)
        if cfg is None:
            skipped.append(result.task_id)
            print(f"score: no reward config for category {task.category!r}", file=sys.stderr)
            continue
        usage_tokens = result.usage.get("completion_tokens") or None
        try:
            row = score_completion(
                result.raw_completion, task, cfg, token_count=usage_tokens
            )
        except DegenerateCompletionError:
            row = {
                "id": task.id,
                "category": task.category,
                "reward": 0.0,
                "r_format": 0.0,
                "r_ans": 0.0,
                "r_ret": 0.0,
                "overlap": 0.0,
                "p_density": 0.0,
                "p_correct": 0.0,
                "n_spans": 0,
                "n_mismatch": 0,
                "answer": None,
                "error": "empty completion",
            }
        rows.append(row)
    for task_id in skipped:
        print(f"score: skipping unmatched result id {task_id!r}", file=sys.stderr)
    if not rows:
        print("score: no result ids matched the task file", file=sys.stderr)
        return 2
    summary = {
        "summary": {
            "count": len(rows),
            "skipped": len(skipped),
            **{
                key: sum(r[key] for r in rows) / len(rows)
                for key in ("reward", "r_format", "r_ans", "r_ret", "p_density", "p_correct")
            },
        }
    }
    out, owned = _open_out(args.out)
    try:
        for row in rows:
            out.write(json.dumps(row, ensure_ascii=False) + "\n")
        out.write(json.dumps(summary, ensure_ascii=False) + "\n")
    finally:
        if owned:
            out.close()
    return 0


def _probe_endpoint(base_url: str, timeout: float = 5.0) -> bool:
    try:
        requests.get(base_url, timeout=timeout)
        return True
    except requests.Timeout:
        return True  # reachable but slow; let the real requests decide
    except requests.ConnectionError:
        return False


def cmd_eval(args: argparse.Namespace) -> int:
    tasks = read_tasks_jsonl(args.tasks)
    stub = None
    try:
        if args.stub:
            stub = StubChatServer().start()
            base_url = stub.base_url
        else:
            if not args.base_url:
                print("eval: --base-url or --stub is required", file=sys.stderr)
                return 2
            base_url = args.base_url
            if not _probe_endpoint(base_url):
                print(f"eval: endpoint {base_url} is unreachable", file=sys.stderr)
                return 2
        endpoint = EndpointConfig(
            base_url=base_url,
            model_name=args.model,
            credential_env=args.credential_env,
            temperature=args.temperature,
            top_p=args.top_p,
            max_new_tokens=args.max_new_tokens,
            timeout=args.timeout,
            max_concurrent=args.max_concurrent,
            max_retries=args.retries,
        )
        system_prompt = DEFAULT_SYSTEM_PROMPT
        if args.system_prompt_file:
            with open(args.system_prompt_file, encoding="utf-8") as fh:
                system_prompt = fh.read()
        if args.inject_text:
            tasks = [_inject(task, args.inject_text, args.inject_prefix_at) for task in tasks]
        results = run_batch(tasks, endpoint, system_prompt)
    except RecallSpanError as exc:
        print(f"eval: {exc}", file=sys.stderr)
        return 2
    finally:
        if stub is not None:
            stub.stop()
    out, owned = _open_out(args.out)
    try:
        write_results_jsonl(results, out)
    finally:
        if owned:
            out.close()
    summary = summarize(results) if results else {"count": 0}
    summary_text = json.dumps(summary, indent=2, ensure_ascii=False)
    if args.summary:
        with open(args.summary, "w", encoding="utf-8") as fh:
            fh.write(summary_text + "\n")
    print(summary_text, file=sys.stderr)
    return 0


def _inject(task, text: str, at: int):
    # manual injected-prefix hook: splice text into the prompt for the
    # request only; gold intervals still describe the original prompt
    prompt = task.prompt
    pos = len(prompt) if at < 0 else min(at, len(prompt))
    patched = prompt[:pos] + text + prompt[pos:]
    clone = type(task)(
        id=task.id,
        category=task.category,
        prompt=patched,
        gold_answers=task.gold_answers,
        gold_intervals=task.gold_intervals,
        metadata={**task.metadata, "injected_at": pos},
    )
    return clone


def cmd_mask_serve(args: argparse.Namespace) -> int:
    if args.stdio:
        serve_stdio()
        return 0
    server = make_http_server(args.host, args.port)
    host, port = server.server_address[:2]
    print(f"mask service listening on http://{host}:{port}", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        server.server_close()
    return 0


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="recallspan", description=__doc__)
    parser.add_argument("--config", help="JSON file of default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate synthetic tasks as JSONL")
    gen.add_argument("--category", help=f"one of {', '.join(CATEGORIES)}; comma-separate to mix")
    gen.add_argument("--length", type=int, default=4096, help="target prompt tokens")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--count", type=int, default=1, help="instances (seeds seed..seed+count-1)")
    gen.add_argument("--format", default="lines", choices=["lines", "csv", "json"])
    gen.add_argument("--position", default="after", choices=["before", "after", "both"])
    gen.add_argument("--extras", help="JSON dict of category-specific knobs")
    gen.add_argument("--spec-file", help="JSON list of task spec objects (overrides flags)")
    gen.add_argument("--out", help="output path (default stdout)")
    gen.set_defaults(func=cmd_gen)

    score = sub.add_parser("score", help="composite rewards for stored completions")
    score.add_argument("--results", required=True, help="results JSONL from eval")
    score.add_argument("--tasks", required=True, help="task JSONL from gen")
    score.add_argument("--reward-config", help="INI file overriding per-category settings")
    score.add_argument("--out", help="output path (default stdout)")
    score.set_defaults(func=cmd_score)

    ev = sub.add_parser("eval", help="run tasks against a chat-completions endpoint")
    ev.add_argument("--tasks", required=True)
    ev.add_argument("--base-url", help="endpoint base URL, e.g. http://localhost:8000")
    ev.add_argument("--stub", action="store_true", help="use the built-in offline stub server")
    ev.add_argument("--model", default="local-model")
    ev.add_argument("--credential-env", help="environment variable holding the bearer token")
    ev.add_argument("--temperature", type=float, default=0.6)
    ev.add_argument("--top-p", type=float, default=0.95)
    ev.add_argument("--max-new-tokens", type=int, default=8192)
    ev.add_argument("--timeout", type=float, default=120.0)
    ev.add_argument("--max-concurrent", type=int, default=4)
    ev.add_argument("--retries", type=int, default=2)
    ev.add_argument("--inject-text", help="manual injected-prefix hook: text spliced into prompts")
    ev.add_argument("--inject-prefix-at", type=int, default=-1,
                    help="character offset for --inject-text (-1 appends at the end)")
    ev.add_argument("--system-prompt-file", help="file overriding the default system prompt")
    ev.add_argument("--out", help="results JSONL path (default stdout)")
    ev.add_argument("--summary", help="also write the summary JSON here")
    ev.set_defaults(func=cmd_eval)

    serve = sub.add_parser("mask-serve", help="serve decode sessions over HTTP or stdio")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=7811)
    serve.add_argument("--stdio", action="store_true", help="newline-JSON over stdin/stdout")
    serve.set_defaults(func=cmd_mask_serve)
    return parser, {"gen": gen, "score": score, "eval": ev, "mask-serve": serve}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(argv) if argv is not None else sys.argv[1:]
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    parser, subparsers = build_parser()
    if known.config:
        with open(known.config, encoding="utf-8") as fh:
            defaults = json.load(fh)
        for sp in subparsers.values():
            sp.set_defaults(**defaults)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RecallSpanError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
