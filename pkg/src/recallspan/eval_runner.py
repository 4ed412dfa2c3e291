"""Batch evaluation against an OpenAI-compatible chat-completions endpoint.

Sends generated tasks, parses answers and recall spans out of the returned
text, scores answers with the per-category metric, and reports recall usage.
Scoring is pure given the stored completions, so re-scoring a results file
reproduces identical numbers.
"""

from __future__ import annotations

import json
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Iterable, Optional, Sequence

import requests

from .answer_metrics import score_answer
from .errors import ConfigError
from .rewards import (
    CategoryRewardConfig,
    CharInterval,
    CompletionRecord,
    FormatRules,
    LocatedSpan,
    composite_reward,
    format_reward,
    load_reward_configs,
    retrieval_reward_components,
)
from .taskgen import TaskInstance, TokenCounter, default_token_counter

DEFAULT_SYSTEM_PROMPT = (
    # stand-in reasoning-oriented system prompt; override per deployment
    "You are a careful assistant. Think step by step inside <think>...</think>, "
    "quote context evidence verbatim inside <|start_recall|>...<|end_recall|> while "
    "thinking, then give your final answer on the last line as 'Answer: ...'."
)

ANSWER_PATTERN = r"^\s*Answer:[ \t]*(.*\S)?[ \t]*$"


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model_name: str = "local-model"
    credential_env: Optional[str] = None
    temperature: float = 0.6
    top_p: float = 0.95
    max_new_tokens: int = 8192
    timeout: float = 120.0
    max_concurrent: int = 4
    max_retries: int = 2
    retry_backoff: float = 0.2

    def bearer_token(self) -> Optional[str]:
        if self.credential_env is None:
            return None
        token = os.environ.get(self.credential_env)
        if not token:
            raise ConfigError(
                f"credential environment variable {self.credential_env!r} is not set; "
                "export it or drop the flag for unauthenticated endpoints"
            )
        return token


@dataclass
class SpanExtraction:
    spans: list[str]
    truncated: Optional[str]
    n_start: int
    n_end: int

    @property
    def used_recall(self) -> bool:
        return self.n_start > 0 or self.n_end > 0


@dataclass
class EvalResult:
    task_id: str
    category: str
    raw_completion: str
    parsed_answer: Optional[str]
    answer_score: float
    used_recall: bool
    span_texts: list[str]
    latency_s: float
    usage: dict = field(default_factory=dict)
    retries: int = 0
    error: Optional[str] = None


def parse_answer(completion_text: str, pattern: str = ANSWER_PATTERN) -> Optional[str]:
    """Trailing text of the last line matching the answer pattern."""
    matches = re.findall(pattern, completion_text, re.MULTILINE)
    if not matches:
        return None
    last = matches[-1]
    return last.strip() if last else ""


def extract_text_spans(
    completion_text: str,
    start_marker: str = "<|start_recall|>",
    end_marker: str = "<|end_recall|>",
) -> SpanExtraction:
    """Left-to-right span extraction over rendered delimiter strings.

    Each end marker closes the most recent unmatched start marker, so a
    nested start abandons the outer one (its text is dropped and the
    imbalance shows up in the delimiter counts). A start marker with no
    subsequent end marker yields a truncated tail span.
    """
    if not start_marker or not end_marker or start_marker == end_marker:
        raise ConfigError("markers must be non-empty and distinct")
    events = []
    for marker, kind in ((start_marker, 0), (end_marker, 1)):
        pos = completion_text.find(marker)
        while pos != -1:
            events.append((pos, kind, len(marker)))
            pos = completion_text.find(marker, pos + len(marker))
    events.sort()
    spans: list[str] = []
    n_start = n_end = 0
    open_at: Optional[int] = None
    for pos, kind, width in events:
        if kind == 0:
            n_start += 1
            open_at = pos + width
        else:
            n_end += 1
            if open_at is not None:
                spans.append(completion_text[open_at:pos])
                open_at = None
    truncated = completion_text[open_at:] if open_at is not None else None
    return SpanExtraction(spans=spans, truncated=truncated, n_start=n_start, n_end=n_end)


def locate_spans(document: str, span_texts: Sequence[str]) -> list[LocatedSpan]:
    """Resolve each span text to every occurrence interval in the document."""
    located = []
    for text in span_texts:
        occurrences = []
        if text:
            pos = document.find(text)
            while pos != -1:
                occurrences.append(CharInterval(pos, pos + len(text)))
                pos = document.find(text, pos + 1)
        located.append(LocatedSpan(text=text, occurrences=occurrences))
    return located


def build_completion_record(
    completion_text: str,
    document: str,
    rules: FormatRules = FormatRules(),
    token_count: Optional[int] = None,
    counter: TokenCounter = default_token_counter,
) -> CompletionRecord:
    extraction = extract_text_spans(completion_text, rules.start_marker, rules.end_marker)
    return CompletionRecord(
        spans=locate_spans(document, extraction.spans),
        generated_token_count=token_count if token_count else counter(completion_text),
        start_delims=extraction.n_start,
        end_delims=extraction.n_end,
        answer_text=parse_answer(completion_text),
    )


def score_completion(
    completion_text: str,
    task: TaskInstance,
    category_cfg: CategoryRewardConfig,
    rules: FormatRules = FormatRules(),
    token_count: Optional[int] = None,
    counter: TokenCounter = default_token_counter,
) -> dict:
    """Full composite reward breakdown for one stored completion."""
    record = build_completion_record(
        completion_text, task.prompt, rules, token_count=token_count, counter=counter
    )
    r_format = float(format_reward(completion_text, rules))
    answer = record.answer_text if record.answer_text is not None else ""
    r_ans = score_answer(category_cfg.answer_metric, answer, task.gold_answers)
    parts = retrieval_reward_components(record, task.gold_intervals, category_cfg.retrieval)
    r_ret = parts.total
    total = composite_reward(r_format, r_ans, r_ret, category_cfg.composite)
    return {
        "id": task.id,
        "category": task.category,
        "reward": total,
        "r_format": r_format,
        "r_ans": r_ans,
        "r_ret": r_ret,
        "overlap": parts.overlap,
        "p_density": parts.density,
        "p_correct": parts.correctness,
        "n_spans": record.span_count,
        "n_mismatch": record.mismatch_count,
        "answer": record.answer_text,
    }


def _post_chat(
    endpoint: EndpointConfig, payload: dict, headers: dict
) -> tuple[dict, int]:
    """POST with bounded retries on connection failures and 5xx responses."""
    url = endpoint.base_url.rstrip("/") + "/v1/chat/completions"
    retries = 0
    while True:
        try:
            resp = requests.post(url, json=payload, headers=headers, timeout=endpoint.timeout)
            if resp.status_code >= 500 and retries < endpoint.max_retries:
                retries += 1
                time.sleep(endpoint.retry_backoff * retries)
                continue
            resp.raise_for_status()
            return resp.json(), retries
        except (requests.ConnectionError, requests.Timeout):
            if retries >= endpoint.max_retries:
                raise
            retries += 1
            time.sleep(endpoint.retry_backoff * retries)


def _evaluate_one(
    task: TaskInstance,
    endpoint: EndpointConfig,
    system_prompt: str,
    headers: dict,
    configs: dict[str, CategoryRewardConfig],
    rules: FormatRules,
) -> EvalResult:
    payload = {
        "model": endpoint.model_name,
        "messages": [
            {"role": "system", "content": system_prompt},
            {"role": "user", "content": task.prompt},
        ],
        "temperature": endpoint.temperature,
        "top_p": endpoint.top_p,
        "max_tokens": endpoint.max_new_tokens,
    }
    started = time.perf_counter()
    try:
        body, retries = _post_chat(endpoint, payload, headers)
        completion = body["choices"][0]["message"]["content"]
        usage = body.get("usage", {}) or {}
    except Exception as exc:  # per-task failure; never batch-fatal
        return EvalResult(
            task_id=task.id,
            category=task.category,
            raw_completion="",
            parsed_answer=None,
            answer_score=0.0,
            used_recall=False,
            span_texts=[],
            latency_s=time.perf_counter() - started,
            error=f"{type(exc).__name__}: {exc}",
        )
    latency = time.perf_counter() - started
    extraction = extract_text_spans(completion, rules.start_marker, rules.end_marker)
    answer = parse_answer(completion)
    try:
        metric = configs[task.category].answer_metric if task.category in configs else "sub_em"
        answer_score = score_answer(metric, answer or "", task.gold_answers)
        error = None
    except Exception as exc:
        answer_score, error = 0.0, f"scoring failed: {exc}"
    return EvalResult(
        task_id=task.id,
        category=task.category,
        raw_completion=completion,
        parsed_answer=answer,
        answer_score=answer_score,
        used_recall=extraction.used_recall,
        span_texts=list(extraction.spans),
        latency_s=latency,
        usage=usage,
        retries=retries,
        error=error,
    )


def run_batch(
    tasks: Sequence[TaskInstance],
    endpoint: EndpointConfig,
    system_prompt: str = DEFAULT_SYSTEM_PROMPT,
    configs: Optional[dict[str, CategoryRewardConfig]] = None,
    rules: FormatRules = FormatRules(),
) -> list[EvalResult]:
    """Evaluate every task, at most ``max_concurrent`` requests in flight.

    Results come back in task order; per-task failures are recorded in the
    result rather than aborting the batch.
    """
    if not tasks:
        return []
    token = endpoint.bearer_token()
    headers = {"Content-Type": "application/json"}
    if token:
        headers["Authorization"] = f"Bearer {token}"
    if configs is None:
        configs = load_reward_configs()
    with ThreadPoolExecutor(max_workers=endpoint.max_concurrent) as pool:
        futures = [
            pool.submit(_evaluate_one, task, endpoint, system_prompt, headers, configs, rules)
            for task in tasks
        ]
        return [f.result() for f in futures]


def recall_usage_rate(results: Sequence[EvalResult]) -> float:
    if not results:
        raise ConfigError("cannot compute recall usage over zero results")
    return sum(1 for r in results if r.used_recall) / len(results)


def summarize(results: Sequence[EvalResult]) -> dict:
    by_category: dict[str, list[EvalResult]] = {}
    for r in results:
        by_category.setdefault(r.category, []).append(r)
    return {
        "count": len(results),
        "mean_answer_score": sum(r.answer_score for r in results) / len(results),
        "recall_usage_rate": recall_usage_rate(results),
        "errors": sum(1 for r in results if r.error),
        "per_category": {
            cat: {
                "count": len(rs),
                "mean_answer_score": sum(r.answer_score for r in rs) / len(rs),
                "recall_usage_rate": recall_usage_rate(rs),
            }
            for cat, rs in sorted(by_category.items())
        },
    }


def result_to_dict(result: EvalResult) -> dict:
    return {
        "task_id": result.task_id,
        "category": result.category,
        "raw_completion": result.raw_completion,
        "parsed_answer": result.parsed_answer,
        "answer_score": result.answer_score,
        "used_recall": result.used_recall,
        "span_texts": result.span_texts,
        "latency_s": result.latency_s,
        "usage": result.usage,
        "retries": result.retries,
        "error": result.error,
    }


def result_from_dict(obj: dict) -> EvalResult:
    return EvalResult(
        task_id=obj["task_id"],
        category=obj.get("category", ""),
        raw_completion=obj.get("raw_completion", ""),
        parsed_answer=obj.get("parsed_answer"),
        answer_score=float(obj.get("answer_score", 0.0)),
        used_recall=bool(obj.get("used_recall", False)),
        span_texts=list(obj.get("span_texts", [])),
        latency_s=float(obj.get("latency_s", 0.0)),
        usage=dict(obj.get("usage", {})),
        retries=int(obj.get("retries", 0)),
        error=obj.get("error"),
    )


def write_results_jsonl(results: Iterable[EvalResult], out: IO[str]) -> None:
    for result in results:
        out.write(json.dumps(result_to_dict(result), ensure_ascii=False) + "\n")


def read_results_jsonl(path: str) -> list[EvalResult]:
    results = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                results.append(result_from_dict(json.loads(line)))
    return results
