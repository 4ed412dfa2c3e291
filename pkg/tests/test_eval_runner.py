import json

import pytest

from recallspan.errors import ConfigError
from recallspan.eval_runner import (
    EndpointConfig,
    build_completion_record,
    extract_text_spans,
    locate_spans,
    parse_answer,
    read_results_jsonl,
    recall_usage_rate,
    result_from_dict,
    result_to_dict,
    run_batch,
    score_completion,
    summarize,
    write_results_jsonl,
)
from recallspan.rewards import CharInterval, load_reward_configs
from recallspan.stub_server import StubChatServer, stub_uses_recall
from recallspan.taskgen import TaskSpec, generate


class TestParseAnswer:
    def test_basic(self):
        assert parse_answer("thinking...\nAnswer: AEgkZzAgQw") == "AEgkZzAgQw"

    def test_absent(self):
        assert parse_answer("no answer line here") is None

    def test_last_one_wins(self):
        assert parse_answer("Answer: first\nmore\nAnswer: second") == "second"

    def test_whitespace_trimmed(self):
        assert parse_answer("Answer:   spaced out  ") == "spaced out"


class TestExtractTextSpans:
    CASES = [
        ("a <S>xy</S> b", ["xy"], 1, 1, None),
        ("no markers", [], 0, 0, None),
        ("<S>a<S>b</S>", ["b"], 2, 1, None),           # inner start wins; outer abandoned
        ("</S>x", [], 0, 1, None),                      # stray end
        ("<S>tail with no close", [], 1, 0, "tail with no close"),
        ("<S>one</S> mid <S>two</S>", ["one", "two"], 2, 2, None),
        ("<S></S>", [""], 1, 1, None),                  # empty span
        ("</S><S>z</S>", ["z"], 1, 2, None),            # leading stray end
        ("<S>a</S></S>", ["a"], 1, 2, None),            # trailing stray end
        ("<S>a<S>b<S>c</S>", ["c"], 3, 1, None),        # repeated reopening
    ]

    @pytest.mark.parametrize("text,spans,n_start,n_end,truncated", CASES)
    def test_hand_traced_scan(self, text, spans, n_start, n_end, truncated):
        got = extract_text_spans(text, "<S>", "</S>")
        assert got.spans == spans
        assert got.n_start == n_start
        assert got.n_end == n_end
        assert got.truncated == truncated

    def test_bad_markers(self):
        with pytest.raises(ConfigError):
            extract_text_spans("x", "<S>", "<S>")
        with pytest.raises(ConfigError):
            extract_text_spans("x", "", "</S>")

    def test_default_markers(self):
        got = extract_text_spans("a <|start_recall|>evidence<|end_recall|> b")
        assert got.spans == ["evidence"]
        assert got.used_recall


class TestLocateSpans:
    def test_all_occurrences(self):
        doc = "abc needle xyz needle end"
        (span,) = locate_spans(doc, ["needle"])
        assert span.occurrences == [CharInterval(4, 10), CharInterval(15, 21)]

    def test_missing_text_has_no_occurrences(self):
        (span,) = locate_spans("document", ["ghost"])
        assert span.occurrences == []

    def test_empty_text_has_no_occurrences(self):
        (span,) = locate_spans("document", [""])
        assert span.occurrences == []

    def test_record_validates_against_document(self):
        doc = "alpha beta gamma"
        record = build_completion_record(
            "<think><|start_recall|>beta<|end_recall|></think>\nAnswer: x", doc
        )
        record.validate_against(doc)
        assert record.span_count == 1


def kv_task(seed=0, target=700):
    return generate(TaskSpec(category="kv_retrieval", target_length=target, seed=seed))


def perfect_completion(task):
    record = task.metadata["gold_texts"][0]
    return (
        f"<think>\nLooking in the text, I see <|start_recall|>{record}<|end_recall|> "
        f"so that settles it.\n</think>\nAnswer: {task.gold_answers[0]}"
    )


class TestScoreCompletion:
    def test_perfect_rollout_scores_one(self):
        task = kv_task(seed=21)
        cfg = load_reward_configs()["kv_retrieval"]
        report = score_completion(perfect_completion(task), task, cfg)
        assert report["reward"] == pytest.approx(1.0, abs=1e-12)
        assert report["r_format"] == 1.0
        assert report["r_ans"] == 1.0
        assert report["r_ret"] == pytest.approx(1.0, abs=1e-12)

    def test_rescoring_is_idempotent(self):
        task = kv_task(seed=22)
        cfg = load_reward_configs()["kv_retrieval"]
        text = perfect_completion(task)
        assert score_completion(text, task, cfg) == score_completion(text, task, cfg)

    def test_missing_answer_fails_format_and_answer(self):
        task = kv_task(seed=23)
        cfg = load_reward_configs()["kv_retrieval"]
        report = score_completion("<think>hmm</think>\nno final line", task, cfg)
        assert report["r_format"] == 0.0
        assert report["r_ans"] == 0.0

    def test_unbalanced_markers_hit_correctness_penalty(self):
        task = kv_task(seed=24)
        cfg = load_reward_configs()["kv_retrieval"]
        text = "<think><|start_recall|>dangling\n</think>\nAnswer: nope"
        report = score_completion(text, task, cfg)
        assert report["r_format"] == 0.0
        assert report["p_correct"] == 0.0  # no closed span, one unpaired delimiter


class TestRecallUsageRate:
    def test_fraction(self):
        results = []
        for used in (True, True, True, False):
            results.append(
                result_from_dict(
                    {
                        "task_id": "t",
                        "category": "kv_retrieval",
                        "raw_completion": "",
                        "parsed_answer": None,
                        "answer_score": 0.0,
                        "used_recall": used,
                        "span_texts": [],
                        "latency_s": 0.0,
                    }
                )
            )
        assert recall_usage_rate(results) == 0.75

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            recall_usage_rate([])


@pytest.fixture(scope="module")
def tasks():
    return [generate(TaskSpec(category="kv_retrieval", target_length=600, seed=s)) for s in range(6)]


class TestRunBatch:
    def test_empty_batch(self):
        cfg = EndpointConfig(base_url="http://127.0.0.1:1")
        assert run_batch([], cfg) == []

    def test_stub_round_trip(self, tasks):
        with StubChatServer() as server:
            cfg = EndpointConfig(base_url=server.base_url, max_concurrent=2)
            results = run_batch(tasks, cfg)
        assert [r.task_id for r in results] == [t.id for t in tasks]
        for task, result in zip(tasks, results):
            assert result.error is None
            assert result.parsed_answer.startswith("stub-")
            assert result.used_recall == stub_uses_recall(task.prompt)
            assert result.usage["completion_tokens"] > 0

    def test_retry_then_success(self, tasks):
        with StubChatServer(fail_first=1) as server:
            cfg = EndpointConfig(base_url=server.base_url, max_concurrent=1, max_retries=2)
            results = run_batch(tasks[:1], cfg)
        assert results[0].error is None
        assert results[0].retries == 1

    def test_bounded_concurrency(self, tasks):
        with StubChatServer(latency_s=0.05) as server:
            cfg = EndpointConfig(base_url=server.base_url, max_concurrent=3)
            run_batch(tasks, cfg)
            assert 1 <= server.max_in_flight <= 3

    def test_failure_is_isolated(self, tasks):
        # first request exhausts its retries; the rest of the batch survives
        with StubChatServer(fail_first=3) as server:
            cfg = EndpointConfig(base_url=server.base_url, max_concurrent=1, max_retries=0)
            results = run_batch(tasks[:4], cfg)
        errored = [r for r in results if r.error]
        assert len(errored) == 3
        assert results[-1].error is None

    def test_missing_credential_env(self):
        cfg = EndpointConfig(base_url="http://127.0.0.1:1", credential_env="RECALLSPAN_NO_SUCH_VAR")
        with pytest.raises(ConfigError, match="RECALLSPAN_NO_SUCH_VAR"):
            run_batch([kv_task()], cfg)

    def test_summary_counts(self, tasks):
        with StubChatServer() as server:
            cfg = EndpointConfig(base_url=server.base_url)
            results = run_batch(tasks, cfg)
        report = summarize(results)
        hand_count = sum(1 for t in tasks if stub_uses_recall(t.prompt))
        assert report["recall_usage_rate"] == pytest.approx(hand_count / len(tasks))
        assert report["per_category"]["kv_retrieval"]["count"] == len(tasks)


def test_results_jsonl_round_trip(tmp_path, tasks):
    with StubChatServer() as server:
        cfg = EndpointConfig(base_url=server.base_url)
        results = run_batch(tasks[:3], cfg)
    path = tmp_path / "results.jsonl"
    with open(path, "w") as fh:
        write_results_jsonl(results, fh)
    loaded = read_results_jsonl(str(path))
    assert [result_to_dict(r) for r in loaded] == [result_to_dict(r) for r in results]
    for line in path.read_text().splitlines():
        json.loads(line)
