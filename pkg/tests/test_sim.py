import io
import json

import pytest

from recallspan.decode import DecoderConfig
from recallspan.errors import ConfigError
from recallspan.sim import (
    EpisodeError,
    MockPolicy,
    check_faithfulness,
    dump_trace,
    run_episode,
)

CFG = DecoderConfig(r_start_id=254, r_end_id=255, vocab_size=256)
PROMPT = [5, 7, 5, 9]


def test_policy_validation():
    with pytest.raises(ConfigError):
        MockPolicy(kind="nope")
    with pytest.raises(ConfigError):
        MockPolicy(kind="scripted")
    with pytest.raises(ConfigError):
        MockPolicy(span_open_probability=1.5)


def test_scripted_episode_reproduces_span():
    policy = MockPolicy(kind="scripted", script=(254, 5, 7, 255))
    result = run_episode(PROMPT, policy, CFG, max_steps=10)
    (span,) = result.spans
    assert span.tokens == [5, 7]
    assert span.context_start_positions == frozenset({0})
    assert check_faithfulness(result) == 1


def test_scripted_disallowed_token_reports_step():
    policy = MockPolicy(kind="scripted", script=(254, 6))
    with pytest.raises(EpisodeError) as exc:
        run_episode(PROMPT, policy, CFG, max_steps=10)
    assert exc.value.step == 1


def test_replay_determinism():
    policy = MockPolicy(kind="seeded_random", seed=99, span_open_probability=0.4)
    a = run_episode(PROMPT, policy, CFG, max_steps=60)
    b = run_episode(PROMPT, policy, CFG, max_steps=60)
    assert a.trace == b.trace
    assert a.generated == b.generated


def test_seeded_episodes_faithful_and_within_work_bound():
    violations = 0
    for seed in range(50):
        policy = MockPolicy(
            kind="seeded_random", seed=seed,
            span_open_probability=0.3, span_close_probability=0.2,
        )
        result = run_episode(list(range(48)) * 2, policy, CFG, max_steps=120)
        check_faithfulness(result)
        for stats in result.span_stats:
            if not stats.within_work_bound():
                violations += 1
            sizes = stats.candidate_sizes
            assert all(sizes[i + 1] <= sizes[i] for i in range(len(sizes) - 1))
    assert violations == 0


def test_adversarial_episode_rejects_and_terminates():
    policy = MockPolicy(kind="adversarial", seed=3, span_open_probability=0.5)
    result = run_episode(PROMPT, policy, CFG, max_steps=40)
    assert len(result.generated) == 40
    check_faithfulness(result)


def test_truncated_open_span_is_reported():
    policy = MockPolicy(kind="scripted", script=(254, 5))
    result = run_episode(PROMPT, policy, CFG, max_steps=2)
    (span,) = result.spans
    assert span.truncated and span.tokens == [5]
    assert len(result.span_stats) == 1


def test_max_steps_must_be_positive():
    with pytest.raises(ConfigError):
        run_episode(PROMPT, MockPolicy(), CFG, max_steps=0)


def test_trace_dump_is_line_delimited_json():
    policy = MockPolicy(kind="scripted", script=(2, 254, 5, 255))
    result = run_episode(PROMPT, policy, CFG, max_steps=10)
    buf = io.StringIO()
    dump_trace(result.trace, buf)
    lines = buf.getvalue().strip().splitlines()
    assert len(lines) == 4
    first = json.loads(lines[0])
    assert first == {"step": 0, "mode": "outside", "token": 2, "allowed_size": 255}
