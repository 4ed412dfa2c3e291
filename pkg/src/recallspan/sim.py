"""Mock-policy episodes over the decode state machine.

Lets the faithfulness guarantee, mask soundness, and the matcher's work
bound be exercised end to end with no model in the loop. Policies pick only
among masked-allowed tokens; the adversarial policy additionally pokes one
disallowed token per step and demands rejection.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import IO, Optional, Sequence

from .context_index import TokenId
from .decode import (
    DecoderConfig,
    GenerationState,
    Mode,
    RecallSpan,
    allowed_token_ids,
    extract_spans,
    new_state,
    observe_token,
)
from .errors import ConfigError, InvalidContinuationError, RecallSpanError

POLICY_KINDS = ("seeded_random", "scripted", "adversarial")


class EpisodeError(RecallSpanError):
    def __init__(self, message: str, step: int) -> None:
        super().__init__(f"{message} (step {step})")
        self.step = step


@dataclass(frozen=True)
class MockPolicy:
    kind: str = "seeded_random"
    seed: int = 0
    script: Optional[tuple[TokenId, ...]] = None
    span_open_probability: float = 0.15
    span_close_probability: float = 0.25

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ConfigError(f"unknown policy kind {self.kind!r}")
        if self.kind == "scripted" and self.script is None:
            raise ConfigError("scripted policy requires a script")
        for p in (self.span_open_probability, self.span_close_probability):
            if not 0.0 <= p <= 1.0:
                raise ConfigError("probabilities must lie in [0, 1]")


@dataclass(frozen=True)
class StepRecord:
    step: int
    mode: str
    token: TokenId
    allowed_size: int


@dataclass
class SpanStats:
    """Per-span matcher instrumentation for the work-bound check."""

    snapshot_len: int
    visits: int
    candidate_sizes: list[int]

    def within_work_bound(self) -> bool:
        return self.visits <= self.snapshot_len + sum(self.candidate_sizes[:-1])


@dataclass
class EpisodeResult:
    generated: list[TokenId]
    spans: list[RecallSpan]
    trace: list[StepRecord]
    span_stats: list[SpanStats]
    state: GenerationState


def _allowed_size(state: GenerationState, kind: str, tokens: set[int]) -> int:
    if kind == "deny":
        return state.config.vocab_size - len(tokens)
    return len(tokens)


def _pick_random(state: GenerationState, rng: random.Random, policy: MockPolicy) -> TokenId:
    cfg = state.config
    if state.mode is Mode.OUTSIDE:
        if rng.random() < policy.span_open_probability:
            return cfg.r_start_id
        while True:
            tok = rng.randrange(cfg.vocab_size)
            if tok not in (cfg.r_start_id, cfg.r_end_id):
                return tok
    _, allowed = allowed_token_ids(state)
    continuations = sorted(allowed - {cfg.r_end_id})
    if not continuations or rng.random() < policy.span_close_probability:
        return cfg.r_end_id
    return continuations[rng.randrange(len(continuations))]


def _find_disallowed(state: GenerationState, rng: random.Random) -> Optional[TokenId]:
    kind, tokens = allowed_token_ids(state)
    vocab = state.config.vocab_size
    if kind == "deny":
        return next(iter(tokens)) if tokens else None
    start = rng.randrange(vocab)
    for i in range(vocab):
        tok = (start + i) % vocab
        if tok not in tokens:
            return tok
    return None


def run_episode(
    prompt_tokens: Sequence[TokenId],
    policy: MockPolicy,
    decoder_cfg: DecoderConfig,
    max_steps: int,
) -> EpisodeResult:
    """Drive one episode; returns the full trace for replay.

    Scripted policies raise EpisodeError (with the step index) if their
    script emits a token the mask forbids.
    """
    if max_steps <= 0:
        raise ConfigError("max_steps must be positive")
    state = new_state(list(prompt_tokens), decoder_cfg)
    rng = random.Random(policy.seed)
    generated: list[TokenId] = []
    trace: list[StepRecord] = []
    span_stats: list[SpanStats] = []
    current_sizes: list[int] = []
    for step in range(max_steps):
        kind, tokens = allowed_token_ids(state)
        if policy.kind == "adversarial":
            bad = _find_disallowed(state, rng)
            if bad is not None:
                try:
                    observe_token(state, bad)
                except InvalidContinuationError:
                    pass
                else:
                    raise AssertionError(
                        f"mask failed to reject token {bad} at step {step}"
                    )
        if policy.kind == "scripted":
            if step >= len(policy.script):
                break
            token = policy.script[step]
            allowed = (token not in tokens) if kind == "deny" else (token in tokens)
            if not (0 <= token < decoder_cfg.vocab_size and allowed):
                raise EpisodeError(f"scripted token {token} is masked", step)
        else:
            token = _pick_random(state, rng, policy)
        mode_before = state.mode
        session_before = state.session
        closing = session_before is not None and token == decoder_cfg.r_end_id
        if closing:
            span_stats.append(
                SpanStats(
                    snapshot_len=session_before.context_version,
                    visits=session_before.visits,
                    candidate_sizes=list(current_sizes),
                )
            )
            current_sizes = []
        observe_token(state, token)
        if session_before is not None and not closing:
            current_sizes.append(state.session.candidate_count)
        generated.append(token)
        trace.append(
            StepRecord(
                step=step,
                mode=mode_before.value,
                token=token,
                allowed_size=_allowed_size(state, kind, tokens),
            )
        )
    session = state.session
    if session is not None:
        span_stats.append(
            SpanStats(
                snapshot_len=session.context_version,
                visits=session.visits,
                candidate_sizes=list(current_sizes),
            )
        )
    return EpisodeResult(
        generated=generated,
        spans=extract_spans(state),
        trace=trace,
        span_stats=span_stats,
        state=state,
    )


def check_faithfulness(result: EpisodeResult) -> int:
    """Verify every span slices out verbatim at every recorded position.

    Returns the number of spans checked; raises AssertionError on violation.
    """
    tokens = result.state.context.tokens
    checked = 0
    for span in result.spans:
        k = len(span.tokens)
        assert span.context_start_positions, "closed span with no occurrence"
        for p in span.context_start_positions:
            assert p + k <= span.context_snapshot_len
            assert tokens[p : p + k] == span.tokens
        checked += 1
    return checked


def dump_trace(trace: Sequence[StepRecord], out: IO[str]) -> None:
    for record in trace:
        out.write(
            json.dumps(
                {
                    "step": record.step,
                    "mode": record.mode,
                    "token": record.token,
                    "allowed_size": record.allowed_size,
                }
            )
            + "\n"
        )
