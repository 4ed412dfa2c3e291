"""Generation-time state machine for recall spans.

Tracks outside/inside-span mode, computes the token mask that constrains
in-span generation to verbatim continuations of the searchable context, and
records closed spans with their token and character intervals. Sampling
itself is out of scope; callers apply the mask to their own logits.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .context_index import (
    CharOffset,
    MatchSession,
    SearchableContext,
    TokenId,
    advance,
    allowed_next,
    append_tokens,
    begin_match,
    build_index,
)
from .errors import ConfigError, InvalidContinuationError


class Mode(enum.Enum):
    OUTSIDE = "outside"
    INSIDE = "inside"


@dataclass(frozen=True)
class DecoderConfig:
    """Delimiter token ids and context-growth policy.

    Outside spans everything but the end delimiter is allowed; inside spans
    only valid continuations plus the end delimiter are. Closed spans (and
    their delimiters, per the flags) join the searchable context so later
    spans can recall from prior generation.
    """

    r_start_id: TokenId
    r_end_id: TokenId
    vocab_size: int
    include_prior_spans_in_context: bool = True
    include_delimiters_in_context: bool = True

    def __post_init__(self) -> None:
        if self.vocab_size <= 0:
            raise ConfigError("vocab_size must be positive")
        if self.r_start_id == self.r_end_id:
            raise ConfigError("start and end delimiters must be distinct tokens")
        for tid in (self.r_start_id, self.r_end_id):
            if not 0 <= tid < self.vocab_size:
                raise ConfigError(f"delimiter id {tid} outside vocab of size {self.vocab_size}")


@dataclass
class RecallSpan:
    """One recall span located in its snapshot context.

    ``context_start_positions`` holds every surviving occurrence start; for a
    zero-length span these are the occurrences of the empty sequence, i.e.
    0..M inclusive. ``generation_interval`` is the half-open range of the
    span's content tokens within the generated stream (delimiters excluded).
    """

    tokens: list[TokenId]
    generation_interval: tuple[int, int]
    context_start_positions: frozenset[int]
    context_snapshot_len: int = 0
    char_interval: Optional[tuple[int, int]] = None
    truncated: bool = False


@dataclass
class GenerationState:
    """One decoding stream: context, optional live match session, spans."""

    config: DecoderConfig
    context: SearchableContext
    session: Optional[MatchSession] = None
    spans: list[RecallSpan] = field(default_factory=list)
    generated_count: int = 0
    start_delims_emitted: int = 0
    end_delims_emitted: int = 0
    _open_content_start: int = 0

    @property
    def mode(self) -> Mode:
        return Mode.INSIDE if self.session is not None else Mode.OUTSIDE


def new_state(
    prompt_tokens: Iterable[TokenId],
    config: DecoderConfig,
    char_offsets: Optional[Sequence[CharOffset]] = None,
) -> GenerationState:
    ctx = build_index(prompt_tokens, char_offsets=char_offsets, vocab_size=config.vocab_size)
    return GenerationState(config=config, context=ctx)


def allowed_token_ids(state: GenerationState) -> tuple[str, set[TokenId]]:
    """Compact form of the next-token constraint.

    Returns ``("deny", tokens)`` when everything except ``tokens`` is
    allowed (outside spans), or ``("allow", tokens)`` when only ``tokens``
    are (inside spans). Avoids materializing a vocab-sized array per step.
    """
    cfg = state.config
    if state.session is None:
        return "deny", {cfg.r_end_id}
    allowed = allowed_next(state.session)
    allowed.add(cfg.r_end_id)
    allowed.discard(cfg.r_start_id)
    return "allow", allowed


def next_token_mask(state: GenerationState) -> np.ndarray:
    """Boolean mask over the vocabulary; True marks allowed tokens."""
    kind, tokens = allowed_token_ids(state)
    if kind == "deny":
        mask = np.ones(state.config.vocab_size, dtype=bool)
        mask[list(tokens)] = False
    else:
        mask = np.zeros(state.config.vocab_size, dtype=bool)
        mask[list(tokens)] = True
    return mask


def apply_mask(logits: Sequence[float], mask: np.ndarray) -> np.ndarray:
    """Replace disallowed logits with -inf; allowed entries pass unchanged."""
    scores = np.asarray(logits)
    if not np.issubdtype(scores.dtype, np.floating):
        scores = scores.astype(np.float64)
    if scores.shape != mask.shape:
        raise ConfigError(f"logits shape {scores.shape} does not match mask shape {mask.shape}")
    if not mask.any():
        raise ValueError("mask allows no tokens; the end delimiter is always allowed in-span")
    return np.where(mask, scores, -np.inf)


def _is_allowed(state: GenerationState, token: TokenId) -> bool:
    if not 0 <= token < state.config.vocab_size:
        return False
    kind, tokens = allowed_token_ids(state)
    return token not in tokens if kind == "deny" else token in tokens


def _zero_length_positions(snapshot_len: int) -> frozenset[int]:
    # Occurrences of the empty sequence: every boundary, 0..M inclusive.
    return frozenset(range(snapshot_len + 1))


def _resolve_char_interval(
    ctx: SearchableContext, positions: frozenset[int], span_len: int
) -> Optional[tuple[int, int]]:
    offsets = ctx.char_offsets
    if offsets is None or not positions:
        return None
    p = min(positions)
    if span_len == 0:
        start = offsets[p][0] if p < len(offsets) else ctx.text_length
        return (start, start)
    return (offsets[p][0], offsets[p + span_len - 1][1])


def _close_span(state: GenerationState, gen_index: int) -> RecallSpan:
    session = state.session
    assert session is not None
    content = list(session.prefix)
    if session.k == 0:
        positions = _zero_length_positions(session.context_version)
    else:
        positions = frozenset(session.candidates)
    span = RecallSpan(
        tokens=content,
        generation_interval=(state._open_content_start, gen_index),
        context_start_positions=positions,
        context_snapshot_len=session.context_version,
        char_interval=_resolve_char_interval(state.context, positions, len(content)),
    )
    state.spans.append(span)
    state.session = None
    cfg = state.config
    parts: list[TokenId] = []
    if cfg.include_delimiters_in_context:
        parts.append(cfg.r_start_id)
    if cfg.include_prior_spans_in_context:
        parts.extend(content)
    if cfg.include_delimiters_in_context:
        parts.append(cfg.r_end_id)
    if parts:
        append_tokens(state.context, parts)
    return span


def observe_token(state: GenerationState, token: TokenId) -> GenerationState:
    """Feed one emitted token through the state machine.

    Raises InvalidContinuationError for any token the current mask
    disallows, so mask and transition function cannot drift apart.
    """
    if not _is_allowed(state, token):
        raise InvalidContinuationError(
            f"token {token} is not allowed in mode {state.mode.value}"
        )
    cfg = state.config
    gen_index = state.generated_count
    if state.session is None:
        if token == cfg.r_start_id:
            state.session = begin_match(state.context)
            state.start_delims_emitted += 1
            state._open_content_start = gen_index + 1
        else:
            append_tokens(state.context, [token])
    else:
        if token == cfg.r_end_id:
            state.end_delims_emitted += 1
            _close_span(state, gen_index)
        else:
            advance(state.session, token)
    state.generated_count += 1
    return state


def extract_spans(state: GenerationState) -> list[RecallSpan]:
    """All closed spans in emission order, plus any unclosed trailing span.

    A still-open session is reported with ``truncated=True`` and whatever
    prefix it had matched.
    """
    spans = list(state.spans)
    session = state.session
    if session is not None:
        if session.k == 0:
            positions = _zero_length_positions(session.context_version)
        else:
            positions = frozenset(session.candidates)
        spans.append(
            RecallSpan(
                tokens=list(session.prefix),
                generation_interval=(
                    state._open_content_start,
                    state._open_content_start + session.k,
                ),
                context_start_positions=positions,
                context_snapshot_len=session.context_version,
                char_interval=_resolve_char_interval(state.context, positions, session.k),
                truncated=True,
            )
        )
    return spans
