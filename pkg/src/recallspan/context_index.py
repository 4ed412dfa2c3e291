"""Searchable context with incremental prefix matching.

The searchable context is an append-only token sequence (prompt plus prior
generation). A match session tracks a growing recalled prefix and the set of
start positions in the context where that prefix occurs verbatim; the set of
valid next tokens is read off the survivors. Filtering candidates instead of
rescanning keeps total work at O(M + sum_k |S_k|) per span instead of O(M*L)
per step.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigError, InvalidContinuationError

TokenId = int
CharOffset = tuple[int, int]


@dataclass
class SearchableContext:
    """Append-only token sequence plus an occurrence index.

    ``postings`` maps each token id to the sorted positions where it occurs,
    so the first step of a match is a dictionary lookup rather than a scan.
    ``char_offsets``, when present, maps each token to a half-open character
    interval in a canonical text rendering; appended tokens with no text are
    recorded as zero-width intervals.

    Safe for concurrent reads; appends need exclusive access. Sessions are
    single-owner and may move between threads only between operations.
    """

    tokens: list[TokenId] = field(default_factory=list)
    char_offsets: Optional[list[CharOffset]] = None
    postings: dict[TokenId, list[int]] = field(default_factory=dict)
    vocab_size: Optional[int] = None

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def version(self) -> int:
        # Append-only, so the length identifies the snapshot.
        return len(self.tokens)

    @property
    def text_length(self) -> int:
        if not self.char_offsets:
            return 0
        return self.char_offsets[-1][1]


@dataclass
class MatchSession:
    """A live recall span's prefix and surviving candidate start positions.

    Bound to the context snapshot taken at :func:`begin_match`; tokens
    appended to the context afterwards are invisible to this session.
    At ``k == 0`` the candidate set is every position in the snapshot and is
    represented implicitly. ``visits`` counts candidate positions examined
    while filtering in :func:`advance`, the work term the complexity bound
    is stated over.
    """

    context: SearchableContext
    context_version: int
    prefix: list[TokenId] = field(default_factory=list)
    _candidates: Optional[list[int]] = None
    visits: int = 0

    @property
    def k(self) -> int:
        return len(self.prefix)

    @property
    def candidates(self) -> Sequence[int]:
        if self._candidates is None:
            return range(self.context_version)
        return self._candidates

    @property
    def candidate_count(self) -> int:
        if self._candidates is None:
            return self.context_version
        return len(self._candidates)


def _validate_tokens(tokens: Sequence[TokenId], vocab_size: Optional[int]) -> None:
    if len(tokens) == 0:
        return
    arr = np.asarray(tokens)
    if arr.ndim != 1 or not np.issubdtype(arr.dtype, np.integer):
        raise ConfigError("tokens must be a flat sequence of integers")
    lo, hi = int(arr.min()), int(arr.max())
    if lo < 0:
        raise ConfigError(f"token ids must be non-negative, got {lo}")
    if vocab_size is not None and hi >= vocab_size:
        raise ConfigError(f"token id {hi} out of range for vocab size {vocab_size}")


def _validate_offsets(offsets: Sequence[CharOffset], n_tokens: int, prev_start: int) -> None:
    if len(offsets) != n_tokens:
        raise ConfigError(
            f"char_offsets length {len(offsets)} does not match token count {n_tokens}"
        )
    last = prev_start
    for start, end in offsets:
        if end < start:
            raise ConfigError(f"char offset interval ({start}, {end}) is inverted")
        if start < last:
            raise ConfigError("char offset starts must be non-decreasing")
        last = start


def build_index(
    tokens: Iterable[TokenId],
    char_offsets: Optional[Sequence[CharOffset]] = None,
    vocab_size: Optional[int] = None,
) -> SearchableContext:
    """Build a searchable context over ``tokens``.

    Raises ConfigError if ``char_offsets`` is present with the wrong length
    or malformed intervals, or if token ids are out of range.
    """
    token_list = [int(t) for t in tokens]
    _validate_tokens(token_list, vocab_size)
    offsets = None
    if char_offsets is not None:
        _validate_offsets(char_offsets, len(token_list), 0)
        offsets = [(int(s), int(e)) for s, e in char_offsets]
    postings: dict[TokenId, list[int]] = {}
    for pos, tok in enumerate(token_list):
        postings.setdefault(tok, []).append(pos)
    return SearchableContext(
        tokens=token_list, char_offsets=offsets, postings=postings, vocab_size=vocab_size
    )


def append_tokens(
    ctx: SearchableContext,
    new_tokens: Iterable[TokenId],
    char_offsets: Optional[Sequence[CharOffset]] = None,
) -> SearchableContext:
    """Append tokens in place; existing positions never move.

    Sessions begun earlier keep matching against their snapshot. If the
    context carries char offsets, appended tokens either supply their own or
    are recorded as zero-width intervals at the end of the text.
    """
    token_list = [int(t) for t in new_tokens]
    _validate_tokens(token_list, ctx.vocab_size)
    if ctx.char_offsets is not None:
        if char_offsets is not None:
            prev_start = ctx.char_offsets[-1][0] if ctx.char_offsets else 0
            _validate_offsets(char_offsets, len(token_list), prev_start)
            ctx.char_offsets.extend((int(s), int(e)) for s, e in char_offsets)
        else:
            end = ctx.text_length
            ctx.char_offsets.extend((end, end) for _ in token_list)
    elif char_offsets is not None:
        raise ConfigError("cannot add char_offsets to a context built without them")
    base = len(ctx.tokens)
    for i, tok in enumerate(token_list):
        ctx.postings.setdefault(tok, []).append(base + i)
    ctx.tokens.extend(token_list)
    return ctx


def begin_match(ctx: SearchableContext) -> MatchSession:
    """Open a match session over the current snapshot of ``ctx``.

    With an empty prefix every position in the snapshot is a candidate.
    """
    return MatchSession(context=ctx, context_version=len(ctx.tokens))


def allowed_next(session: MatchSession) -> set[TokenId]:
    """Valid continuation set: tokens extending at least one occurrence.

    Returns ``{ tokens[p+k] : p in candidates, p+k < M }`` for the session's
    snapshot length M. Empty when every surviving occurrence ends at the
    snapshot boundary.
    """
    snap = session.context_version
    tokens = session.context.tokens
    k = session.k
    if session._candidates is None:
        # Empty prefix: every token occurring in the snapshot continues it.
        return {
            tok
            for tok, positions in session.context.postings.items()
            if positions and positions[0] < snap
        }
    return {tokens[p + k] for p in session._candidates if p + k < snap}


def advance(session: MatchSession, token: TokenId) -> MatchSession:
    """Extend the prefix by ``token``, keeping only consistent candidates.

    Raises InvalidContinuationError if no occurrence of the prefix continues
    with ``token`` inside the snapshot (the mask prevents this during
    decoding; hitting it means the caller bypassed the mask).
    """
    snap = session.context_version
    tokens = session.context.tokens
    k = session.k
    if session._candidates is None:
        positions = session.context.postings.get(token, [])
        cut = bisect_left(positions, snap)
        survivors = positions[:cut]
        session.visits += len(survivors)
    else:
        prior = session._candidates
        survivors = [p for p in prior if p + k < snap and tokens[p + k] == token]
        session.visits += len(prior)
    if not survivors:
        raise InvalidContinuationError(
            f"token {token} does not continue any occurrence of the current prefix"
        )
    session._candidates = survivors
    session.prefix.append(int(token))
    return session


def naive_allowed(tokens: Sequence[TokenId], prefix: Sequence[TokenId]) -> set[TokenId]:
    """Reference continuation set computed by rescanning every position.

    Independent of the incremental matcher; quadratic over a span and meant
    for tests only.
    """
    toks = np.asarray(tokens, dtype=np.int64)
    k = len(prefix)
    m = len(toks)
    if m - k <= 0:
        return set()
    hits = np.ones(m - k, dtype=bool)
    for j, t in enumerate(prefix):
        hits &= toks[j : m - k + j] == int(t)
    return {int(v) for v in np.unique(toks[k:][hits])}
