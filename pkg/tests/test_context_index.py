import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recallspan import (
    ConfigError,
    InvalidContinuationError,
    advance,
    allowed_next,
    append_tokens,
    begin_match,
    build_index,
    naive_allowed,
)


def brute_force_postings(tokens):
    out = {}
    for pos, tok in enumerate(tokens):
        out.setdefault(tok, []).append(pos)
    return out


def test_build_empty():
    ctx = build_index([])
    assert len(ctx) == 0
    assert ctx.postings == {}


def test_build_postings_match_brute_force():
    tokens = [5, 7, 5, 9]
    ctx = build_index(tokens)
    assert ctx.postings == {5: [0, 2], 7: [1], 9: [3]}
    assert ctx.postings == brute_force_postings(tokens)


def test_build_rejects_wrong_offsets_length():
    with pytest.raises(ConfigError):
        build_index([1, 2, 3], char_offsets=[(0, 1), (1, 2)])


def test_build_rejects_negative_and_out_of_range_tokens():
    with pytest.raises(ConfigError):
        build_index([0, -1])
    with pytest.raises(ConfigError):
        build_index([0, 7], vocab_size=7)


def test_append_matches_rebuild():
    ctx = append_tokens(build_index([5]), [7])
    rebuilt = build_index([5, 7])
    assert ctx.tokens == rebuilt.tokens
    assert ctx.postings == rebuilt.postings


def test_append_empty_is_identity():
    ctx = build_index([5, 7])
    before = (list(ctx.tokens), {k: list(v) for k, v in ctx.postings.items()})
    append_tokens(ctx, [])
    assert (ctx.tokens, ctx.postings) == before


def test_append_extends_posting_list():
    ctx = append_tokens(build_index([5, 5]), [5])
    assert ctx.postings == {5: [0, 1, 2]}


def test_begin_match_candidates():
    ctx = build_index([5, 7, 5, 9])
    session = begin_match(ctx)
    assert session.k == 0
    assert set(session.candidates) == {0, 1, 2, 3}
    assert begin_match(build_index([])).candidate_count == 0


def test_allowed_next_against_hand_enumeration():
    ctx = build_index([5, 7, 5, 9])
    session = begin_match(ctx)
    assert allowed_next(session) == {5, 7, 9}
    advance(session, 5)
    assert allowed_next(session) == {7, 9}


def test_allowed_next_empty_at_context_boundary():
    # the only occurrence of [5, 9] ends at the context edge
    session = begin_match(build_index([5, 7, 5, 9]))
    advance(session, 5)
    advance(session, 9)
    assert allowed_next(session) == set()


def test_advance_filters_candidates():
    session = begin_match(build_index([5, 7, 5, 9]))
    advance(session, 5)
    assert set(session.candidates) == {0, 2}
    advance(session, 7)
    assert set(session.candidates) == {0}


def test_advance_rejects_disallowed_token():
    session = begin_match(build_index([5, 7, 5, 9]))
    with pytest.raises(InvalidContinuationError):
        advance(session, 6)
    # session unharmed
    assert session.k == 0
    advance(session, 5)
    with pytest.raises(InvalidContinuationError):
        advance(session, 5)


def test_naive_allowed_hand_cases():
    assert naive_allowed([5, 7, 5, 9], [5]) == {7, 9}
    assert naive_allowed([5, 7], [5, 7, 9]) == set()
    assert naive_allowed([], []) == set()
    assert naive_allowed([5, 7, 5, 9], []) == {5, 7, 9}
    assert naive_allowed([5, 7, 5, 9], [5, 9]) == set()


def test_snapshot_excludes_later_appends():
    ctx = build_index([5, 7])
    session = begin_match(ctx)
    append_tokens(ctx, [5, 8])
    # token 8 exists only past the snapshot; invisible to this session
    assert allowed_next(session) == {5, 7}
    advance(session, 5)
    assert allowed_next(session) == {7}


def walk(tokens, seed, max_len=64):
    """Advance through one random valid trajectory, checking the oracle at
    every step plus candidate monotonicity, verbatim prefixes, and the
    work bound."""
    ctx = build_index(tokens)
    session = begin_match(ctx)
    rng = random.Random(seed)
    sizes = []
    while session.k < max_len:
        allowed = allowed_next(session)
        assert allowed == naive_allowed(tokens, session.prefix)
        if not allowed:
            break
        advance(session, rng.choice(sorted(allowed)))
        sizes.append(session.candidate_count)
        assert len(sizes) < 2 or sizes[-1] <= sizes[-2]
        for p in session.candidates:
            assert tokens[p : p + session.k] == session.prefix
    assert allowed_next(session) == naive_allowed(tokens, session.prefix)
    assert session.visits <= len(tokens) + sum(sizes[:-1] if sizes else [])
    return session


@settings(max_examples=60, deadline=None)
@given(
    tokens=st.lists(st.integers(min_value=0, max_value=7), max_size=200),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
)
def test_oracle_equivalence_random_trajectories(tokens, seed):
    walk(tokens, seed)


@settings(max_examples=30, deadline=None)
@given(
    tokens=st.lists(st.integers(min_value=0, max_value=1), min_size=1, max_size=120),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
)
def test_oracle_equivalence_binary_alphabet(tokens, seed):
    # tiny alphabet keeps candidate sets large, stressing the filter path
    walk(tokens, seed)
