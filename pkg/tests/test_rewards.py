import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recallspan import (
    CharInterval,
    CompletionRecord,
    CompositeRewardConfig,
    ConfigError,
    DegenerateCompletionError,
    FormatRules,
    LocatedSpan,
    RetrievalRewardConfig,
    RewardMode,
    additive_reward,
    char_f1,
    composite_reward,
    correctness_penalty,
    density_penalty,
    format_reward,
    load_reward_configs,
    multiplicative_reward,
    passage_overlap,
    retrieval_reward,
)

# frozen from direct evaluation of the definitions
MULT_1_0 = 0.09049875621120891
COMPOSITE_1_1_0 = 0.4361995024844836


def bag_overlap_f1(g, s):
    """Character-position-set oracle for interval F1."""
    a, b = set(range(*g)), set(range(*s))
    if not a and not b:
        return 0.0
    return 2 * len(a & b) / (len(a) + len(b))


def record(spans=(), n_tokens=1024, n_start=None, n_end=None):
    spans = [LocatedSpan(text=t, occurrences=list(occ)) for t, occ in spans]
    n = len(spans)
    return CompletionRecord(
        spans=spans,
        generated_token_count=n_tokens,
        start_delims=n if n_start is None else n_start,
        end_delims=n if n_end is None else n_end,
    )


class TestCharF1:
    def test_identical(self):
        assert char_f1(CharInterval(0, 100), CharInterval(0, 100)) == 1.0

    def test_disjoint(self):
        assert char_f1(CharInterval(0, 100), CharInterval(200, 300)) == 0.0

    def test_half_overlap(self):
        g, s = CharInterval(0, 100), CharInterval(50, 150)
        assert char_f1(g, s) == 0.5
        assert char_f1(g, s) == bag_overlap_f1(g, s)

    def test_both_empty(self):
        assert char_f1(CharInterval(3, 3), CharInterval(9, 9)) == 0.0

    @settings(max_examples=200, deadline=None)
    @given(st.tuples(*[st.integers(0, 400)] * 4))
    def test_matches_bag_oracle(self, bounds):
        a, b, c, d = bounds
        g, s = CharInterval(min(a, b), max(a, b)), CharInterval(min(c, d), max(c, d))
        assert char_f1(g, s) == pytest.approx(bag_overlap_f1(g, s), abs=1e-12)
        assert char_f1(g, s) == char_f1(s, g)


class TestPassageOverlap:
    def test_cap_saturates(self):
        g = CharInterval(0, 100)
        assert passage_overlap(g, [CharInterval(0, 100)], tau=0.4) == 1.0

    def test_no_spans(self):
        assert passage_overlap(CharInterval(0, 100), [], tau=0.4) == 0.0

    def test_below_threshold_scales(self):
        # best F1 = 0.2 against tau 0.4
        g = CharInterval(0, 100)
        s = CharInterval(0, 900)  # F1 = 2*100/1000 = 0.2
        assert passage_overlap(g, [s], tau=0.4) == pytest.approx(0.5, abs=1e-12)

    def test_bad_tau(self):
        with pytest.raises(ConfigError):
            passage_overlap(CharInterval(0, 1), [], tau=0.0)

    def test_contiguity_sensitivity(self):
        # verbatim text resolved to a non-overlapping occurrence scores zero
        g = CharInterval(0, 10)
        elsewhere = CharInterval(50, 60)
        assert passage_overlap(g, [elsewhere], tau=0.9) == 0.0


class TestDensityPenalty:
    def test_within_free_quota(self):
        assert density_penalty(2, 4, 100) == 1.0

    def test_half_at_one_half_life_past_threshold(self):
        assert density_penalty(8, 0, 1024, delta=4.0, half_life=4.0) == 0.5

    def test_boundary_at_threshold(self):
        assert density_penalty(4, 0, 1024, delta=4.0, half_life=4.0) == 1.0

    def test_zero_tokens_is_degenerate(self):
        with pytest.raises(DegenerateCompletionError):
            density_penalty(1, 0, 0)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 100), st.integers(0, 10), st.integers(1, 4096))
    def test_range_and_monotone_in_span_count(self, n_s, n_free, n_t):
        p = density_penalty(n_s, n_free, n_t)
        # mathematically positive; extreme densities may underflow to 0.0
        assert 0.0 <= p <= 1.0
        assert density_penalty(n_s + 1, n_free, n_t) <= p


class TestCorrectnessPenalty:
    def test_well_formed(self):
        assert correctness_penalty(0, 0, 7) == 1.0

    def test_one_short_of_four(self):
        assert correctness_penalty(1, 0, 4) == 0.5

    def test_clamped_at_zero(self):
        assert correctness_penalty(2, 0, 1) == 0.0

    def test_no_spans(self):
        assert correctness_penalty(0, 0, 0) == 1.0
        assert correctness_penalty(0, 3, 0) == 0.0


class TestRetrievalReward:
    def test_always_one_well_formed(self):
        cfg = RetrievalRewardConfig(mode=RewardMode.ALWAYS_ONE, n_free=2)
        assert retrieval_reward(record(), [], cfg) == 1.0

    def test_binary_presence_no_spans(self):
        cfg = RetrievalRewardConfig(mode=RewardMode.BINARY_PRESENCE, n_free=2)
        assert retrieval_reward(record(), [], cfg) == 0.0

    def test_mean_over_gold(self):
        gold = [CharInterval(0, 100), CharInterval(200, 300)]
        cfg = RetrievalRewardConfig(tau=1.0, n_free=4, mode=RewardMode.GOLD_OVERLAP)
        spans = [
            ("x" * 100, [CharInterval(0, 100)]),    # overlap 1.0 vs gold[0]
            ("y" * 100, [CharInterval(250, 350)]),  # F1 = 2*50/200 = 0.5 vs gold[1]
        ]
        got = retrieval_reward(record(spans), gold, cfg)
        assert got == pytest.approx(0.75, abs=1e-12)

    def test_empty_gold_rejected_in_overlap_mode(self):
        cfg = RetrievalRewardConfig(mode=RewardMode.GOLD_OVERLAP)
        with pytest.raises(ConfigError):
            retrieval_reward(record(), [], cfg)

    def test_top_k_keeps_best_scoring_gold(self):
        gold = [CharInterval(0, 10), CharInterval(20, 30), CharInterval(40, 50)]
        spans = [("z" * 10, [CharInterval(20, 30)])]
        cfg = RetrievalRewardConfig(tau=1.0, top_k=1, n_free=4)
        assert retrieval_reward(record(spans), gold, cfg) == 1.0

    def test_short_spans_and_mismatch_penalized(self):
        spans = [("ab", [CharInterval(0, 2)])] * 4  # all shorter than 5 chars
        cfg = RetrievalRewardConfig(mode=RewardMode.ALWAYS_ONE, n_free=8)
        got = retrieval_reward(record(spans), [], cfg)
        assert got == pytest.approx(max(0.0, 1 - 4 / math.sqrt(4)), abs=1e-12)

    def test_monotone_in_span_coverage(self):
        gold = [CharInterval(0, 100)]
        cfg = RetrievalRewardConfig(tau=0.9, n_free=4)
        last = -1.0
        for width in (10, 40, 70, 100):
            spans = [("s" * width, [CharInterval(0, width)])]
            got = retrieval_reward(record(spans), gold, cfg)
            assert got >= last
            last = got


class TestComposition:
    def test_additive(self):
        assert additive_reward(1, 1) == 1.0
        assert additive_reward(0, 0) == 0.0
        assert additive_reward(1, 0) == 0.5
        with pytest.raises(ConfigError):
            additive_reward(1.2, 0)

    def test_multiplicative_corners_exact(self):
        assert multiplicative_reward(0, 0) == 0.0
        assert multiplicative_reward(1, 1) == 1.0

    def test_multiplicative_frozen_value(self):
        assert multiplicative_reward(1, 0) == pytest.approx(MULT_1_0, abs=1e-9)

    def test_composite_corners(self):
        assert composite_reward(1, 1, 1) == pytest.approx(1.0, abs=1e-12)
        assert composite_reward(0, 0, 0) == 0.0

    def test_composite_frozen_value(self):
        assert composite_reward(1, 1, 0) == pytest.approx(COMPOSITE_1_1_0, abs=1e-9)

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            CompositeRewardConfig(w_format=0.5, w_add=0.4, w_mult=0.4)

    @settings(max_examples=500, deadline=None)
    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
    def test_range_properties(self, f, a, r):
        assert 0.0 <= additive_reward(a, r) <= 1.0
        m = multiplicative_reward(a, r)
        assert 0.0 <= m <= 1.0
        assert m == multiplicative_reward(r, a)
        assert 0.0 <= composite_reward(f, a, r) <= 1.0

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 0.5))
    def test_multiplicative_monotone(self, a, r, bump):
        base = multiplicative_reward(a, r)
        assert multiplicative_reward(min(1.0, a + bump), r) >= base
        assert multiplicative_reward(a, min(1.0, r + bump)) >= base


WELL_FORMED = """<think>
Let me look. <|start_recall|>Key 1837:
AEgkZzAgQw<|end_recall|> That is the one.
</think>
Answer: AEgkZzAgQw"""


class TestFormatReward:
    def test_well_formed(self):
        assert format_reward(WELL_FORMED) == 1

    def test_unbalanced_delimiters(self):
        assert format_reward(WELL_FORMED.replace("<|end_recall|>", "", 1)) == 0

    def test_missing_answer_line(self):
        assert format_reward(WELL_FORMED.replace("Answer:", "answer maybe")) == 0

    def test_recall_outside_think_block(self):
        text = "<think>ok</think>\n<|start_recall|>abcdef<|end_recall|>\nAnswer: x"
        assert format_reward(text) == 0

    def test_nested_start_marker(self):
        text = "<think><|start_recall|>a<|start_recall|>b<|end_recall|></think>\nAnswer: x"
        assert format_reward(text) == 0

    def test_think_block_optional_without_recalls(self):
        assert format_reward("Answer: 42") == 1

    def test_no_think_requirement_when_unconfigured(self):
        rules = FormatRules(think_open=None, think_close=None)
        assert format_reward("<|start_recall|>abcdef<|end_recall|>\nAnswer: x", rules) == 1


class TestConfigFile:
    def test_bundled_table(self):
        cfgs = load_reward_configs()
        kv = cfgs["kv_retrieval"]
        assert kv.retrieval.tau == 0.9 and kv.retrieval.n_free == 2
        assert kv.answer_metric == "sub_em" and kv.retrieval.top_k is None
        multi = cfgs["multi_hop_qa"]
        assert multi.retrieval.tau == 0.4 and multi.retrieval.n_free == 4
        niah = cfgs["multi_niah"]
        assert niah.retrieval.tau == 0.9 and niah.retrieval.n_free == 6
        assert niah.answer_metric == "net_recall"
        rr = cfgs["reasoning_retrieval"]
        assert rr.retrieval.tau == 0.9 and rr.retrieval.n_free == 2
        rerank = cfgs["reranking"]
        assert rerank.retrieval.tau == 0.7 and rerank.retrieval.top_k == 2
        assert rerank.answer_metric == "ndcg_at_10" and rerank.retrieval.n_free == 4
        icl = cfgs["in_context_learning"]
        assert icl.retrieval.tau == 0.95 and icl.retrieval.top_k == 2
        for name in ("majority_vote", "top_n_vote"):
            agg = cfgs[name]
            assert agg.retrieval.mode is RewardMode.ALWAYS_ONE and agg.retrieval.n_free == 2
        assert cfgs["long_doc_qa"].retrieval.mode is RewardMode.BINARY_PRESENCE
        assert cfgs["long_doc_qa"].retrieval.n_free == 4
        assert cfgs["short_context_math"].answer_metric == "exact_match"
        assert cfgs["entity_citation"].retrieval.top_k == 5

    def test_defaults_applied(self):
        cfgs = load_reward_configs()
        for cfg in cfgs.values():
            assert cfg.retrieval.delta == 4.0
            assert cfg.retrieval.half_life == 4.0
            assert cfg.retrieval.min_span_chars == 5

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_reward_configs("/nonexistent/rewards.ini")
