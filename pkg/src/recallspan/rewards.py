"""Composite verifiable reward for interleaved reasoning-plus-recall rollouts.

The total reward blends a format gate, an answer-quality metric, and a
retrieval-quality term built from character-interval overlap between
recalled spans and gold evidence, capped at a per-task hit threshold and
modulated by density and correctness penalties. All functions here are pure
and map into [0, 1].
"""

from __future__ import annotations

import configparser
import enum
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, NamedTuple, Optional, Sequence

from .errors import ConfigError, DegenerateCompletionError


class CharInterval(NamedTuple):
    """Half-open character interval into the context document."""

    start: int
    end: int

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass
class LocatedSpan:
    """A recalled span's text and every place it occurs in the document."""

    text: str
    occurrences: list[CharInterval] = field(default_factory=list)


@dataclass
class CompletionRecord:
    """One rollout as the reward functions see it."""

    spans: list[LocatedSpan]
    generated_token_count: int
    start_delims: int
    end_delims: int
    answer_text: Optional[str] = None

    @property
    def span_count(self) -> int:
        return len(self.spans)

    @property
    def mismatch_count(self) -> int:
        return abs(self.start_delims - self.end_delims)

    def validate_against(self, document: str) -> None:
        for span in self.spans:
            for iv in span.occurrences:
                if document[iv.start : iv.end] != span.text:
                    raise ConfigError(
                        f"occurrence {iv} does not reproduce the span text"
                    )


class RewardMode(str, enum.Enum):
    GOLD_OVERLAP = "gold_overlap"
    BINARY_PRESENCE = "binary_presence"
    ALWAYS_ONE = "always_one"


@dataclass(frozen=True)
class RetrievalRewardConfig:
    """Per-category retrieval reward constants."""

    tau: float = 1.0
    n_free: int = 2
    delta: float = 4.0
    half_life: float = 4.0
    top_k: Optional[int] = None
    mode: RewardMode = RewardMode.GOLD_OVERLAP
    min_span_chars: int = 5

    def __post_init__(self) -> None:
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau must be in (0, 1], got {self.tau}")
        if self.n_free < 0:
            raise ConfigError("n_free must be non-negative")
        if self.top_k is not None and self.top_k <= 0:
            raise ConfigError("top_k must be positive when set")


@dataclass(frozen=True)
class CompositeRewardConfig:
    w_format: float = 0.2
    w_add: float = 0.4
    w_mult: float = 0.4
    epsilon: float = 0.01
    answer_metric: str = "sub_em"

    def __post_init__(self) -> None:
        total = self.w_format + self.w_add + self.w_mult
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"reward weights must sum to 1, got {total}")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")


def char_f1(g: CharInterval, s: CharInterval) -> float:
    """Harmonic-mean overlap of two character intervals.

    Interval-based, not bag-of-characters: a span that reproduces the gold
    text at a different, non-overlapping location scores 0. Two empty
    intervals score 0 (an empty span carries no evidence).
    """
    if g.end < g.start or s.end < s.start:
        raise ConfigError("intervals must satisfy start <= end")
    denom = (g.end - g.start) + (s.end - s.start)
    if denom == 0:
        return 0.0
    inter = max(0, min(g.end, s.end) - max(g.start, s.start))
    return 2.0 * inter / denom


def passage_overlap(
    g: CharInterval, span_intervals: Iterable[CharInterval], tau: float
) -> float:
    """Best span overlap against one gold interval, capped and normalized.

    The cap makes any span with F1 >= tau count as a full hit, so copying
    more than needed earns nothing extra.
    """
    if not 0.0 < tau <= 1.0:
        raise ConfigError(f"tau must be in (0, 1], got {tau}")
    best = 0.0
    for iv in span_intervals:
        best = max(best, char_f1(g, iv))
    return min(best, tau) / tau


def density_penalty(
    n_spans: int, n_free: int, n_tokens: int, delta: float = 4.0, half_life: float = 4.0
) -> float:
    """Exponential down-weighting of excess spans per 1,024 generated tokens.

    The first ``n_free`` spans and up to ``delta`` excess-density units are
    exempt; beyond that the factor halves every ``half_life`` units.
    """
    if n_tokens <= 0:
        raise DegenerateCompletionError("cannot score a completion with no generated tokens")
    d = (n_spans - n_free) / (n_tokens / 1024.0)
    return 0.5 ** (max(0.0, d - delta) / half_life)


def correctness_penalty(n_short: int, n_mismatch: int, n_spans: int) -> float:
    """Penalty for malformed spans, tolerant of sub-sqrt(N) offenders.

    Clamped to [0, 1]. With no spans at all: 1 if the delimiters were also
    absent or paired, else 0 (unpaired delimiters with nothing parsed is
    maximally malformed).
    """
    if n_short < 0 or n_mismatch < 0 or n_spans < 0:
        raise ConfigError("counts must be non-negative")
    if n_spans == 0:
        return 1.0 if n_mismatch == 0 else 0.0
    raw = 1.0 - (n_short + n_mismatch) / math.sqrt(n_spans)
    return min(1.0, max(0.0, raw))


@dataclass(frozen=True)
class RetrievalBreakdown:
    overlap: float
    density: float
    correctness: float

    @property
    def total(self) -> float:
        return self.overlap * self.density * self.correctness


def retrieval_reward_components(
    completion: CompletionRecord,
    gold: Sequence[CharInterval],
    cfg: RetrievalRewardConfig,
) -> RetrievalBreakdown:
    if cfg.mode is RewardMode.GOLD_OVERLAP:
        if not gold:
            raise ConfigError("gold_overlap mode requires at least one gold interval")
        all_occurrences = [iv for span in completion.spans for iv in span.occurrences]
        overlaps = [passage_overlap(g, all_occurrences, cfg.tau) for g in gold]
        if cfg.top_k is not None:
            overlaps = sorted(overlaps, reverse=True)[: cfg.top_k]
        base = sum(overlaps) / len(overlaps)
    elif cfg.mode is RewardMode.BINARY_PRESENCE:
        base = 1.0 if completion.span_count >= 1 else 0.0
    else:
        base = 1.0
    n_short = sum(1 for s in completion.spans if len(s.text) < cfg.min_span_chars)
    density = density_penalty(
        completion.span_count, cfg.n_free, completion.generated_token_count,
        cfg.delta, cfg.half_life,
    )
    correctness = correctness_penalty(n_short, completion.mismatch_count, completion.span_count)
    return RetrievalBreakdown(overlap=base, density=density, correctness=correctness)


def retrieval_reward(
    completion: CompletionRecord,
    gold: Sequence[CharInterval],
    cfg: RetrievalRewardConfig,
) -> float:
    return retrieval_reward_components(completion, gold, cfg).total


def _check_unit(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name} must lie in [0, 1], got {value}")


def additive_reward(r_ans: float, r_ret: float) -> float:
    _check_unit("r_ans", r_ans)
    _check_unit("r_ret", r_ret)
    return 0.5 * r_ans + 0.5 * r_ret


def multiplicative_reward(r_ans: float, r_ret: float, epsilon: float = 0.01) -> float:
    """Smoothed geometric mean, rewarding joint answer + retrieval success.

    Exactly 0 at (0, 0) and exactly 1 at (1, 1) by construction.
    """
    _check_unit("r_ans", r_ans)
    _check_unit("r_ret", r_ret)
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    value = math.sqrt((r_ans + epsilon) * (r_ret + epsilon)) - epsilon
    # True range is [0, 1]; guard against 1-ulp float drift at the corners.
    return min(1.0, max(0.0, value))


def composite_reward(
    r_format: float, r_ans: float, r_ret: float,
    cfg: CompositeRewardConfig = CompositeRewardConfig(),
) -> float:
    _check_unit("r_format", r_format)
    _check_unit("r_ans", r_ans)
    _check_unit("r_ret", r_ret)
    return (
        cfg.w_format * r_format
        + cfg.w_add * additive_reward(r_ans, r_ret)
        + cfg.w_mult * multiplicative_reward(r_ans, r_ret, cfg.epsilon)
    )


@dataclass(frozen=True)
class FormatRules:
    """What a well-formed completion must look like.

    Recall delimiters must pair up without nesting; when think markers are
    configured, recall delimiters may appear only inside a well-formed think
    block; and a final-answer line matching ``answer_pattern`` must exist.
    """

    start_marker: str = "<|start_recall|>"
    end_marker: str = "<|end_recall|>"
    think_open: Optional[str] = "<think>"
    think_close: Optional[str] = "</think>"
    answer_pattern: str = r"^Answer:[ \t]*(\S.*)$"


def _marker_positions(text: str, marker: str) -> list[int]:
    out = []
    pos = text.find(marker)
    while pos != -1:
        out.append(pos)
        pos = text.find(marker, pos + len(marker))
    return out


def _paired_regions(text: str, open_marker: str, close_marker: str) -> Optional[list[tuple[int, int]]]:
    """Alternating open/close regions; None if nesting, strays, or an open tail."""
    events = sorted(
        [(p, 0) for p in _marker_positions(text, open_marker)]
        + [(p, 1) for p in _marker_positions(text, close_marker)]
    )
    regions = []
    open_at: Optional[int] = None
    for pos, kind in events:
        if kind == 0:
            if open_at is not None:
                return None
            open_at = pos
        else:
            if open_at is None:
                return None
            regions.append((open_at, pos + len(close_marker)))
            open_at = None
    if open_at is not None:
        return None
    return regions


def format_reward(completion_text: str, rules: FormatRules = FormatRules()) -> int:
    recall_regions = _paired_regions(completion_text, rules.start_marker, rules.end_marker)
    if recall_regions is None:
        return 0
    if rules.think_open and rules.think_close:
        think_regions = _paired_regions(completion_text, rules.think_open, rules.think_close)
        if think_regions is None:
            return 0
        for start, end in recall_regions:
            if not any(a <= start and end <= b for a, b in think_regions):
                return 0
    if not re.search(rules.answer_pattern, completion_text, re.MULTILINE):
        return 0
    return 1


@dataclass(frozen=True)
class CategoryRewardConfig:
    """Everything cmd_score needs for one task category."""

    retrieval: RetrievalRewardConfig
    answer_metric: str
    composite: CompositeRewardConfig = CompositeRewardConfig()


def _parse_category(section: configparser.SectionProxy) -> CategoryRewardConfig:
    mode = RewardMode(section.get("mode", "gold_overlap"))
    retrieval = RetrievalRewardConfig(
        tau=section.getfloat("tau", fallback=1.0),
        n_free=section.getint("n_free", fallback=2),
        delta=section.getfloat("delta", fallback=4.0),
        half_life=section.getfloat("half_life", fallback=4.0),
        top_k=section.getint("top_k", fallback=None),
        mode=mode,
        min_span_chars=section.getint("min_span_chars", fallback=5),
    )
    metric = section.get("answer_metric", "sub_em")
    return CategoryRewardConfig(retrieval=retrieval, answer_metric=metric)


def load_reward_configs(path: Optional[str] = None) -> dict[str, CategoryRewardConfig]:
    """Per-category reward settings from an INI file; bundled defaults if none."""
    parser = configparser.ConfigParser()
    if path is None:
        text = resources.files("recallspan").joinpath("data/reward_config.ini").read_text()
        parser.read_string(text)
    else:
        read = parser.read(path)
        if not read:
            raise ConfigError(f"reward config file not found: {path}")
    out = {}
    for name in parser.sections():
        try:
            out[name] = _parse_category(parser[name])
        except ValueError as exc:
            raise ConfigError(f"bad reward config section [{name}]: {exc}") from exc
    if not out:
        raise ConfigError("reward config defines no categories")
    return out
