"""Recall-span engine: constrained decoding for verbatim in-context retrieval,
verifiable rewards, synthetic long-context tasks, and evaluation harnesses."""

from .context_index import (
    MatchSession,
    SearchableContext,
    advance,
    allowed_next,
    append_tokens,
    begin_match,
    build_index,
    naive_allowed,
)
from .decode import (
    DecoderConfig,
    GenerationState,
    Mode,
    RecallSpan,
    apply_mask,
    extract_spans,
    new_state,
    next_token_mask,
    observe_token,
)
from .errors import (
    ConfigError,
    DegenerateCompletionError,
    InvalidContinuationError,
    RecallSpanError,
)
from .rewards import (
    CharInterval,
    CompletionRecord,
    CompositeRewardConfig,
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

__version__ = "0.1.0"
