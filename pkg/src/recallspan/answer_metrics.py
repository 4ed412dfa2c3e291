"""Answer-quality metrics selected per task category."""

from __future__ import annotations

import math
import re
import string
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import ConfigError

_ARTICLES = ("a", "an", "the")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_answer(text: str) -> str:
    """Lowercase, drop punctuation, collapse whitespace, strip a leading article."""
    text = text.lower().translate(_PUNCT_TABLE)
    words = text.split()
    if words and words[0] in _ARTICLES:
        words = words[1:]
    return " ".join(words)


def sub_em(prediction: str, gold_answers: Sequence[str]) -> int:
    """1 iff any normalized gold answer is a substring of the prediction."""
    if not gold_answers:
        raise ConfigError("gold_answers must be non-empty")
    pred = normalize_answer(prediction)
    return int(any(normalize_answer(g) in pred for g in gold_answers))


def exact_match(prediction: str, gold_answers: Sequence[str]) -> int:
    if not gold_answers:
        raise ConfigError("gold_answers must be non-empty")
    pred = normalize_answer(prediction)
    return int(any(normalize_answer(g) == pred for g in gold_answers))


@dataclass(frozen=True)
class Ranking:
    """An ordered prediction over document ids with graded relevance labels."""

    predicted: tuple[str, ...]
    relevance: Mapping[str, float]


def ndcg_at_10(ranking: Ranking) -> float:
    """Standard NDCG@10 with exponential gain and log2 rank discount."""
    if len(set(ranking.predicted)) != len(ranking.predicted):
        raise ConfigError("predicted ids must be unique")
    if not ranking.relevance:
        raise ConfigError("relevance mapping must be non-empty")
    dcg = 0.0
    for rank, doc_id in enumerate(ranking.predicted[:10], start=1):
        rel = ranking.relevance.get(doc_id, 0.0)
        dcg += (2.0 ** rel - 1.0) / math.log2(rank + 1)
    ideal = sorted(ranking.relevance.values(), reverse=True)[:10]
    idcg = sum((2.0 ** rel - 1.0) / math.log2(rank + 1) for rank, rel in enumerate(ideal, start=1))
    if idcg == 0.0:
        return 0.0
    return dcg / idcg


def net_recall(predicted_items: Sequence[str], gold_items: Sequence[str]) -> float:
    """Recall over gold items, net of spurious predictions.

    No standard definition exists under this name; here it is the number of
    gold items matched minus the number of unmatched predictions, floored at
    zero, over the gold count. Matching uses normalized equality.
    """
    if not gold_items:
        raise ConfigError("gold_items must be non-empty")
    gold_norm = {normalize_answer(g) for g in gold_items}
    pred_norm = [normalize_answer(p) for p in predicted_items]
    matched = sum(1 for g in gold_norm if g in pred_norm)
    spurious = sum(1 for p in pred_norm if p not in gold_norm)
    return max(0, matched - spurious) / len(gold_norm)


def split_answer_items(prediction: str) -> list[str]:
    """Split a free-text answer into candidate items for set-style metrics."""
    parts = re.split(r"[,;\n]| and ", prediction)
    return [p.strip() for p in parts if p.strip()]


METRICS = {
    "sub_em": lambda pred, gold: float(sub_em(pred, gold)),
    "exact_match": lambda pred, gold: float(exact_match(pred, gold)),
    "net_recall": lambda pred, gold: net_recall(split_answer_items(pred), gold),
}


def score_answer(metric: str, prediction: str, gold_answers: Sequence[str]) -> float:
    """Dispatch to a text-vs-gold metric by name (ndcg needs a Ranking instead)."""
    try:
        fn = METRICS[metric]
    except KeyError:
        raise ConfigError(f"unknown answer metric: {metric!r}") from None
    return fn(prediction, gold_answers)
