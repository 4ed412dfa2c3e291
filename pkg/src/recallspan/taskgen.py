"""Seeded generators for synthetic long-context tasks.

Five families: key-value retrieval, reasoning-retrieval (a math problem
whose solution is the lookup key), multi-needle retrieval in filler prose,
and two aggregation tasks (majority vote, top-N vote) that require no
retrieval. Instances carry gold answers plus gold character intervals into
the prompt, so retrieval quality is verifiable by construction.

Identical specs produce byte-identical instances. Prompt sizes are steered
to the target token count with a pluggable counter (default: chars / 4).
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from typing import Callable, IO, Iterable, Optional, Sequence

from .errors import ConfigError
from .rewards import CharInterval

TokenCounter = Callable[[str], int]

CATEGORIES = (
    "kv_retrieval",
    "reasoning_retrieval",
    "multi_niah",
    "majority_vote",
    "top_n_vote",
)
STORE_FORMATS = ("lines", "csv", "json")
QUERY_POSITIONS = ("before", "after", "both")

_SIZE_TOLERANCE = 0.08  # steer to within 8%, comfortably inside the 15% contract
_VALUE_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789"


def default_token_counter(text: str) -> int:
    return math.ceil(len(text) / 4)


@dataclass(frozen=True)
class TaskSpec:
    category: str
    target_length: int = 4096
    store_format: str = "lines"
    query_position: str = "after"
    seed: int = 0
    extras: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise ConfigError(f"unknown category {self.category!r}")
        if self.store_format not in STORE_FORMATS:
            raise ConfigError(f"unknown store format {self.store_format!r}")
        if self.query_position not in QUERY_POSITIONS:
            raise ConfigError(f"unknown query position {self.query_position!r}")
        if self.target_length <= 0:
            raise ConfigError("target_length must be positive")


@dataclass
class TaskInstance:
    id: str
    category: str
    prompt: str
    gold_answers: list[str]
    gold_intervals: list[CharInterval]
    metadata: dict


# --------------------------------------------------------------------------
# instruction templates and prompt assembly

_ANSWER_FORMAT = (
    "Do your reasoning step-by-step. On the final line, output only:\nAnswer: {answer_shape}"
)

INSTRUCTION_TEMPLATES: dict[str, list[str]] = {
    "kv_retrieval": [
        "Extract the value corresponding to the specified key from {store_name} below.\n\n" + _ANSWER_FORMAT,
        "Your task is to retrieve a value from a large lookup store called {store_name}. "
        "Find the entry whose key matches the query key and return its value exactly.\n\n" + _ANSWER_FORMAT,
        "Below is a key-value store named {store_name}. Look up the queried key and report "
        "its value verbatim.\n\n" + _ANSWER_FORMAT,
    ],
    "reasoning_retrieval": [
        "Your task is to retrieve a value from a large store called {store_name}. The key you "
        "need is given to you as a math problem. Solve that math problem, then look up the "
        "entry whose key equals the result.\n\n" + _ANSWER_FORMAT,
        "Solve the math problem below. Its solution is a key in {store_name}; output the value "
        "stored under that key.\n\n" + _ANSWER_FORMAT,
        "First work out the math problem. The answer is a key into {store_name}. Report the "
        "value for that key exactly as it appears.\n\n" + _ANSWER_FORMAT,
    ],
    "multi_niah": [
        "Some special magic {value_noun} are hidden within the following text. Read it "
        "carefully; you will be asked about them.\n\n" + _ANSWER_FORMAT,
        "The passage below conceals special magic {value_noun}. Memorize them as you read.\n\n" + _ANSWER_FORMAT,
        "Hidden inside this text are special magic {value_noun}. Keep track of every one.\n\n" + _ANSWER_FORMAT,
    ],
    "majority_vote": [
        "Below is a long list of votes, one per line. Tally the votes and determine which "
        "candidate received the most.\n\n" + _ANSWER_FORMAT,
        "Count the votes listed below and report the candidate with the highest total.\n\n" + _ANSWER_FORMAT,
    ],
    "top_n_vote": [
        "Below is a long list of votes, one per line. Tally the votes and determine the "
        "{top_n} candidates with the most votes.\n\n" + _ANSWER_FORMAT,
        "Count the votes listed below and report the {top_n} candidates with the highest "
        "totals.\n\n" + _ANSWER_FORMAT,
    ],
}


class _SafeFills(dict):
    """Leave unknown template placeholders literal instead of raising."""

    def __missing__(self, key: str) -> str:
        return "{" + key + "}"


def assemble_prompt(
    body: str,
    instruction_template_id: int,
    query: str,
    position: str,
    category: str = "kv_retrieval",
    fills: Optional[dict] = None,
    gold_intervals: Sequence[CharInterval] = (),
) -> tuple[str, list[CharInterval]]:
    """Arrange instruction, query, and body; shift gold intervals to match.

    ``position`` places the query before the body, after it, or both.
    """
    pool = INSTRUCTION_TEMPLATES.get(category)
    if pool is None:
        raise ConfigError(f"no instruction templates for category {category!r}")
    if not 0 <= instruction_template_id < len(pool):
        raise ConfigError(
            f"unknown instruction template {instruction_template_id} for {category!r}"
        )
    if position not in QUERY_POSITIONS:
        raise ConfigError(f"unknown query position {position!r}")
    instruction = pool[instruction_template_id].format_map(_SafeFills(fills or {}))
    parts = [instruction]
    if position in ("before", "both"):
        parts.append(query)
    body_offset = sum(len(p) + 2 for p in parts)  # parts joined by "\n\n"
    parts.append(body)
    if position in ("after", "both"):
        parts.append(query)
    prompt = "\n\n".join(parts)
    shifted = [CharInterval(s + body_offset, e + body_offset) for s, e in gold_intervals]
    for iv in shifted:
        assert prompt[iv.start : iv.end] == body[iv.start - body_offset : iv.end - body_offset]
    return prompt, shifted


# --------------------------------------------------------------------------
# key-value stores

@dataclass(frozen=True)
class _Store:
    body: str
    records: list[str]
    record_intervals: list[CharInterval]
    name: str


def _draw_value(rng: random.Random) -> str:
    return "".join(rng.choice(_VALUE_ALPHABET) for _ in range(10))


def _draw_entries(rng: random.Random, count: int) -> list[tuple[int, str]]:
    keys: list[int] = []
    seen: set[int] = set()
    while len(keys) < count:
        k = rng.randint(-9999, 9999)
        if k not in seen:
            seen.add(k)
            keys.append(k)
    values: list[str] = []
    seen_values: set[str] = set()
    while len(values) < count:
        v = _draw_value(rng)
        if v not in seen_values:
            seen_values.add(v)
            values.append(v)
    return list(zip(keys, values))


def _render_store(entries: Sequence[tuple[int, str]], store_format: str) -> _Store:
    records = []
    intervals = []
    if store_format == "lines":
        name = "the list"
        chunks = []
        offset = 0
        for k, v in entries:
            rec = f"Key {k}:\n{v}"
            records.append(rec)
            chunks.append(rec)
            intervals.append(CharInterval(offset, offset + len(rec)))
            offset += len(rec) + 2
        body = "\n\n".join(chunks)
    elif store_format == "csv":
        name = "`data_table`"
        header = "data_table:\nkey,value\n"
        offset = len(header)
        lines = []
        for k, v in entries:
            rec = f"{k},{v}"
            records.append(rec)
            lines.append(rec)
            intervals.append(CharInterval(offset, offset + len(rec)))
            offset += len(rec) + 1
        body = header + "\n".join(lines)
    else:
        name = "`retrieval_json`"
        header = "retrieval_json:\n{\n"
        offset = len(header)
        lines = []
        for i, (k, v) in enumerate(entries):
            rec = f'"{k}": "{v}"'
            records.append(rec)
            trailing = "," if i < len(entries) - 1 else ""
            lines.append(f"  {rec}{trailing}")
            intervals.append(CharInterval(offset + 2, offset + 2 + len(rec)))
            offset += 2 + len(rec) + len(trailing) + 1
        body = header + "\n".join(lines) + "\n}"
    return _Store(body=body, records=records, record_intervals=intervals, name=name)


def _steered(build: Callable[[int], TaskInstance], initial: int, minimum: int,
             target: int, counter: TokenCounter) -> TaskInstance:
    """Adjust a size knob until the prompt lands near the token target."""
    count = max(minimum, initial)
    best = None
    best_err = math.inf
    for _ in range(8):
        instance = build(count)
        measured = counter(instance.prompt)
        err = abs(measured - target) / target
        if err < best_err:
            best, best_err = instance, err
        if err <= _SIZE_TOLERANCE:
            break
        scaled = int(round(count * target / max(1, measured)))
        if scaled == count:
            scaled = count + (1 if measured < target else -1)
        if scaled < minimum:
            raise ConfigError(
                f"target_length {target} too small for this category"
            )
        count = scaled
    assert best is not None
    return best


def _template_id(rng: random.Random, spec: TaskSpec, category: str) -> int:
    tid = spec.extras.get("instruction_template")
    if tid is None:
        return rng.randrange(len(INSTRUCTION_TEMPLATES[category]))
    return int(tid)


def gen_kv_retrieval(spec: TaskSpec, counter: TokenCounter = default_token_counter) -> TaskInstance:
    if spec.category != "kv_retrieval":
        raise ConfigError("spec category must be kv_retrieval")

    def build(count: int) -> TaskInstance:
        rng = random.Random(spec.seed)
        entries = _draw_entries(rng, count)
        store = _render_store(entries, spec.store_format)
        gold_index = rng.randrange(count)
        template_id = _template_id(rng, spec, spec.category)
        gold_key, gold_value = entries[gold_index]
        query = f"Your key: {gold_key}"
        prompt, intervals = assemble_prompt(
            store.body,
            template_id,
            query,
            spec.query_position,
            category=spec.category,
            fills={"store_name": store.name, "answer_shape": "<the value>"},
            gold_intervals=[store.record_intervals[gold_index]],
        )
        record = store.records[gold_index]
        if prompt.count(record) != 1:
            raise ConfigError("gold record is not unique in the prompt")
        return TaskInstance(
            id=f"kv_retrieval-{spec.seed}",
            category=spec.category,
            prompt=prompt,
            gold_answers=[gold_value],
            gold_intervals=intervals,
            metadata={
                "seed": spec.seed,
                "store_format": spec.store_format,
                "query_position": spec.query_position,
                "instruction_template": template_id,
                "entry_count": count,
                "gold_key": gold_key,
                "gold_texts": [record],
            },
        )

    initial = max(8, spec.target_length // 6)
    return _steered(build, initial, 8, spec.target_length, counter)


# --------------------------------------------------------------------------
# reasoning-retrieval math problems

def _render_signed(coef: int, term: str) -> str:
    if coef == 1:
        return term
    if coef == -1:
        return f"-{term}"
    return f"{coef}{term}"


def _linear_equation(rng: random.Random, solution: int) -> str:
    """Equation of nested parenthesized terms whose unique root is ``solution``."""
    while True:
        n_terms = rng.randint(3, 5)
        coef_x = 0
        const = 0
        rendered = []
        for i in range(n_terms):
            shape = rng.randrange(3)
            sign = 1 if i == 0 else rng.choice((1, -1))
            if shape == 0:  # (p ± qx)
                p, q = rng.randint(1, 9), rng.randint(1, 9)
                qs = rng.choice((1, -1))
                atom = f"({p} {'+' if qs > 0 else '-'} {q}x)"
                a, b = qs * q, p
            elif shape == 1:  # m(x ± n)
                m, n = rng.randint(1, 9), rng.randint(1, 9)
                ns = rng.choice((1, -1))
                atom = f"{m}(x {'+' if ns > 0 else '-'} {n})"
                a, b = m, m * ns * n
            else:  # (qx ± p)
                p, q = rng.randint(1, 9), rng.randint(1, 9)
                ps = rng.choice((1, -1))
                atom = f"({q}x {'+' if ps > 0 else '-'} {p})"
                a, b = q, ps * p
            coef_x += sign * a
            const += sign * b
            if i == 0:
                rendered.append(atom)
            else:
                rendered.append(f"{'+' if sign > 0 else '-'} {atom}")
        rhs_coef = rng.randint(1, 3)
        if coef_x == rhs_coef:
            continue
        rhs_const = const + (coef_x - rhs_coef) * solution
        lhs = " ".join(rendered)
        rhs_x = "x" if rhs_coef == 1 else f"{rhs_coef}x"
        rhs = f"{rhs_x} + {rhs_const}" if rhs_const >= 0 else f"{rhs_x} - {-rhs_const}"
        return f"Solve for $x$ in $${lhs} = {rhs}$$"


def _arithmetic_expression(rng: random.Random, solution: int) -> str:
    """Expression x = a/b + c*d evaluating exactly to ``solution``."""
    b = rng.randint(1, 9)
    c = rng.randint(2, 99)
    d = rng.randint(2, 99)
    a = (solution - c * d) * b
    return f"Solve for $x$: $$x = \\frac{{{a}}}{{{b}}} + {c} \\cdot {d}$$"


def gen_reasoning_retrieval(
    spec: TaskSpec, counter: TokenCounter = default_token_counter
) -> TaskInstance:
    if spec.category != "reasoning_retrieval":
        raise ConfigError("spec category must be reasoning_retrieval")
    family_knob = spec.extras.get("problem_family", "mixed")
    if family_knob not in ("linear", "arith", "mixed"):
        raise ConfigError(f"unknown problem family {family_knob!r}")

    def build(count: int) -> TaskInstance:
        rng = random.Random(spec.seed)
        entries = _draw_entries(rng, count)
        store = _render_store(entries, spec.store_format)
        gold_index = rng.randrange(count)
        template_id = _template_id(rng, spec, spec.category)
        gold_key, gold_value = entries[gold_index]
        family = family_knob if family_knob != "mixed" else rng.choice(("linear", "arith"))
        if family == "linear":
            problem = _linear_equation(rng, gold_key)
        else:
            problem = _arithmetic_expression(rng, gold_key)
        query = f"Math problem:\n{problem}"
        prompt, intervals = assemble_prompt(
            store.body,
            template_id,
            query,
            spec.query_position,
            category=spec.category,
            fills={"store_name": store.name, "answer_shape": "<the value>"},
            gold_intervals=[store.record_intervals[gold_index]],
        )
        record = store.records[gold_index]
        if prompt.count(record) != 1:
            raise ConfigError("gold record is not unique in the prompt")
        return TaskInstance(
            id=f"reasoning_retrieval-{spec.seed}",
            category=spec.category,
            prompt=prompt,
            gold_answers=[gold_value],
            gold_intervals=intervals,
            metadata={
                "seed": spec.seed,
                "store_format": spec.store_format,
                "query_position": spec.query_position,
                "instruction_template": template_id,
                "entry_count": count,
                "solution_key": gold_key,
                "problem": problem,
                "problem_family": family,
                "gold_texts": [record],
            },
        )

    initial = max(8, spec.target_length // 6)
    return _steered(build, initial, 8, spec.target_length, counter)


# --------------------------------------------------------------------------
# multi-needle retrieval in filler prose

_ADJECTIVES = (
    "amber", "brisk", "calm", "dusty", "eager", "faded", "gentle", "hollow",
    "ivory", "jagged", "keen", "lucid", "mellow", "noble", "opal", "pale",
    "quiet", "rustic", "silent", "tame", "umber", "vivid", "wary", "young",
)
_NOUNS = (
    "anchor", "beacon", "cedar", "delta", "ember", "falcon", "garnet",
    "harbor", "inlet", "juniper", "kestrel", "lantern", "meadow", "nectar",
    "orchard", "prairie", "quarry", "ridge", "summit", "thicket", "valley",
    "willow", "yarrow", "zephyr",
)
_FILLER_SUBJECTS = (
    "The evening ferry", "A distant church bell", "The old lighthouse",
    "A row of poplars", "The market square", "A slow freight train",
    "The riverside path", "An unhurried crowd", "The corner bakery",
    "A patch of wild thyme", "The narrow canal", "A weathered signpost",
)
_FILLER_VERBS = (
    "drifted past", "settled over", "wound through", "faded behind",
    "brightened near", "lingered beside", "rolled toward", "stood against",
    "leaned into", "curved around",
)
_FILLER_OBJECTS = (
    "the quiet harbor", "the misty field", "the cobbled lane", "the low hills",
    "the shuttered houses", "the open plaza", "the mossy wall", "the tidal flats",
    "the pine grove", "the long embankment",
)
_VALUE_NOUNS = {"numbers": "numbers", "words": "words", "codes": "codes"}


def _filler_sentence(rng: random.Random) -> str:
    return (
        f"{rng.choice(_FILLER_SUBJECTS)} {rng.choice(_FILLER_VERBS)} "
        f"{rng.choice(_FILLER_OBJECTS)}."
    )


def _needle_value(rng: random.Random, value_type: str) -> str:
    if value_type == "numbers":
        return str(rng.randint(1_000_000, 9_999_999))
    if value_type == "words":
        return f"{rng.choice(_ADJECTIVES)}-{rng.choice(_NOUNS)}"
    if value_type == "codes":
        return "".join(rng.choice("0123456789abcdef") for _ in range(12))
    raise ConfigError(f"unknown value type {value_type!r}")


def _draw_niah_keys(rng: random.Random, count: int) -> list[str]:
    keys: list[str] = []
    seen: set[str] = set()
    while len(keys) < count:
        key = f"{rng.choice(_ADJECTIVES)}-{rng.choice(_NOUNS)}"
        if key not in seen:
            seen.add(key)
            keys.append(key)
    return keys


def gen_multi_niah(spec: TaskSpec, counter: TokenCounter = default_token_counter) -> TaskInstance:
    if spec.category != "multi_niah":
        raise ConfigError("spec category must be multi_niah")
    n_needles = int(spec.extras.get("needles", 2))
    values_per_key = int(spec.extras.get("values_per_key", 1))
    value_type = spec.extras.get("value_type", "numbers")
    n_distractors = int(spec.extras.get("distractors", 0))
    if n_needles <= 0:
        raise ConfigError("needles must be positive")
    if values_per_key <= 0:
        raise ConfigError("values_per_key must be positive")
    if value_type not in _VALUE_NOUNS:
        raise ConfigError(f"unknown value type {value_type!r}")
    value_noun = _VALUE_NOUNS[value_type]

    def build(count: int) -> TaskInstance:
        rng = random.Random(spec.seed)
        keys = _draw_niah_keys(rng, n_needles + n_distractors)
        target_keys, distractor_keys = keys[:n_needles], keys[n_needles:]
        needles = []
        gold_values = []
        seen_values: set[str] = set()

        def fresh_value() -> str:
            while True:
                value = _needle_value(rng, value_type)
                if value not in seen_values:
                    seen_values.add(value)
                    return value

        for key in target_keys:
            for _ in range(values_per_key):
                value = fresh_value()
                gold_values.append(value)
                needles.append(
                    (f"One of the special magic {value_noun} for {key} is: {value}.", True)
                )
        for key in distractor_keys:
            needles.append(
                (f"One of the special magic {value_noun} for {key} is: {fresh_value()}.", False)
            )
        sentences = [_filler_sentence(rng) for _ in range(count)]
        # uniform independent insertion slot per needle over the current list
        for text, _ in needles:
            slot = rng.randrange(len(sentences) + 1)
            sentences.insert(slot, text)
        body = " ".join(sentences)
        gold_intervals = []
        gold_texts = []
        for text, is_gold in needles:
            if body.count(text) != 1:
                raise ConfigError("needle sentence is not unique in the body")
            if not is_gold:
                continue
            start = body.index(text)
            gold_intervals.append(CharInterval(start, start + len(text)))
            gold_texts.append(text)
        template_id = _template_id(rng, spec, spec.category)
        key_list = " and ".join(target_keys) if n_needles <= 2 else (
            ", ".join(target_keys[:-1]) + ", and " + target_keys[-1]
        )
        query = (
            f"What are the special magic {value_noun} for {key_list} mentioned in the text? "
            f"List every one."
        )
        prompt, intervals = assemble_prompt(
            body,
            template_id,
            query,
            spec.query_position,
            category=spec.category,
            fills={
                "value_noun": value_noun,
                "answer_shape": f"<the {value_noun}, comma-separated>",
            },
            gold_intervals=gold_intervals,
        )
        return TaskInstance(
            id=f"multi_niah-{spec.seed}",
            category=spec.category,
            prompt=prompt,
            gold_answers=gold_values,
            gold_intervals=intervals,
            metadata={
                "seed": spec.seed,
                "query_position": spec.query_position,
                "instruction_template": template_id,
                "needles": n_needles,
                "values_per_key": values_per_key,
                "value_type": value_type,
                "distractors": n_distractors,
                "target_keys": target_keys,
                "filler_sentences": count,
                "gold_texts": gold_texts,
            },
        )

    initial = max(4, spec.target_length // 16)
    return _steered(build, initial, 4, spec.target_length, counter)


# --------------------------------------------------------------------------
# aggregation: majority vote and top-N vote

_CANDIDATE_POOLS = {
    "names": (
        "Alice", "Bruno", "Carmen", "Dmitri", "Elena", "Farid", "Greta",
        "Hiro", "Ines", "Jonas", "Katya", "Liam", "Mona", "Nadia", "Omar",
        "Priya", "Quentin", "Rosa", "Stefan", "Tara",
    ),
    "places": (
        "Andorra", "Bergen", "Cusco", "Dakar", "Esbjerg", "Fukuoka", "Girona",
        "Hobart", "Izmir", "Jaipur", "Kigali", "Lviv", "Malmo", "Nairobi",
        "Oslo", "Porto", "Quito", "Riga", "Split", "Tartu",
    ),
    "letters": tuple("ABCDEFGHIJKLMNOPQRST"),
    "numbers": tuple(str(n) for n in range(10, 30)),
}


def gen_aggregation(spec: TaskSpec, counter: TokenCounter = default_token_counter) -> TaskInstance:
    if spec.category not in ("majority_vote", "top_n_vote"):
        raise ConfigError("spec category must be majority_vote or top_n_vote")
    margin = int(spec.extras.get("margin", 2))
    n_candidates = int(spec.extras.get("candidates", 6))
    pool_name = spec.extras.get("candidate_category", "names")
    top_n = int(spec.extras.get("top_n", 3)) if spec.category == "top_n_vote" else 1
    if pool_name not in _CANDIDATE_POOLS:
        raise ConfigError(f"unknown candidate category {pool_name!r}")
    pool = _CANDIDATE_POOLS[pool_name]
    if margin < 1:
        raise ConfigError("vote margin must be at least 1 (margin 0 leaves the winner ambiguous)")
    if n_candidates < 2 or n_candidates > len(pool):
        raise ConfigError(f"candidate count must be in [2, {len(pool)}]")
    if not 1 <= top_n < n_candidates:
        raise ConfigError("top_n must leave at least one non-winning candidate")

    def build(total_votes: int) -> TaskInstance:
        rng = random.Random(spec.seed)
        candidates = list(rng.sample(pool, n_candidates))
        winners = candidates[:top_n]
        losers = candidates[top_n:]
        base = max(1, total_votes // n_candidates)
        counts = {}
        for cand in losers:
            counts[cand] = rng.randint(max(1, base // 2), base)
        floor = max(counts[c] for c in losers) + margin
        for cand in winners:
            counts[cand] = floor + rng.randint(0, max(1, base // 4))
        # land on the requested total exactly so prompt size tracks the knob;
        # surplus goes to the lead winner, deficits come out of losers first
        delta = total_votes - sum(counts.values())
        if delta > 0:
            counts[winners[0]] += delta
        else:
            deficit = -delta
            for cand in losers:
                take = min(deficit, counts[cand] - 1)
                counts[cand] -= take
                deficit -= take
            for cand in winners:
                take = min(deficit, counts[cand] - floor)
                counts[cand] -= take
                deficit -= take
            if deficit > 0:
                raise ConfigError("target_length too small for this candidate count")
        ballots = [cand for cand in candidates for _ in range(counts[cand])]
        rng.shuffle(ballots)
        body = "\n".join(f"- {cand}" for cand in ballots)
        template_id = _template_id(rng, spec, spec.category)
        if spec.category == "majority_vote":
            query = "Which candidate received the most votes?"
            answer_shape = "<the candidate>"
            gold = [winners[0]]
        else:
            query = f"Which {top_n} candidates received the most votes?"
            answer_shape = f"<the top {top_n} candidates, comma-separated>"
            gold = sorted(winners, key=lambda c: -counts[c])
        prompt, _ = assemble_prompt(
            body,
            template_id,
            query,
            spec.query_position,
            category=spec.category,
            fills={"answer_shape": answer_shape, "top_n": top_n},
            gold_intervals=[],
        )
        return TaskInstance(
            id=f"{spec.category}-{spec.seed}",
            category=spec.category,
            prompt=prompt,
            gold_answers=gold,
            gold_intervals=[],
            metadata={
                "seed": spec.seed,
                "query_position": spec.query_position,
                "instruction_template": template_id,
                "candidate_category": pool_name,
                "candidates": candidates,
                "counts": counts,
                "margin": margin,
                "top_n": top_n,
            },
        )

    initial = max(n_candidates * 3, spec.target_length // 3)
    return _steered(build, initial, n_candidates * 3, spec.target_length, counter)


# --------------------------------------------------------------------------
# dispatch and serialization

_GENERATORS = {
    "kv_retrieval": gen_kv_retrieval,
    "reasoning_retrieval": gen_reasoning_retrieval,
    "multi_niah": gen_multi_niah,
    "majority_vote": gen_aggregation,
    "top_n_vote": gen_aggregation,
}


def generate(spec: TaskSpec, counter: TokenCounter = default_token_counter) -> TaskInstance:
    return _GENERATORS[spec.category](spec, counter)


def generate_batch(
    specs: Iterable[TaskSpec], counter: TokenCounter = default_token_counter
) -> list[TaskInstance]:
    return [generate(spec, counter) for spec in specs]


def task_to_dict(task: TaskInstance) -> dict:
    return {
        "id": task.id,
        "category": task.category,
        "prompt": task.prompt,
        "gold_answers": task.gold_answers,
        "gold_intervals": [[iv.start, iv.end] for iv in task.gold_intervals],
        "metadata": task.metadata,
    }


def task_from_dict(obj: dict) -> TaskInstance:
    return TaskInstance(
        id=obj["id"],
        category=obj["category"],
        prompt=obj["prompt"],
        gold_answers=list(obj["gold_answers"]),
        gold_intervals=[CharInterval(int(s), int(e)) for s, e in obj["gold_intervals"]],
        metadata=dict(obj.get("metadata", {})),
    )


def write_tasks_jsonl(tasks: Iterable[TaskInstance], out: IO[str]) -> None:
    for task in tasks:
        out.write(json.dumps(task_to_dict(task), ensure_ascii=False) + "\n")


def read_tasks_jsonl(path: str) -> list[TaskInstance]:
    tasks = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                tasks.append(task_from_dict(json.loads(line)))
    return tasks
