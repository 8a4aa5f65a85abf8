"""Topic sets, the fitted topic model, and the two topic samplers.

The model holds three pieces learned from labeled threads: a distribution
over topic-set sizes, a distribution over topics (probability a topic shows
up, weighted by how many threads carry it), and symmetric co-occurrence
counts feeding an add-one smoothed conditional.
"""
from __future__ import annotations

import json
import logging
import random
import warnings
from dataclasses import dataclass, field
from typing import Sequence

from .llm import Gateway, render_prompt, truncate_to_budget
from .prompts import TOPIC_EXTRACTION
from .threads import Thread, serialize_thread

logger = logging.getLogger(__name__)

# Hard cap on sampling work: after this many weighted draws per requested
# topic the sampler declares the request infeasible instead of spinning.
MAX_DRAWS_PER_TOPIC = 100


class SamplingInfeasibleError(RuntimeError):
    pass


class ExtractionFailedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TopicSet:
    """Distinct topic strings for one thread, in a stable order."""

    topics: tuple[str, ...]
    community: str = ""

    def __post_init__(self):
        if not self.topics:
            raise ValueError("a topic set needs at least one topic")
        if len(set(self.topics)) != len(self.topics):
            raise ValueError("duplicate topics")
        if any(not t.strip() for t in self.topics):
            raise ValueError("blank topic")

    def as_csv(self) -> str:
        return ", ".join(self.topics)


@dataclass
class TopicModel:
    """Fitted distributions; treat as immutable once built.

    cooccurrence keys are sorted (a, b) pairs, each unordered pair counted at
    most once per thread. per_topic_totals[x] is the sum of x's co-occurrence
    counts with everything else.
    """

    length_dist: dict[int, float]
    topic_dist: dict[str, float]
    cooccurrence: dict[tuple[str, str], int] = field(default_factory=dict)
    per_topic_totals: dict[str, int] = field(default_factory=dict)

    @property
    def vocab_size(self) -> int:
        return len(self.topic_dist)

    def freq(self, a: str, b: str) -> int:
        if a == b:
            raise ValueError("co-occurrence of a topic with itself is undefined")
        key = (a, b) if a <= b else (b, a)
        return self.cooccurrence.get(key, 0)

    def to_json(self) -> str:
        payload = {
            "length_dist": {str(k): v for k, v in self.length_dist.items()},
            "topic_dist": self.topic_dist,
            "cooccurrence": [[a, b, c] for (a, b), c in sorted(self.cooccurrence.items())],
            "per_topic_totals": self.per_topic_totals,
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TopicModel":
        payload = json.loads(text)
        return cls(
            length_dist={int(k): float(v) for k, v in payload["length_dist"].items()},
            topic_dist={k: float(v) for k, v in payload["topic_dist"].items()},
            cooccurrence={(a, b): int(c) for a, b, c in payload["cooccurrence"]},
            per_topic_totals={k: int(v) for k, v in payload["per_topic_totals"].items()},
        )


def fit_topic_model(labeled_threads: Sequence[tuple[Thread, TopicSet]]) -> TopicModel:
    """Estimate the model from (thread, topic set) pairs.

    Lengths count distinct topics per thread. The topic distribution weights
    each topic by the number of threads carrying it, normalized by the total
    number of topic slots. Keys are sorted so iteration order is canonical.
    """
    if not labeled_threads:
        raise ValueError("no labeled threads")
    length_counts: dict[int, int] = {}
    topic_thread_counts: dict[str, int] = {}
    cooccurrence: dict[tuple[str, str], int] = {}
    total_slots = 0
    for _, topic_set in labeled_threads:
        topics = topic_set.topics
        length_counts[len(topics)] = length_counts.get(len(topics), 0) + 1
        total_slots += len(topics)
        for t in topics:
            topic_thread_counts[t] = topic_thread_counts.get(t, 0) + 1
        distinct = sorted(topics)
        for i in range(len(distinct)):
            for j in range(i + 1, len(distinct)):
                key = (distinct[i], distinct[j])
                cooccurrence[key] = cooccurrence.get(key, 0) + 1

    n = len(labeled_threads)
    length_dist = {k: length_counts[k] / n for k in sorted(length_counts)}
    topic_dist = {t: topic_thread_counts[t] / total_slots for t in sorted(topic_thread_counts)}
    per_topic_totals = {t: 0 for t in topic_dist}
    for (a, b), c in cooccurrence.items():
        per_topic_totals[a] += c
        per_topic_totals[b] += c
    return TopicModel(
        length_dist=length_dist,
        topic_dist=topic_dist,
        cooccurrence=cooccurrence,
        per_topic_totals=per_topic_totals,
    )


def conditional_prob(model: TopicModel, given: str, nxt: str) -> float:
    """Add-one smoothed probability of drawing nxt after given."""
    if given == nxt:
        raise ValueError("conditional of a topic given itself is undefined")
    if given not in model.topic_dist:
        raise KeyError(given)
    if nxt not in model.topic_dist:
        raise KeyError(nxt)
    numerator = model.freq(given, nxt) + 1
    denominator = model.per_topic_totals.get(given, 0) + model.vocab_size - 1
    return numerator / denominator


def conditional_dist(model: TopicModel, given: str) -> tuple[list[str], list[float]]:
    """All candidates x != given with their smoothed conditionals; sums to 1."""
    labels = [t for t in model.topic_dist if t != given]
    probs = [conditional_prob(model, given, t) for t in labels]
    return labels, probs


def _weighted_draw(rng: random.Random, dist: dict) -> object:
    labels = list(dist.keys())
    weights = list(dist.values())
    return rng.choices(labels, weights=weights, k=1)[0]


def _draw_length(model: TopicModel, rng: random.Random) -> int:
    m = int(_weighted_draw(rng, model.length_dist))
    if m > model.vocab_size:
        warnings.warn(
            f"requested {m} distinct topics from a vocabulary of {model.vocab_size}; clamping",
            stacklevel=3,
        )
        m = model.vocab_size
    return max(m, 1)


def sample_topics_independent(
    model: TopicModel, rng: random.Random, community: str = ""
) -> TopicSet:
    """Draw a size, then draw topics independently until that many are distinct."""
    m = _draw_length(model, rng)
    chosen: list[str] = []
    seen: set[str] = set()
    draws = 0
    while len(chosen) < m:
        draws += 1
        if draws > MAX_DRAWS_PER_TOPIC * m:
            raise SamplingInfeasibleError(
                f"could not collect {m} distinct topics in {draws - 1} draws"
            )
        topic = _weighted_draw(rng, model.topic_dist)
        if topic not in seen:
            seen.add(topic)
            chosen.append(topic)
    return TopicSet(tuple(chosen), community)


def sample_topics_conditional(
    model: TopicModel, rng: random.Random, community: str = ""
) -> TopicSet:
    """Draw the first topic marginally, then extend via conditionals.

    Each step picks a pivot uniformly from the topics sampled so far and draws
    the next topic from the pivot's smoothed conditional distribution.
    """
    m = _draw_length(model, rng)
    first = _weighted_draw(rng, model.topic_dist)
    chosen: list[str] = [first]
    seen: set[str] = {first}
    draws = 0
    while len(chosen) < m:
        draws += 1
        if draws > MAX_DRAWS_PER_TOPIC * m:
            raise SamplingInfeasibleError(
                f"could not collect {m} distinct topics in {draws - 1} draws"
            )
        pivot = chosen[rng.randrange(len(chosen))]
        labels, probs = conditional_dist(model, pivot)
        topic = rng.choices(labels, weights=probs, k=1)[0]
        if topic not in seen:
            seen.add(topic)
            chosen.append(topic)
    return TopicSet(tuple(chosen), community)


def parse_topic_completion(completion: str) -> tuple[str, ...]:
    """First non-blank line split on commas, trimmed, deduplicated in order."""
    for line in completion.splitlines():
        line = line.strip()
        if not line:
            continue
        seen: set[str] = set()
        topics: list[str] = []
        for raw in line.split(","):
            t = raw.strip()
            if t and t not in seen:
                seen.add(t)
                topics.append(t)
        return tuple(topics)
    return ()


def extract_topics(
    thread: Thread,
    gateway: Gateway,
    exemplars: Sequence[tuple[str, str]],
    max_output_tokens: int = 64,
) -> TopicSet:
    """Ask the LLM for a comma-separated topic list for one thread.

    Exemplars are (thread_text, topics_csv) pairs. The thread text is the
    fielded format without a topics line, truncated along post boundaries to
    the gateway's context budget.
    """
    if not exemplars:
        raise ValueError("at least one exemplar required")
    rendered = serialize_thread(thread, include_topics=False)
    title_line, *post_lines = rendered.split("\n")
    budget = max(1, gateway.context_budget - len(gateway.tokenizer(title_line)))
    kept = truncate_to_budget(post_lines, budget, gateway.tokenizer)
    thread_text = "\n".join([title_line, *kept])
    prompt = render_prompt(TOPIC_EXTRACTION, list(exemplars), thread_text)
    completion = gateway.complete_text(prompt, max_output_tokens=max_output_tokens)
    topics = parse_topic_completion(completion)
    if not topics:
        raise ExtractionFailedError(
            f"no topics in completion: {completion[:120]!r}"
        )
    return TopicSet(topics, thread.community)
