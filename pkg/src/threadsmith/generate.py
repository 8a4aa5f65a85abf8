"""Thread generation: baseline few-shot, scaffolding, and content fill-in.

Three routes produce threads. Baseline asks for a whole thread at once.
The scaffold route first generates a thread whose bodies are third-person
summaries, then fills in post contents one at a time, walking the tree in
posting order with the generated parent chain as context.
"""
from __future__ import annotations

import logging
import random
import re
from dataclasses import dataclass, replace
from typing import Callable, Sequence

from .llm import Gateway, GatewayError, render_prompt, truncate_to_budget, whitespace_tokenize
from .prompts import (
    FIRST_POST,
    NEXT_POST,
    SUMMARIZATION,
    build_first_post_input,
    build_next_post_input,
    scaffold_generation_template,
    thread_generation_template,
)
from .threads import (
    Scaffold,
    Thread,
    ValidityReport,
    flatten_ws,
    reply_chain,
    serialize_thread,
    validate_structure,
    validate_thread_text,
)
from .topics import TopicSet

logger = logging.getLogger(__name__)


class EmptyCompletionError(RuntimeError):
    pass


@dataclass(frozen=True)
class GenerationConfig:
    mode: str = "scaffold-fewshot"  # "baseline" or "scaffold-fewshot"
    content_mode: str = "few-shot"  # "zero-shot" or "few-shot"
    num_examples: int = 2
    platform: str = "reddit"
    max_thread_tokens: int = 1024
    max_scaffold_tokens: int = 1024
    max_post_tokens: int = 256
    max_summary_tokens: int = 128
    # "per-post" resamples content exemplars for every post; "per-thread"
    # samples once and reuses them for the whole thread.
    content_example_resampling: str = "per-post"

    def __post_init__(self):
        if self.mode not in ("baseline", "scaffold-fewshot"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.content_mode not in ("zero-shot", "few-shot"):
            raise ValueError(f"unknown content mode {self.content_mode!r}")
        if self.num_examples < 0:
            raise ValueError("num_examples must be >= 0")
        if self.content_example_resampling not in ("per-post", "per-thread"):
            raise ValueError("content_example_resampling must be per-post or per-thread")


@dataclass(frozen=True)
class GenerationOutcome:
    """One attempt. thread is present only when the completion was valid;
    failure carries operational errors (gateway, empty completion)."""

    raw_completion: str
    validity: ValidityReport
    thread: Thread | None = None
    stage_transcript: tuple[tuple[str, str], ...] = ()
    failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.thread is not None


_FORMAT_LINE = re.compile(r"\A(topics:|title:)")


def _looks_like_format_line(line: str) -> bool:
    s = line.strip()
    return bool(_FORMAT_LINE.match(s)) or len(s.split(" # ", 3)) == 4


def trim_completion(text: str) -> str:
    """Drop trailing chatter: keep leading blank-line blocks whose every line
    matches the thread grammar, stop at the first block that does not."""
    blocks: list[list[str]] = [[]]
    for line in text.splitlines():
        if line.strip():
            blocks[-1].append(line)
        elif blocks[-1]:
            blocks.append([])
    blocks = [b for b in blocks if b]
    kept: list[str] = []
    for block in blocks:
        if not all(_looks_like_format_line(line) for line in block):
            break
        kept.extend(block)
    if not kept:
        return text
    return "\n".join(kept)


def _completion_outcome(
    completion: str,
    topics: TopicSet,
    transcript: tuple[tuple[str, str], ...],
) -> GenerationOutcome:
    trimmed = trim_completion(completion)
    thread, report = validate_thread_text(trimmed, expect_topics_line=False)
    if thread is None or not report.is_valid:
        return GenerationOutcome(
            raw_completion=completion,
            validity=report,
            stage_transcript=transcript,
        )
    thread = replace(thread, topics=topics.topics, community=topics.community)
    return GenerationOutcome(
        raw_completion=completion,
        validity=report,
        thread=thread,
        stage_transcript=transcript,
    )


def _example_pairs(threads: Sequence[Thread]) -> list[tuple[str, str]]:
    return [
        (", ".join(t.topics), serialize_thread(t, include_topics=False))
        for t in threads
    ]


def generate_thread_baseline(
    topics: TopicSet,
    train_threads: Sequence[Thread],
    gateway: Gateway,
    config: GenerationConfig,
    rng: random.Random,
) -> GenerationOutcome:
    """One-shot whole-thread generation with freshly sampled exemplars."""
    if config.num_examples > len(train_threads):
        raise ValueError(
            f"need {config.num_examples} example threads, have {len(train_threads)}"
        )
    examples = rng.sample(list(train_threads), config.num_examples)
    prompt = render_prompt(
        thread_generation_template(config.platform),
        _example_pairs(examples),
        topics.as_csv(),
    )
    completion = gateway.complete_text(prompt, max_output_tokens=config.max_thread_tokens)
    return _completion_outcome(completion, topics, ((prompt, completion),))


def generate_scaffold_fewshot(
    topics: TopicSet,
    example_scaffolds: Sequence[Scaffold],
    gateway: Gateway,
    config: GenerationConfig,
    rng: random.Random,
) -> GenerationOutcome:
    """Whole-scaffold generation; bodies are expected to be summaries."""
    if config.num_examples > len(example_scaffolds):
        raise ValueError(
            f"need {config.num_examples} example scaffolds, have {len(example_scaffolds)}"
        )
    examples = rng.sample(list(example_scaffolds), config.num_examples)
    prompt = render_prompt(
        scaffold_generation_template(config.platform),
        _example_pairs(examples),
        topics.as_csv(),
    )
    completion = gateway.complete_text(prompt, max_output_tokens=config.max_scaffold_tokens)
    return _completion_outcome(completion, topics, ((prompt, completion),))


_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


def _first_paragraph(completion: str) -> str:
    for chunk in completion.split("\n\n"):
        text = flatten_ws(chunk)
        if text:
            return text
    return ""


def summarize_post(
    post_body: str,
    exemplars: Sequence[tuple[str, str]],
    gateway: Gateway,
    max_output_tokens: int = 128,
) -> str:
    """Third-person one-line summary of a post body.

    Exemplars are (post, summary) pairs. Long bodies are truncated along
    sentence boundaries to the gateway budget. A summary that does not start
    with "The user" is accepted but logged.
    """
    if not exemplars:
        raise ValueError("at least one exemplar required")
    sentences = _SENTENCE_SPLIT.split(flatten_ws(post_body))
    kept = truncate_to_budget(sentences, gateway.context_budget, gateway.tokenizer)
    body = " ".join(kept) if kept else flatten_ws(post_body)
    prompt = render_prompt(SUMMARIZATION, list(exemplars), body)
    completion = gateway.complete_text(prompt, max_output_tokens=max_output_tokens)
    summary = _first_paragraph(completion)
    if not summary:
        raise EmptyCompletionError("summarizer returned nothing usable")
    if not summary.startswith("The user"):
        logger.warning("summary does not start with 'The user': %r", summary[:80])
    return summary


def build_scaffold_from_thread(
    thread: Thread,
    gateway: Gateway,
    exemplars: Sequence[tuple[str, str]],
    max_output_tokens: int = 128,
) -> Scaffold:
    """Summarize every post, keeping ids, users, parents, title and topics."""
    posts = tuple(
        replace(p, body=summarize_post(p.body, exemplars, gateway, max_output_tokens))
        for p in thread.posts
    )
    return replace(thread, posts=posts)


def generate_content(
    scaffold: Scaffold,
    exemplar_pairs: Sequence[tuple[str, str]],
    gateway: Gateway,
    config: GenerationConfig,
    rng: random.Random,
) -> GenerationOutcome:
    """Fill in post bodies for a scaffold, in posting order.

    exemplar_pairs are (summary, post_text) pairs used in few-shot content
    mode. Replies see the generated bodies of their parent chain rendered as
    "{user}: {content}" lines, truncated along post boundaries. The structure
    (ids, users, parents) of the scaffold is preserved exactly. Per-post
    gateway failures abort the thread and are recorded in the outcome.
    """
    report = validate_structure(scaffold)
    if not report.is_valid:
        raise ValueError(f"invalid scaffold: {report.violations}")
    if config.content_mode == "few-shot" and not exemplar_pairs:
        raise ValueError("few-shot content mode needs exemplar pairs")

    def pick_examples() -> list[tuple[str, str]]:
        if config.content_mode == "zero-shot":
            return []
        k = min(config.num_examples, len(exemplar_pairs))
        return rng.sample(list(exemplar_pairs), k)

    fixed_examples = pick_examples()
    topics_csv = ", ".join(scaffold.topics)
    bodies: dict[str, str] = {}
    transcript: list[tuple[str, str]] = []
    for i, sp in enumerate(scaffold.posts):
        examples = (
            pick_examples()
            if config.content_example_resampling == "per-post"
            else fixed_examples
        )
        if i == 0:
            template = FIRST_POST
            task_input = build_first_post_input(topics_csv, sp.body)
        else:
            template = NEXT_POST
            chain = reply_chain(scaffold, sp.parent_id)
            lines = [f"{p.user_id}: {bodies[p.post_id]}" for p in chain]
            lines = truncate_to_budget(lines, gateway.context_budget, gateway.tokenizer)
            task_input = build_next_post_input(topics_csv, lines, sp.body)
        prompt = render_prompt(template, examples, task_input)
        try:
            completion = gateway.complete_text(prompt, max_output_tokens=config.max_post_tokens)
        except GatewayError as err:
            return GenerationOutcome(
                raw_completion="",
                validity=ValidityReport(),
                stage_transcript=tuple(transcript),
                failure=f"gateway failure at {sp.post_id}: {err}",
            )
        transcript.append((prompt, completion))
        body = _first_paragraph(completion)
        if not body:
            return GenerationOutcome(
                raw_completion=completion,
                validity=ValidityReport(),
                stage_transcript=tuple(transcript),
                failure=f"empty completion at {sp.post_id}",
            )
        bodies[sp.post_id] = body

    posts = tuple(replace(p, body=bodies[p.post_id]) for p in scaffold.posts)
    thread = replace(scaffold, posts=posts)
    return GenerationOutcome(
        raw_completion=transcript[-1][1] if transcript else "",
        validity=validate_structure(thread),
        thread=thread,
        stage_transcript=tuple(transcript),
    )


def rouge_l_f(
    reference: str,
    generated: str,
    tokenizer: Callable[[str], list[str]] = whitespace_tokenize,
) -> float:
    """ROUGE-L F-measure on tokens: harmonic mean of LCS precision and recall."""
    ref = tokenizer(reference)
    gen = tokenizer(generated)
    if not ref or not gen:
        return 0.0
    prev = [0] * (len(gen) + 1)
    for r in ref:
        cur = [0] * (len(gen) + 1)
        for j, g in enumerate(gen, start=1):
            if r == g:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    lcs = prev[-1]
    if lcs == 0:
        return 0.0
    precision = lcs / len(gen)
    recall = lcs / len(ref)
    return 2 * precision * recall / (precision + recall)


def validity_metric(
    generated_texts: Sequence[str],
    reference_texts: Sequence[str],
    alpha: float = 0.5,
    rouge_fn: Callable[[str, str], float] | None = None,
) -> float:
    """Mean of alpha * overlap(reference, generated) + (1 - alpha) * valid.

    valid is 1 when the generated text parses and passes structure validation,
    else 0. The overlap function defaults to ROUGE-L F on whitespace tokens
    and must map to [0, 1].
    """
    if len(generated_texts) != len(reference_texts):
        raise ValueError("batch lengths differ")
    if not generated_texts:
        raise ValueError("empty batch")
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must be in [0, 1]")
    rouge = rouge_fn or rouge_l_f
    total = 0.0
    for ref, gen in zip(reference_texts, generated_texts):
        _, report = validate_thread_text(gen)
        valid = 1.0 if report.is_valid else 0.0
        total += alpha * rouge(ref, gen) + (1 - alpha) * valid
    return total / len(generated_texts)


def scaffold_training_record(scaffold: Scaffold) -> dict[str, str]:
    """One fine-tuning corpus record: community prefix line plus the scaffold."""
    text = f"subreddit: {scaffold.community}\n" + serialize_thread(scaffold, include_topics=True)
    return {"text": text}
