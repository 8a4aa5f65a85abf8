"""Realism scoring of threads via an LLM judge over discussion paths.

A discussion path is a contiguous parent-to-child chain starting at the
opening post. Paths are rendered as TITLE/POST/REPLY lines and judged for
coherence; the score is the coherent fraction. Meta-evaluation corrupts
paths by swapping bodies with same-community, same-depth posts from other
threads and measures the judge's F1 per community.
"""
from __future__ import annotations

import logging
import random
import re
from dataclasses import dataclass, replace
from typing import Callable, Sequence

from .llm import Gateway, render_prompt
from .prompts import COHERENCE_JUDGE
from .threads import Post, Thread, flatten_ws, reply_chain

logger = logging.getLogger(__name__)


class JudgeParseError(RuntimeError):
    pass


class NoJudgmentsError(RuntimeError):
    pass


class CorruptionInfeasibleError(RuntimeError):
    pass


@dataclass(frozen=True)
class DiscussionPath:
    """A root-anchored reply chain from one thread. Post i sits at depth i."""

    thread_index: int
    community: str
    title: str
    posts: tuple[Post, ...]

    def __post_init__(self):
        if not self.posts:
            raise ValueError("empty path")

    @property
    def length(self) -> int:
        return len(self.posts)


@dataclass(frozen=True)
class JudgeExample:
    path_text: str
    explanation: str
    coherent: bool

    def rendered_output(self) -> str:
        verdict = "yes" if self.coherent else "no"
        return f"EXPLANATION: {self.explanation}\nANSWER: The answer is {verdict}."


# Hand-written defaults: five coherent and five incoherent mini-discussions.
def _ex(title: str, lines: list[str], explanation: str, coherent: bool) -> JudgeExample:
    return JudgeExample("\n".join([f"TITLE: {title}", *lines]), explanation, coherent)


DEFAULT_JUDGE_EXAMPLES: tuple[JudgeExample, ...] = (
    _ex(
        "Best way to sharpen kitchen knives?",
        [
            "POST[user-1]: My knives are dull. Whetstone or pull-through sharpener?",
            "REPLY[user-2]: Whetstone if you have ten minutes to learn. Pull-throughs eat the edge.",
            "REPLY[user-1]: Thanks, any grit you recommend to start with?",
        ],
        "The reply answers the question and the follow-up asks for a relevant detail. The exchange flows naturally.",
        True,
    ),
    _ex(
        "Laptop will not boot after update",
        [
            "POST[user-1]: Installed the latest update and now I get a black screen.",
            "REPLY[user-2]: Try holding the power button for 20 seconds to force a reset.",
            "REPLY[user-1]: That worked, it booted into recovery. Thanks!",
        ],
        "A problem is stated, a concrete fix is offered, and the outcome is reported back. Each post builds on its parent.",
        True,
    ),
    _ex(
        "Is this tomato plant overwatered?",
        [
            "POST[user-1]: Leaves are yellowing from the bottom up, soil stays wet for days.",
            "REPLY[user-2]: Classic overwatering. Let the top inch dry out before watering again.",
        ],
        "The reply directly diagnoses the symptoms described in the post. The discussion is coherent.",
        True,
    ),
    _ex(
        "Weekly check-in: what are you reading?",
        [
            "POST[user-1]: Just finished a sci-fi trilogy, looking for something slower now.",
            "REPLY[user-2]: Try literary fiction, something like a quiet family saga.",
            "REPLY[user-3]: Seconding that, and short stories are great palate cleansers.",
        ],
        "Both replies respond to the request with fitting suggestions and even reference each other. Coherent.",
        True,
    ),
    _ex(
        "Car makes clicking noise when turning left",
        [
            "POST[user-1]: Only when turning left at speed. Right turns are silent.",
            "REPLY[user-2]: Sounds like a failing CV joint on the right side. Get the boot checked.",
            "REPLY[user-1]: Mechanic confirmed it, boot was torn. Appreciate it.",
        ],
        "The reply gives a plausible diagnosis for the described symptom and the follow-up confirms it. Realistic thread.",
        True,
    ),
    _ex(
        "Best budget microphone for podcasting?",
        [
            "POST[user-1]: Two-person podcast, small room, under 200 total.",
            "REPLY[user-2]: My sourdough starter doubles in four hours at room temperature.",
        ],
        "The reply is about baking and has no connection to the microphone question. The discussion is not coherent.",
        False,
    ),
    _ex(
        "How do I split rent fairly with roommates?",
        [
            "POST[user-1]: Rooms are different sizes, we want a fair split.",
            "REPLY[user-2]: Weight each room by area and split the common space evenly.",
            "REPLY[user-1]: The boss fight in chapter three is way too hard on keyboard.",
        ],
        "The second reply ignores the rent discussion entirely and talks about a video game. Incoherent continuation.",
        False,
    ),
    _ex(
        "Recommendations for a first telescope",
        [
            "POST[user-1]: Mostly moon and planets, maybe some deep sky later.",
            "REPLY[user-2]: A 6-inch Dobsonian is the usual starter advice.",
            "REPLY[user-3]: I agree, and the warranty on mine covered the dent from shipping.",
            "REPLY[user-1]: Does anyone know if parrots can eat cucumber?",
        ],
        "The last reply switches to pet care with no link to telescopes. The path breaks down at the end.",
        False,
    ),
    _ex(
        "Marathon training with shin splints",
        [
            "POST[user-1]: Week 6 of training and my shins are killing me.",
            "REPLY[user-2]: Yes, the museum is open on Mondays but closes early.",
        ],
        "The reply answers a completely different question about museum hours. Not a realistic exchange.",
        False,
    ),
    _ex(
        "Fixing a leaky kitchen faucet",
        [
            "POST[user-1]: Drips from the handle when the water is on.",
            "REPLY[user-2]: Replace the cartridge, it is a ten minute job.",
            "REPLY[user-1]: My cat walked across the keyboard and ordered three of them.",
            "REPLY[user-2]: The moon landing footage was remastered in 2019.",
        ],
        "The thread starts on topic but the last two posts are unrelated non sequiturs. The path is incoherent.",
        False,
    ),
)


@dataclass(frozen=True)
class RealismConfig:
    n_threads: int = 100
    paths_per_thread: int = 5
    max_path_len: int = 4  # counts posts
    meta_paths_per_thread: int = 1
    judge_examples: tuple[JudgeExample, ...] = DEFAULT_JUDGE_EXAMPLES
    max_judge_tokens: int = 256

    def __post_init__(self):
        if self.n_threads < 1 or self.paths_per_thread < 1 or self.max_path_len < 1:
            raise ValueError("realism config values must be >= 1")


def candidate_paths(thread: Thread, max_path_len: int) -> list[tuple[Post, ...]]:
    """All root-anchored reply chains with at most max_path_len posts."""
    chains: dict[str, tuple[Post, ...]] = {}
    out: list[tuple[Post, ...]] = []
    for p in thread.posts:
        if p.is_opening:
            chain: tuple[Post, ...] = (p,)
        else:
            parent_chain = chains.get(p.parent_id)
            if parent_chain is None:
                parent_chain = reply_chain(thread, p.parent_id)
            chain = parent_chain + (p,)
        chains[p.post_id] = chain
        if len(chain) <= max_path_len:
            out.append(chain)
    return out


def sample_paths(
    threads: Sequence[Thread],
    config: RealismConfig,
    rng: random.Random,
    paths_per_thread: int | None = None,
) -> list[DiscussionPath]:
    """Up to n_threads threads without replacement, then per thread up to
    paths_per_thread paths, uniform over candidates (with replacement only
    when there are fewer distinct candidates than requested)."""
    if not threads:
        raise ValueError("no threads to sample from")
    m = paths_per_thread if paths_per_thread is not None else config.paths_per_thread
    indices = list(range(len(threads)))
    picked = rng.sample(indices, min(config.n_threads, len(indices)))
    paths: list[DiscussionPath] = []
    for i in picked:
        thread = threads[i]
        candidates = candidate_paths(thread, config.max_path_len)
        if not candidates:
            continue
        if len(candidates) >= m:
            chosen = rng.sample(candidates, m)
        else:
            chosen = rng.choices(candidates, k=m)
        for chain in chosen:
            paths.append(
                DiscussionPath(
                    thread_index=i,
                    community=thread.community,
                    title=thread.title,
                    posts=chain,
                )
            )
    return paths


def render_path(path: DiscussionPath) -> str:
    lines = [f"TITLE: {flatten_ws(path.title)}"]
    for i, p in enumerate(path.posts):
        tag = "POST" if i == 0 else "REPLY"
        lines.append(f"{tag}[{p.user_id}]: {flatten_ws(p.body)}")
    return "\n".join(lines)


@dataclass(frozen=True)
class Judgment:
    coherent: bool
    explanation: str
    prompt: str
    completion: str


_ANSWER_RE = re.compile(r"the answer is\s*:?\s*(yes|no)", re.IGNORECASE)


def judge_path(path: DiscussionPath, gateway: Gateway, config: RealismConfig) -> Judgment:
    """One coherence verdict. Raises JudgeParseError when no answer marker
    can be found in the completion."""
    examples = [
        ("\n" + e.path_text + "\n", e.rendered_output()) for e in config.judge_examples
    ]
    prompt = render_prompt(COHERENCE_JUDGE, examples, render_path(path))
    completion = gateway.complete_text(prompt, max_output_tokens=config.max_judge_tokens)
    match = _ANSWER_RE.search(completion)
    if match is None:
        raise JudgeParseError(f"no verdict in completion: {completion[:120]!r}")
    return Judgment(
        coherent=match.group(1).lower() == "yes",
        explanation=completion.strip(),
        prompt=prompt,
        completion=completion,
    )


@dataclass(frozen=True)
class RealismScore:
    score: float
    n_judged: int
    n_coherent: int
    n_parse_errors: int


def realism_score(
    threads: Sequence[Thread],
    gateway: Gateway,
    config: RealismConfig,
    rng: random.Random,
    transcript_sink: Callable[[dict], None] | None = None,
) -> RealismScore:
    """Coherent fraction over sampled paths. Judgments whose completions
    cannot be parsed are dropped from the denominator and counted."""
    paths = sample_paths(threads, config, rng)
    if not paths:
        raise ValueError("no discussion paths could be sampled")
    judged = coherent = errors = 0
    for path in paths:
        try:
            judgment = judge_path(path, gateway, config)
        except JudgeParseError:
            errors += 1
            continue
        judged += 1
        coherent += int(judgment.coherent)
        if transcript_sink is not None:
            transcript_sink(
                {
                    "stage": "judge-path",
                    "community": path.community,
                    "thread_index": path.thread_index,
                    "prompt": judgment.prompt,
                    "completion": judgment.completion,
                    "verdict": judgment.coherent,
                }
            )
    if judged == 0:
        raise NoJudgmentsError(f"all {errors} judgments were unparseable")
    if errors:
        logger.warning("%d of %d judgments were unparseable", errors, errors + judged)
    return RealismScore(
        score=coherent / judged,
        n_judged=judged,
        n_coherent=coherent,
        n_parse_errors=errors,
    )


PostPool = dict[str, dict[int, list[tuple[int, str]]]]


def build_post_pool(threads: Sequence[Thread]) -> PostPool:
    """community -> depth -> [(thread_index, body)] for corruption sampling."""
    pool: PostPool = {}
    for i, thread in enumerate(threads):
        depths: dict[str, int] = {}
        for p in thread.posts:
            depths[p.post_id] = 0 if p.is_opening else depths[p.parent_id] + 1
            pool.setdefault(thread.community, {}).setdefault(depths[p.post_id], []).append(
                (i, p.body)
            )
    return pool


def corrupt_path(
    path: DiscussionPath,
    pool: PostPool,
    rng: random.Random,
    n_corrupt: int = 1,
) -> DiscussionPath:
    """Swap the bodies of randomly chosen posts with same-community,
    same-depth posts from other threads. Ids, users and parents stay put."""
    if n_corrupt < 1:
        raise ValueError("n_corrupt must be >= 1")
    positions = rng.sample(range(path.length), min(n_corrupt, path.length))
    posts = list(path.posts)
    for pos in sorted(positions):
        original = posts[pos]
        candidates = [
            body
            for (t_idx, body) in pool.get(path.community, {}).get(pos, [])
            if t_idx != path.thread_index and body != original.body
        ]
        if not candidates:
            raise CorruptionInfeasibleError(
                f"no replacement for {path.community!r} depth {pos}"
            )
        posts[pos] = replace(original, body=candidates[rng.randrange(len(candidates))])
    return replace(path, posts=tuple(posts))


def meta_evaluate(
    threads: Sequence[Thread],
    gateway: Gateway,
    config: RealismConfig,
    rng: random.Random,
) -> dict[str, float]:
    """Judge real paths against corrupted twins; per-community F1.

    Coherent verdicts count as predicting "real". Pairs whose corruption is
    infeasible are dropped (keeping the set balanced); communities with no
    feasible pairs are skipped with a warning.
    """
    paths = sample_paths(threads, config, rng, paths_per_thread=config.meta_paths_per_thread)
    pool = build_post_pool(threads)
    labeled: list[tuple[DiscussionPath, bool]] = []
    skipped = 0
    for path in paths:
        try:
            corrupted = corrupt_path(path, pool, rng)
        except CorruptionInfeasibleError:
            skipped += 1
            continue
        labeled.append((path, True))
        labeled.append((corrupted, False))
    if skipped:
        logger.warning("dropped %d paths with no feasible corruption", skipped)

    confusion: dict[str, dict[str, int]] = {}
    for path, is_real in labeled:
        try:
            judgment = judge_path(path, gateway, config)
        except JudgeParseError:
            continue
        cell = confusion.setdefault(path.community, {"tp": 0, "fp": 0, "fn": 0})
        if judgment.coherent and is_real:
            cell["tp"] += 1
        elif judgment.coherent and not is_real:
            cell["fp"] += 1
        elif not judgment.coherent and is_real:
            cell["fn"] += 1

    scores: dict[str, float] = {}
    for community in sorted(confusion):
        cell = confusion[community]
        denominator = 2 * cell["tp"] + cell["fp"] + cell["fn"]
        scores[community] = 2 * cell["tp"] / denominator if denominator else 0.0
    communities = {t.community for t in threads}
    for community in sorted(communities - set(scores)):
        logger.warning("community %r skipped: no feasible judged pairs", community)
    return scores
