"""Dataset interchange (JSONL), stratified sampling, and train/test splits.

One thread per line: {community, thread_id, title, topics?, posts: [{id,
user, parent, content}]}. Post bodies keep their newlines here; flattening
happens only in the prompt text format.
"""
from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

from .threads import Thread, normalize_post_ids

logger = logging.getLogger(__name__)


class DataError(RuntimeError):
    pass


@dataclass
class Dataset:
    """Threads grouped by community, with per-thread ids kept for provenance."""

    communities: dict[str, list[Thread]] = field(default_factory=dict)
    ids: dict[str, list[str]] = field(default_factory=dict)
    source: str = ""
    filters: tuple[str, ...] = ()

    def add(self, thread: Thread, thread_id: str | None = None) -> None:
        if not thread.community:
            raise DataError("thread has no community label")
        rows = self.communities.setdefault(thread.community, [])
        id_rows = self.ids.setdefault(thread.community, [])
        rows.append(thread)
        id_rows.append(thread_id if thread_id is not None else f"t{len(rows)}")

    def community_names(self) -> list[str]:
        return sorted(self.communities)

    @property
    def n_threads(self) -> int:
        return sum(len(v) for v in self.communities.values())

    def subset(self, communities: Sequence[str]) -> "Dataset":
        missing = [c for c in communities if c not in self.communities]
        if missing:
            raise DataError(f"unknown communities: {missing}")
        return Dataset(
            communities={c: list(self.communities[c]) for c in communities},
            ids={c: list(self.ids[c]) for c in communities},
            source=self.source,
            filters=self.filters,
        )


def iter_records(path: str | Path) -> Iterator[tuple[int, dict]]:
    """(line number, parsed record) per non-blank line; bad JSON is logged
    and skipped."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            logger.warning("%s:%d: bad JSON (%s), skipped", path, lineno, exc.msg)
            continue
        if not isinstance(record, dict):
            logger.warning("%s:%d: record is not an object, skipped", path, lineno)
            continue
        yield lineno, record


def record_to_thread(record: dict) -> tuple[str, Thread]:
    """(thread_id, Thread) from one interchange record; DataError on any
    schema or structure violation."""
    community = record.get("community")
    if not isinstance(community, str) or not community.strip():
        raise DataError("missing or empty community")
    thread_id = str(record.get("thread_id", "")).strip()
    if not thread_id:
        raise DataError("missing thread_id")
    title = record.get("title")
    if not isinstance(title, str) or not title.strip():
        raise DataError("missing or empty title")
    posts = record.get("posts")
    if not isinstance(posts, list) or not posts:
        raise DataError("missing or empty posts")
    raw = []
    for i, p in enumerate(posts):
        if not isinstance(p, dict):
            raise DataError(f"post {i} is not an object")
        try:
            raw.append((p["id"], p["user"], p.get("parent"), p["content"]))
        except KeyError as exc:
            raise DataError(f"post {i} missing field {exc.args[0]!r}") from exc
    try:
        normalized = normalize_post_ids(raw)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    topics = record.get("topics", [])
    if topics and (
        not isinstance(topics, list) or not all(isinstance(t, str) for t in topics)
    ):
        raise DataError("topics must be a list of strings")
    thread = Thread(
        title=title.strip(),
        posts=normalized,
        topics=tuple(t.strip() for t in topics if t.strip()),
        community=community.strip(),
    )
    return thread_id, thread


def load_dataset(path: str | Path) -> Dataset:
    """Load interchange JSONL, dropping and logging invalid or duplicate
    records. Raises DataError when the file is unreadable or nothing loads."""
    dataset = Dataset(source=str(path))
    seen: set[tuple[str, str]] = set()
    dropped = 0
    for lineno, record in iter_records(path):
        try:
            thread_id, thread = record_to_thread(record)
        except DataError as exc:
            logger.warning("%s:%d: %s, dropped", path, lineno, exc)
            dropped += 1
            continue
        key = (thread.community, thread_id)
        if key in seen:
            logger.warning("%s:%d: duplicate thread %s, dropped", path, lineno, key)
            dropped += 1
            continue
        seen.add(key)
        dataset.add(thread, thread_id)
    if dataset.n_threads == 0:
        raise DataError(f"no valid threads in {path} ({dropped} dropped)")
    if dropped:
        logger.info("loaded %d threads from %s (%d dropped)", dataset.n_threads, path, dropped)
    return dataset


def thread_to_record(community: str, thread_id: str, thread: Thread) -> dict:
    record = {
        "community": community,
        "thread_id": thread_id,
        "title": thread.title,
        "posts": [
            {"id": p.post_id, "user": p.user_id, "parent": p.parent_id, "content": p.body}
            for p in thread.posts
        ],
    }
    if thread.topics:
        record["topics"] = list(thread.topics)
    return record


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write interchange JSONL, communities in sorted order."""
    path = Path(path)
    lines = []
    for community in dataset.community_names():
        for thread_id, thread in zip(dataset.ids[community], dataset.communities[community]):
            lines.append(
                json.dumps(
                    thread_to_record(community, thread_id, thread),
                    ensure_ascii=False,
                    sort_keys=True,
                )
            )
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


# Size-stratified thread sampling: group threads by post count, keep up to
# n_m per group where n_m = 300 (+200 for groups bigger than 1000).
SIZE_GROUP_BASE = 300
SIZE_GROUP_BONUS = 200
SIZE_GROUP_THRESHOLD = 1000


def stratified_sample_by_size(threads: Sequence[Thread], rng: random.Random) -> list[Thread]:
    groups: dict[int, list[Thread]] = {}
    for t in threads:
        groups.setdefault(len(t.posts), []).append(t)
    out: list[Thread] = []
    for size in sorted(groups):
        pool = groups[size]
        quota = SIZE_GROUP_BASE + (SIZE_GROUP_BONUS if len(pool) > SIZE_GROUP_THRESHOLD else 0)
        if len(pool) <= quota:
            out.extend(pool)
        else:
            out.extend(rng.sample(pool, quota))
    return out


@dataclass(frozen=True)
class CommunityStats:
    community: str
    n_threads: int
    n_comments: int
    n_users: int
    avg_thread_length: float  # posts per thread
    avg_depth: float  # max depth per thread, averaged
    avg_total_chars: float
    avg_first_post_chars: float

    def is_eligible(self, min_threads: int = 100, min_comments: int = 100, min_users: int = 10) -> bool:
        return (
            self.n_threads >= min_threads
            and self.n_comments >= min_comments
            and self.n_users >= min_users
        )

    def metric(self, name: str) -> float:
        return getattr(self, name)


STRATIFICATION_METRICS = (
    "avg_thread_length",
    "avg_depth",
    "avg_total_chars",
    "avg_first_post_chars",
)


def community_stats(dataset: Dataset) -> list[CommunityStats]:
    out = []
    for community in dataset.community_names():
        threads = dataset.communities[community]
        users: set[str] = set()
        n_comments = 0
        lengths, depths, total_chars, first_chars = [], [], [], []
        for t in threads:
            users.update(p.user_id for p in t.posts)
            n_comments += len(t.posts) - 1
            lengths.append(len(t.posts))
            depth_of: dict[str, int] = {}
            for p in t.posts:
                depth_of[p.post_id] = 0 if p.is_opening else depth_of[p.parent_id] + 1
            depths.append(max(depth_of.values()))
            total_chars.append(sum(len(p.body) for p in t.posts))
            first_chars.append(len(t.posts[0].body))
        n = len(threads)
        out.append(
            CommunityStats(
                community=community,
                n_threads=n,
                n_comments=n_comments,
                n_users=len(users),
                avg_thread_length=sum(lengths) / n,
                avg_depth=sum(depths) / n,
                avg_total_chars=sum(total_chars) / n,
                avg_first_post_chars=sum(first_chars) / n,
            )
        )
    return out


def stratified_sample_communities(
    stats: Sequence[CommunityStats],
    rng: random.Random,
    per_group: int = 8,
) -> list[str]:
    """Quartile-partition communities along each stratification metric and
    sample per_group labels from each of the 4x4 groups; deduplicated union,
    sorted. Undersized groups contribute everything they have, with a
    warning. Ties break on label order so grouping is deterministic."""
    if not stats:
        raise ValueError("no community stats")
    if per_group < 1:
        raise ValueError("per_group must be >= 1")
    selected: set[str] = set()
    n = len(stats)
    for metric in STRATIFICATION_METRICS:
        ordered = sorted(stats, key=lambda s: (s.metric(metric), s.community))
        for j in range(4):
            group = ordered[(j * n) // 4 : ((j + 1) * n) // 4]
            if not group:
                continue
            labels = [s.community for s in group]
            if len(labels) <= per_group:
                if len(labels) < per_group:
                    logger.warning(
                        "%s quartile %d has %d communities (< %d), taking all",
                        metric, j + 1, len(labels), per_group,
                    )
                selected.update(labels)
            else:
                selected.update(rng.sample(labels, per_group))
    return sorted(selected)


def split_train_test(
    threads: Sequence[Thread],
    ratio: float,
    rng: random.Random,
) -> tuple[list[Thread], list[Thread]]:
    """Seeded shuffle, then train = first floor(ratio * n) threads."""
    if len(threads) < 2:
        raise ValueError("need at least 2 threads to split")
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must be in (0, 1)")
    shuffled = list(threads)
    rng.shuffle(shuffled)
    cut = int(ratio * len(shuffled))
    return shuffled[:cut], shuffled[cut:]
