"""Discussion-thread domain model and the line-oriented fielded text format.

A thread is a rooted reply tree. The text format is one post per line:

    topics: gardening, tools        (optional)
    title: Which spade?
    post # user-1 # NA # Looking for a spade that survives clay soil.
    comment-1 # user-2 # post # Get a forged one, stamped steel bends.

Fields are separated by " # " and a line is split on the first three
separators only, so bodies may contain hashes. The opening post has the id
"post" and the parent marker "NA"; replies are "comment-1", "comment-2", ...
and users are "user-1", "user-2", ...
"""
from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

NO_PARENT = "NA"
OPENING_ID = "post"
SEPARATOR = " # "

COMMENT_ID_RE = re.compile(r"comment-[1-9][0-9]*\Z")
USER_ID_RE = re.compile(r"user-[1-9][0-9]*\Z")

# Violation kinds carried by ValidityReport.
MISSING_FIELD = "missing-field"
BAD_POST_ID = "bad-post-id"
BAD_USER_ID = "bad-user-id"
FORWARD_OR_UNKNOWN_PARENT = "forward-or-unknown-parent"
NO_OPENING_POST = "no-opening-post"
DUPLICATE_POST_ID = "duplicate-post-id"
MALFORMED_LINE = "malformed-line"

VIOLATION_KINDS = frozenset(
    {
        MISSING_FIELD,
        BAD_POST_ID,
        BAD_USER_ID,
        FORWARD_OR_UNKNOWN_PARENT,
        NO_OPENING_POST,
        DUPLICATE_POST_ID,
        MALFORMED_LINE,
    }
)


class ThreadParseError(ValueError):
    """Raised when thread text cannot be parsed at all."""

    def __init__(self, message: str, line: int, kind: str = MALFORMED_LINE):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.kind = kind


@dataclass(frozen=True)
class Post:
    post_id: str
    user_id: str
    parent_id: str  # NO_PARENT for the opening post
    body: str

    @property
    def is_opening(self) -> bool:
        return self.parent_id == NO_PARENT


@dataclass(frozen=True)
class Thread:
    title: str
    posts: tuple[Post, ...]
    topics: tuple[str, ...] = ()
    community: str = ""

    def post_by_id(self, post_id: str) -> Post:
        for p in self.posts:
            if p.post_id == post_id:
                return p
        raise KeyError(post_id)

    def parent_map(self) -> dict[str, str]:
        return {p.post_id: p.parent_id for p in self.posts}

    def child_map(self) -> dict[str, list[str]]:
        children: dict[str, list[str]] = {p.post_id: [] for p in self.posts}
        for p in self.posts:
            if not p.is_opening and p.parent_id in children:
                children[p.parent_id].append(p.post_id)
        return children


# A scaffold is a thread whose bodies are one-line third-person summaries.
# Same shape, same format, same validation.
Scaffold = Thread


@dataclass(frozen=True)
class ValidityReport:
    violations: tuple[tuple[str, int], ...] = ()

    @property
    def is_valid(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {k for k, _ in self.violations}


def flatten_ws(text: str) -> str:
    """Replace newline runs with single spaces; what serialization does to bodies."""
    return re.sub(r"[\r\n]+", " ", text).strip()


def _split_topics(raw: str) -> tuple[str, ...]:
    items = [t.strip() for t in raw.split(",")]
    return tuple(t for t in items if t)


def _parse_with_lines(
    text: str, expect_topics_line: bool = False
) -> tuple[Thread, list[int]]:
    """Parse and keep the source line number of each post for error reporting."""
    numbered = [
        (i + 1, line.strip()) for i, line in enumerate(text.splitlines()) if line.strip()
    ]
    if not numbered:
        raise ThreadParseError("empty input", 1, MISSING_FIELD)

    idx = 0
    topics: tuple[str, ...] = ()
    lineno, line = numbered[idx]
    if line.startswith("topics:"):
        topics = _split_topics(line[len("topics:"):])
        idx += 1
    elif expect_topics_line:
        raise ThreadParseError("expected a topics: line", lineno, MISSING_FIELD)

    if idx >= len(numbered):
        raise ThreadParseError("expected a title: line", lineno + 1, MISSING_FIELD)
    lineno, line = numbered[idx]
    if not line.startswith("title:"):
        raise ThreadParseError("expected a title: line", lineno, MISSING_FIELD)
    title = line[len("title:"):].strip()
    idx += 1

    if idx >= len(numbered):
        raise ThreadParseError("expected at least one post line", lineno + 1, MISSING_FIELD)

    posts: list[Post] = []
    lines: list[int] = []
    for lineno, line in numbered[idx:]:
        parts = line.split(SEPARATOR, 3)
        if len(parts) != 4:
            raise ThreadParseError(
                f"expected 4 fields separated by '{SEPARATOR}', got {len(parts)}",
                lineno,
                MALFORMED_LINE,
            )
        post_id, user_id, parent_id, body = (part.strip() for part in parts)
        posts.append(Post(post_id, user_id, parent_id, body))
        lines.append(lineno)
    return Thread(title=title, posts=tuple(posts), topics=topics), lines


def parse_thread_text(text: str, expect_topics_line: bool = False) -> Thread:
    """Parse the fielded format. Structural violations are not parse errors;
    run validate_structure on the result to find those."""
    thread, _ = _parse_with_lines(text, expect_topics_line)
    return thread


def serialize_thread(thread: Thread, include_topics: bool = True) -> str:
    """Render a thread in the fielded format. Refuses structurally invalid input.

    Newlines inside bodies and titles become single spaces; the JSONL
    interchange format is the one that preserves them.
    """
    report = validate_structure(thread)
    if not report.is_valid:
        raise ValueError(f"refusing to serialize invalid thread: {report.violations}")
    lines = []
    if include_topics and thread.topics:
        lines.append("topics: " + ", ".join(flatten_ws(t) for t in thread.topics))
    lines.append("title: " + flatten_ws(thread.title))
    for p in thread.posts:
        lines.append(
            SEPARATOR.join((p.post_id, p.user_id, p.parent_id, flatten_ws(p.body)))
        )
    return "\n".join(lines)


def validate_structure(
    thread: Thread, post_lines: Sequence[int] | None = None
) -> ValidityReport:
    """Check the reply-tree contract.

    Violations carry a line number: the post's line in the source text when
    post_lines is given, otherwise the line the post would occupy when
    serialized without a topics line (title is line 1).
    """
    def line_of(i: int) -> int:
        if post_lines is not None and i < len(post_lines):
            return post_lines[i]
        return i + 2

    violations: list[tuple[str, int]] = []
    if not thread.posts:
        return ValidityReport(((NO_OPENING_POST, 1),))

    opener = thread.posts[0]
    if opener.post_id != OPENING_ID or opener.parent_id != NO_PARENT:
        violations.append((NO_OPENING_POST, line_of(0)))

    seen: set[str] = set()
    for i, p in enumerate(thread.posts):
        ln = line_of(i)
        if i == 0:
            if p.post_id != OPENING_ID and not COMMENT_ID_RE.fullmatch(p.post_id):
                violations.append((BAD_POST_ID, ln))
        else:
            if not COMMENT_ID_RE.fullmatch(p.post_id):
                violations.append((BAD_POST_ID, ln))
            if p.parent_id not in seen:
                # covers forward references, unknown ids and a stray NA
                violations.append((FORWARD_OR_UNKNOWN_PARENT, ln))
        if not USER_ID_RE.fullmatch(p.user_id):
            violations.append((BAD_USER_ID, ln))
        if not p.body.strip():
            violations.append((MISSING_FIELD, ln))
        if p.post_id in seen:
            violations.append((DUPLICATE_POST_ID, ln))
        seen.add(p.post_id)
    return ValidityReport(tuple(violations))


def validate_thread_text(
    text: str, expect_topics_line: bool = False
) -> tuple[Thread | None, ValidityReport]:
    """Parse then validate; parse errors come back as a one-violation report."""
    try:
        thread, lines = _parse_with_lines(text, expect_topics_line)
    except ThreadParseError as err:
        return None, ValidityReport(((err.kind, err.line),))
    return thread, validate_structure(thread, lines)


def reply_chain(thread: Thread, post_id: str) -> tuple[Post, ...]:
    """The root-to-post chain of parents, inclusive on both ends."""
    by_id: dict[str, Post] = {}
    for p in thread.posts:
        by_id.setdefault(p.post_id, p)
    if post_id not in by_id:
        raise KeyError(post_id)
    chain: list[Post] = []
    visited: set[str] = set()
    current: Post | None = by_id[post_id]
    while current is not None:
        if current.post_id in visited:
            raise ValueError(f"parent cycle at {current.post_id}")
        visited.add(current.post_id)
        chain.append(current)
        if current.is_opening:
            current = None
        else:
            nxt = by_id.get(current.parent_id)
            if nxt is None:
                raise ValueError(f"unknown parent {current.parent_id}")
            current = nxt
    chain.reverse()
    return tuple(chain)


def normalize_post_ids(
    raw_posts: Sequence[tuple[str, str, str | None, str]],
) -> tuple[Post, ...]:
    """Renumber arbitrary post/user ids into the canonical scheme.

    Input tuples are (post_id, user_id, parent_id, body) in posting order;
    parent may be None, "" or "NA" for the opening post. Renumbering is
    stable: first post becomes "post", replies become comment-1..n, users are
    numbered by first appearance so the opening author is always user-1.
    """
    if not raw_posts:
        raise ValueError("no posts")
    id_map: dict[str, str] = {}
    user_map: dict[str, str] = {}
    posts: list[Post] = []
    for i, (pid, uid, parent, body) in enumerate(raw_posts):
        pid = str(pid).strip()
        uid = str(uid).strip()
        body = str(body)
        if not pid or not uid:
            raise ValueError(f"post {i}: empty id field")
        if not body.strip():
            raise ValueError(f"post {i}: empty body")
        if pid in id_map:
            raise ValueError(f"post {i}: duplicate post id {pid!r}")
        parent_norm = "" if parent is None else str(parent).strip()
        is_root = parent_norm in ("", NO_PARENT, "null", "None")
        if i == 0:
            if not is_root:
                raise ValueError("first post has a parent")
            new_pid, new_parent = OPENING_ID, NO_PARENT
        else:
            if is_root:
                raise ValueError(f"post {i}: reply without a parent")
            if parent_norm not in id_map:
                raise ValueError(f"post {i}: parent {parent_norm!r} not seen earlier")
            new_pid, new_parent = f"comment-{i}", id_map[parent_norm]
        if uid not in user_map:
            user_map[uid] = f"user-{len(user_map) + 1}"
        id_map[pid] = new_pid
        posts.append(Post(new_pid, user_map[uid], new_parent, body))
    return tuple(posts)


def with_topics(thread: Thread, topics: Iterable[str], community: str | None = None) -> Thread:
    """Copy of a thread with its topics (and optionally community) replaced."""
    kwargs: dict = {"topics": tuple(topics)}
    if community is not None:
        kwargs["community"] = community
    return replace(thread, **kwargs)
