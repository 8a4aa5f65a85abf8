"""Shared fixtures: reference threads, random tree builders, BFS oracles."""
from __future__ import annotations

import math
import random
from collections import deque
from pathlib import Path

import pytest

from threadsmith.threads import Post, Thread, parse_thread_text

REPO = Path(__file__).resolve().parent.parent
FIXTURES = REPO / "fixtures"

# Reference scaffold: 5 posts, 3 users, two depth-2 branches.
SCAFFOLD_FIXTURE_TEXT = "\n".join(
    [
        "topics: Nonprofit Management, Paint Color, Curtains, Bar Decor, Wallpaper, Countertop",
        "title: Help with decorating!",
        "post # user-1 # NA # The user is looking for suggestions on how to decorate the small bar area in their non-profit office.",
        "comment-1 # user-2 # post # The user suggests that the poster may want to remove the popcorn machine.",
        "comment-2 # user-1 # comment-1 # The user is not willing to remove the popcorn machine as it was a gift from a well-wisher.",
        "comment-3 # user-3 # post # The user finds the curtains to be a great find and suggests that they be cleaned and hung to look like new. They also suggest painting the countertop.",
        "comment-4 # user-1 # comment-3 # The user expresses gratitude to the commenter for tips on enhancing their bar area.",
    ]
)


@pytest.fixture
def scaffold_fixture() -> Thread:
    return parse_thread_text(SCAFFOLD_FIXTURE_TEXT, expect_topics_line=True)


def thread_from_parents(
    parents: list[int | None],
    community: str = "c",
    title: str = "t",
    body: str = "body text",
    users: int = 3,
) -> Thread:
    """Build a thread from a parent-index list (index 0 must be None)."""
    ids = ["post"] + [f"comment-{i}" for i in range(1, len(parents))]
    posts = []
    for i, parent in enumerate(parents):
        posts.append(
            Post(
                post_id=ids[i],
                user_id=f"user-{(i % users) + 1}",
                parent_id="NA" if parent is None else ids[parent],
                body=f"{body} {i}",
            )
        )
    return Thread(title=title, posts=tuple(posts), community=community)


def random_parents(rng: random.Random, n: int) -> list[int | None]:
    """Uniform random recursive tree on n nodes, parents precede children."""
    return [None] + [rng.randrange(i) for i in range(1, n)]


def _children(parents: list[int | None]) -> list[list[int]]:
    children: list[list[int]] = [[] for _ in parents]
    for i, parent in enumerate(parents):
        if parent is not None:
            children[parent].append(i)
    return children


def _bfs_distances(start: int, adjacency: list[list[int]]) -> list[int]:
    dist = [-1] * len(adjacency)
    dist[start] = 0
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adjacency[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def oracle_structural(parents: list[int | None]) -> dict:
    """Brute-force metrics straight from the definitions, via all-pairs BFS."""
    n = len(parents)
    children = _children(parents)
    adjacency: list[list[int]] = [list(c) for c in children]
    for i, parent in enumerate(parents):
        if parent is not None:
            adjacency[i].append(parent)

    all_dist = [_bfs_distances(i, adjacency) for i in range(n)]
    wiener = sum(all_dist[i][j] for i in range(n) for j in range(i + 1, n))
    structural_virality = wiener / math.comb(n, 2) if n >= 2 else None

    # descendants of i: nodes reachable through children edges only
    cascade = 0.0
    down = [_bfs_distances(i, children) for i in range(n)]
    for i in range(n):
        dists = [d for j, d in enumerate(down[i]) if d > 0]
        if dists:
            cascade += sum(dists) / len(dists)

    depths = _bfs_distances(0, children)
    breadth: dict[int, int] = {}
    for d in depths:
        breadth[d] = breadth.get(d, 0) + 1
    max_breadth = max(breadth.values())

    return {
        "wiener": wiener,
        "structural_virality": structural_virality,
        "cascade_virality": cascade,
        "max_depth": max(depths),
        "max_breadth": max_breadth,
    }


class ReplayBackend:
    """Returns completions by position, or by a prompt predicate table.

    rules is a list of (predicate, completions) pairs tried in order; the
    first matching predicate pops the next completion from its list. With no
    rules, completions are served round-robin from the flat script.
    """

    backend_id = "scripted"

    def __init__(self, script=(), rules=()):
        self.script = list(script)
        self.rules = [(pred, list(outs)) for pred, outs in rules]
        self.prompts = []
        self._cursor = 0

    def generate(self, request):
        self.prompts.append(request.prompt)
        for pred, outs in self.rules:
            if pred(request.prompt):
                if not outs:
                    raise AssertionError("scripted rule exhausted")
                return outs.pop(0)
        if not self.script:
            raise AssertionError(f"no scripted completion for: {request.prompt[:80]!r}")
        out = self.script[self._cursor % len(self.script)]
        self._cursor += 1
        return out
