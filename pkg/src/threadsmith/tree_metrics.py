"""Structural measures of reply trees and their two-level aggregation.

Distances are undirected shortest paths on the tree. Depth counts edges from
the opening post (which sits at depth 0). Everything here is closed-form via
subtree sums; tests cross-check against a brute-force BFS oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .threads import Thread, validate_structure


@dataclass(frozen=True)
class StructuralMetrics:
    n_posts: int
    n_unique_users: int
    max_depth: int
    max_breadth: int
    wiener: float
    # None marks the undefined case (fewer than 2 posts); aggregation skips
    # those and reports how many were skipped.
    structural_virality: float | None
    cascade_virality: float

    def as_row(self) -> dict[str, float | None]:
        return {
            "n_posts": float(self.n_posts),
            "n_unique_users": float(self.n_unique_users),
            "max_depth": float(self.max_depth),
            "max_breadth": float(self.max_breadth),
            "wiener": self.wiener,
            "structural_virality": self.structural_virality,
            "cascade_virality": self.cascade_virality,
        }


def _tree_arrays(thread: Thread) -> tuple[list[int], list[int], list[int], list[int]]:
    """Per-post parent index, depth, subtree size and subtree depth sum."""
    index = {p.post_id: i for i, p in enumerate(thread.posts)}
    parents = [-1] * len(thread.posts)
    depths = [0] * len(thread.posts)
    for i, p in enumerate(thread.posts):
        if i == 0:
            continue
        parents[i] = index[p.parent_id]
        depths[i] = depths[parents[i]] + 1
    sizes = [1] * len(thread.posts)
    depth_sums = list(depths)  # depth sum over the subtree rooted at i
    for i in range(len(thread.posts) - 1, 0, -1):
        sizes[parents[i]] += sizes[i]
        depth_sums[parents[i]] += depth_sums[i]
    return parents, depths, sizes, depth_sums


def structural_metrics(thread: Thread) -> StructuralMetrics:
    report = validate_structure(thread)
    if not report.is_valid:
        raise ValueError(f"invalid thread: {report.violations}")
    n = len(thread.posts)
    parents, depths, sizes, depth_sums = _tree_arrays(thread)

    breadth: dict[int, int] = {}
    for d in depths:
        breadth[d] = breadth.get(d, 0) + 1

    # Every unordered pair's path crosses the edge above i exactly when the
    # pair straddles i's subtree, so W is a sum of sizes[i] * (n - sizes[i]).
    wiener = 0.0
    for i in range(1, n):
        wiener += sizes[i] * (n - sizes[i])

    structural_virality: float | None = None
    if n >= 2:
        structural_virality = wiener / math.comb(n, 2)

    # Mean ancestor-to-descendant distance, summed over posts with children.
    cascade = 0.0
    for i in range(n):
        descendants = sizes[i] - 1
        if descendants > 0:
            cascade += (depth_sums[i] - depths[i] * sizes[i]) / descendants

    return StructuralMetrics(
        n_posts=n,
        n_unique_users=len({p.user_id for p in thread.posts}),
        max_depth=max(depths),
        max_breadth=max(breadth.values()),
        wiener=wiener,
        structural_virality=structural_virality,
        cascade_virality=cascade,
    )


@dataclass(frozen=True)
class UserStats:
    n_posts: int
    mean_depth: float
    mean_direct_replies: float
    mean_indirect_replies: float


@dataclass(frozen=True)
class UserMetrics:
    """Per-user activity inside one thread plus unweighted means over users."""

    per_user: Mapping[str, UserStats]
    mean_posts: float
    mean_depth: float
    mean_direct_replies: float
    mean_indirect_replies: float

    def as_row(self) -> dict[str, float | None]:
        return {
            "user_posts": self.mean_posts,
            "user_depth": self.mean_depth,
            "user_direct_replies": self.mean_direct_replies,
            "user_indirect_replies": self.mean_indirect_replies,
        }


def user_metrics(thread: Thread, include_opening_in_depth: bool = True) -> UserMetrics:
    """Per-user post counts, depths and reply totals.

    Direct replies count children of a user's posts; indirect replies count
    all descendants. The opening post's depth of 0 is included in its author's
    mean by default; pass include_opening_in_depth=False to exclude it (a user
    whose only post is the opener then reports depth 0.0).
    """
    report = validate_structure(thread)
    if not report.is_valid:
        raise ValueError(f"invalid thread: {report.violations}")
    _, depths, sizes, _ = _tree_arrays(thread)
    children: dict[int, int] = {}
    index = {p.post_id: i for i, p in enumerate(thread.posts)}
    for i, p in enumerate(thread.posts):
        if i > 0:
            j = index[p.parent_id]
            children[j] = children.get(j, 0) + 1

    by_user: dict[str, list[int]] = {}
    for i, p in enumerate(thread.posts):
        by_user.setdefault(p.user_id, []).append(i)

    per_user: dict[str, UserStats] = {}
    for user, idxs in by_user.items():
        depth_idxs = idxs
        if not include_opening_in_depth:
            depth_idxs = [i for i in idxs if i != 0]
        mean_depth = (
            sum(depths[i] for i in depth_idxs) / len(depth_idxs) if depth_idxs else 0.0
        )
        per_user[user] = UserStats(
            n_posts=len(idxs),
            mean_depth=mean_depth,
            mean_direct_replies=sum(children.get(i, 0) for i in idxs) / len(idxs),
            mean_indirect_replies=sum(sizes[i] - 1 for i in idxs) / len(idxs),
        )

    n_users = len(per_user)
    return UserMetrics(
        per_user=per_user,
        mean_posts=sum(s.n_posts for s in per_user.values()) / n_users,
        mean_depth=sum(s.mean_depth for s in per_user.values()) / n_users,
        mean_direct_replies=sum(s.mean_direct_replies for s in per_user.values()) / n_users,
        mean_indirect_replies=sum(s.mean_indirect_replies for s in per_user.values()) / n_users,
    )


@dataclass(frozen=True)
class AggregateReport:
    """Community means first, then an unweighted mean and std across
    communities. Undefined per-thread values are dropped and counted."""

    per_community: dict[str, dict[str, float | None]]
    macro_mean: dict[str, float | None]
    macro_std: dict[str, float | None]
    excluded: dict[str, int]
    n_threads: dict[str, int]


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    """Population mean and standard deviation."""
    m = sum(values) / len(values)
    var = sum((v - m) ** 2 for v in values) / len(values)
    return m, math.sqrt(var)


def aggregate_metrics(
    rows: Sequence[Mapping[str, float | None]],
    communities: Sequence[str],
) -> AggregateReport:
    """Two-level aggregation of per-thread metric rows.

    rows[i] belongs to communities[i]. A single community yields a macro std
    of 0. Metrics form the union of all row keys.
    """
    if len(rows) != len(communities):
        raise ValueError("rows and communities lengths differ")
    if not rows:
        raise ValueError("no rows to aggregate")
    metrics: list[str] = []
    for row in rows:
        for key in row:
            if key not in metrics:
                metrics.append(key)

    grouped: dict[str, list[Mapping[str, float | None]]] = {}
    for row, community in zip(rows, communities):
        grouped.setdefault(community, []).append(row)

    per_community: dict[str, dict[str, float | None]] = {}
    excluded = {m: 0 for m in metrics}
    n_threads = {c: len(g) for c, g in grouped.items()}
    for community in sorted(grouped):
        group = grouped[community]
        means: dict[str, float | None] = {}
        for metric in metrics:
            values = []
            for row in group:
                v = row.get(metric)
                if v is None:
                    excluded[metric] += 1
                else:
                    values.append(v)
            means[metric] = sum(values) / len(values) if values else None
        per_community[community] = means

    macro_mean: dict[str, float | None] = {}
    macro_std: dict[str, float | None] = {}
    for metric in metrics:
        values = [
            means[metric]
            for means in per_community.values()
            if means[metric] is not None
        ]
        if values:
            m, s = mean_std(values)
            macro_mean[metric], macro_std[metric] = m, s
        else:
            macro_mean[metric] = macro_std[metric] = None

    return AggregateReport(
        per_community=per_community,
        macro_mean=macro_mean,
        macro_std=macro_std,
        excluded=excluded,
        n_threads=n_threads,
    )
