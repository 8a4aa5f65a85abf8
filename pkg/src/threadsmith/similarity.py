"""Distributional fidelity measures between real and synthetic corpora.

Covers topic-distribution similarity (Jensen-Shannon and weighted Jaccard),
embedding-space divergence (a quantized two-curve area score), and a
recitation report over pairwise cosine similarities.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .embeddings import EmbeddingSet
from .llm import Gateway, render_prompt
from .prompts import TOPIC_CLASSIFIER
from .threads import Thread, flatten_ws

logger = logging.getLogger(__name__)

Classifier = Callable[[str], list[tuple[str, float]]]


class EmptyTopicVectorError(ValueError):
    pass


def thread_text(thread: Thread) -> str:
    return " ".join([flatten_ws(thread.title), *(flatten_ws(p.body) for p in thread.posts)])


def topic_vector(
    threads: Sequence[Thread],
    classifier: Classifier,
    min_confidence: float = 0.1,
) -> dict[str, float]:
    """Label share per topic: thread counts for labels at or above the
    confidence floor, normalized to sum to 1."""
    counts: dict[str, int] = {}
    for thread in threads:
        labels = {
            label
            for label, confidence in classifier(thread_text(thread))
            if confidence >= min_confidence
        }
        for label in labels:
            counts[label] = counts.get(label, 0) + 1
    total = sum(counts.values())
    if total == 0:
        raise EmptyTopicVectorError("no labels at or above the confidence floor")
    return {label: counts[label] / total for label in sorted(counts)}


def _aligned(v1: Mapping[str, float], v2: Mapping[str, float]) -> tuple[np.ndarray, np.ndarray]:
    keys = sorted(set(v1) | set(v2))
    p = np.array([v1.get(k, 0.0) for k in keys], dtype=np.float64)
    q = np.array([v2.get(k, 0.0) for k in keys], dtype=np.float64)
    return p, q


def _kl(p: np.ndarray, q: np.ndarray, base: float = np.e) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask] / q[mask]) / np.log(base))))


def js_divergence(v1: Mapping[str, float], v2: Mapping[str, float]) -> float:
    """Base-2 Jensen-Shannon divergence over the union support; in [0, 1]."""
    if not v1 or not v2:
        raise ValueError("empty distribution")
    p, q = _aligned(v1, v2)
    m = (p + q) / 2
    return 0.5 * _kl(p, m, base=2.0) + 0.5 * _kl(q, m, base=2.0)


def js_similarity(v1: Mapping[str, float], v2: Mapping[str, float]) -> float:
    return 1.0 - js_divergence(v1, v2)


def weighted_jaccard(v1: Mapping[str, float], v2: Mapping[str, float]) -> float:
    """Sum of coordinate minima over sum of coordinate maxima."""
    if not v1 or not v2:
        raise ValueError("empty vector")
    p, q = _aligned(v1, v2)
    denominator = float(np.maximum(p, q).sum())
    if denominator == 0.0:
        raise ValueError("both vectors are all zero")
    return float(np.minimum(p, q).sum()) / denominator


@dataclass(frozen=True)
class MauveConfig:
    scaling_c: float = 5.0
    n_grid: int = 32
    n_clusters: int | None = None  # default: min(floor(samples / 10), 500)
    kmeans_iterations: int = 25
    seed: int = 0

    def __post_init__(self):
        if self.scaling_c <= 0:
            raise ValueError("scaling_c must be positive")
        if self.n_grid < 2:
            raise ValueError("n_grid must be >= 2")
        if self.n_clusters is not None and self.n_clusters < 1:
            raise ValueError("n_clusters must be >= 1")


def _kmeans_labels(
    points: np.ndarray, k: int, seed: int, iterations: int
) -> np.ndarray:
    """Seeded k-means++ plus Lloyd iterations; returns final assignments."""
    rng = np.random.default_rng(seed)
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = points[first]
    closest = np.sum((points - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total == 0.0:
            centers[c:] = points[first]
            break
        probs = closest / total
        choice = int(rng.choice(n, p=probs))
        centers[c] = points[choice]
        distance = np.sum((points - centers[c]) ** 2, axis=1)
        closest = np.minimum(closest, distance)
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(iterations):
        distances = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = distances.argmin(axis=1)
        for c in range(k):
            members = points[new_labels == c]
            if len(members):
                centers[c] = members.mean(axis=0)
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    return labels


def divergence_curve(
    p: np.ndarray, q: np.ndarray, scaling_c: float, n_grid: int
) -> np.ndarray:
    """Points (exp(-c KL(Q||R)), exp(-c KL(P||R))) for mixtures R of P and Q,
    with the axis endpoints appended, sorted along x."""
    points = [(0.0, 1.0), (1.0, 0.0)]
    for i in range(1, n_grid):
        lam = i / n_grid
        r = lam * p + (1 - lam) * q
        points.append((np.exp(-scaling_c * _kl(q, r)), np.exp(-scaling_c * _kl(p, r))))
    points.sort(key=lambda xy: (xy[0], -xy[1]))
    return np.array(points, dtype=np.float64)


def mauve(
    real: EmbeddingSet,
    synthetic: EmbeddingSet,
    config: MauveConfig = MauveConfig(),
) -> float:
    """Area under the quantized divergence curve; 1 means indistinguishable.

    Both sides are pooled and quantized with seeded k-means, cluster
    histograms get add-one smoothing, and the curve is traced over a grid of
    mixture weights.
    """
    if real.dim != synthetic.dim:
        raise ValueError(f"dimension mismatch: {real.dim} vs {synthetic.dim}")
    if len(real) < 2 or len(synthetic) < 2:
        raise ValueError("need at least 2 vectors per side")
    k = config.n_clusters
    if k is None:
        k = min(min(len(real), len(synthetic)) // 10, 500)
    k = max(1, min(k, len(real) + len(synthetic)))

    pooled = np.vstack([real.vectors, synthetic.vectors])
    # canonical point order, so swapping the two sides cannot change the
    # quantization and the score stays symmetric
    order = np.lexsort(pooled.T)
    sorted_labels = _kmeans_labels(pooled[order], k, config.seed, config.kmeans_iterations)
    labels = np.empty_like(sorted_labels)
    labels[order] = sorted_labels
    if len(np.unique(labels)) < 2:
        warnings.warn("degenerate quantization: all points in one cluster", stacklevel=2)

    real_hist = np.bincount(labels[: len(real)], minlength=k).astype(np.float64) + 1.0
    synth_hist = np.bincount(labels[len(real):], minlength=k).astype(np.float64) + 1.0
    p = real_hist / real_hist.sum()
    q = synth_hist / synth_hist.sum()

    curve = divergence_curve(p, q, config.scaling_c, config.n_grid)
    return float(np.trapezoid(curve[:, 1], curve[:, 0]))


@dataclass(frozen=True)
class RecitationReport:
    max_similarity: float
    quantiles: dict[str, float]
    top_pairs: tuple[tuple[str, str, float], ...]
    n_pairs: int


def _pair_texts(threads: Sequence[Thread], side: str) -> tuple[list[str], list[str]]:
    """Post-with-parent concatenations; opening posts stand alone."""
    refs: list[str] = []
    texts: list[str] = []
    for t_idx, thread in enumerate(threads):
        bodies = {p.post_id: flatten_ws(p.body) for p in thread.posts}
        for p in thread.posts:
            refs.append(f"{side}{t_idx}/{p.post_id}")
            if p.is_opening:
                texts.append(flatten_ws(p.body))
            else:
                texts.append(bodies[p.parent_id] + " " + flatten_ws(p.body))
    return refs, texts


def recitation_report(
    real_threads: Sequence[Thread],
    synthetic_threads: Sequence[Thread],
    embedder,
    top_k: int = 10,
    quantiles: Sequence[float] = (0.999, 0.99, 0.9),
) -> RecitationReport:
    """Cosine similarities between all real/synthetic post-parent pairs.

    High quantiles near 1 mean synthetic posts echo training text.
    """
    if not real_threads or not synthetic_threads:
        raise ValueError("both sides need at least one thread")
    real_refs, real_texts = _pair_texts(real_threads, "real:")
    synth_refs, synth_texts = _pair_texts(synthetic_threads, "synth:")

    def unit_rows(texts: list[str]) -> np.ndarray:
        matrix = np.asarray(embedder.embed(texts), dtype=np.float64)
        norms = np.linalg.norm(matrix, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        return matrix / norms

    sims = unit_rows(real_texts) @ unit_rows(synth_texts).T
    flat = sims.ravel()
    order = np.argsort(flat)[::-1][:top_k]
    top_pairs = tuple(
        (real_refs[i // sims.shape[1]], synth_refs[i % sims.shape[1]], float(flat[i]))
        for i in order
    )
    return RecitationReport(
        max_similarity=float(flat.max()),
        quantiles={f"{q:g}": float(np.quantile(flat, q)) for q in quantiles},
        top_pairs=top_pairs,
        n_pairs=int(flat.size),
    )


class KeywordClassifier:
    """Deterministic test-grade classifier: a label matches when any of its
    keywords occurs in the lowercased text."""

    def __init__(self, taxonomy: Mapping[str, Sequence[str]], confidence: float = 0.9):
        self._taxonomy = {label: tuple(kws) for label, kws in sorted(taxonomy.items())}
        self._confidence = confidence

    def __call__(self, text: str) -> list[tuple[str, float]]:
        lowered = text.lower()
        return [
            (label, self._confidence)
            for label, keywords in self._taxonomy.items()
            if any(kw.lower() in lowered for kw in keywords)
        ]


class LLMClassifier:
    """Prompts the gateway for topic: confidence lines."""

    def __init__(self, gateway: Gateway, labels: Sequence[str] | None = None):
        self._gateway = gateway
        self._labels = tuple(labels) if labels else None

    def __call__(self, text: str) -> list[tuple[str, float]]:
        task = text
        if self._labels:
            task = "Allowed topics: " + ", ".join(self._labels) + "\n" + text
        prompt = render_prompt(TOPIC_CLASSIFIER, [], task)
        completion = self._gateway.complete_text(prompt, max_output_tokens=128)
        results: list[tuple[str, float]] = []
        for line in completion.splitlines():
            if ":" not in line:
                continue
            label, _, raw = line.rpartition(":")
            label = label.strip()
            try:
                confidence = float(raw.strip())
            except ValueError:
                continue
            if label:
                results.append((label, max(0.0, min(1.0, confidence))))
        return results
