"""Embedding providers and the precomputed-embedding file format.

An embedder is anything with a dim attribute and embed(texts) -> (n, dim)
array. Three providers ship here: a deterministic hashed n-gram embedder
(no network, used by tests and fixture runs), a file-backed provider keyed
by text fingerprints, and an HTTP client for the external bridge service.

File format, shared with the bridge:

    dim=768
    <id>\t<comma-separated floats>

Ids are 16-hex-char sha256 prefixes of the embedded text, so a file produced
for a corpus can stand in anywhere an embedder is required.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .llm import Tokenizer, fingerprint, whitespace_tokenize
from .threads import Thread, flatten_ws

DEFAULT_DIM = 768
CHUNK_TOKENS = 12


class EmbeddingError(RuntimeError):
    pass


@dataclass
class EmbeddingSet:
    """Aligned ids and vectors; one row per item, uniform dimension."""

    ids: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise ValueError("vectors must be a 2-d array")
        if len(self.ids) != self.vectors.shape[0]:
            raise ValueError("ids and vectors disagree on count")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("non-finite vector entries")

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.ids)


class HashingEmbedder:
    """Deterministic bag-of-ngrams embedding, unit L2 norm, no model files."""

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim

    def _indices(self, feature: str) -> tuple[int, float]:
        digest = hashlib.md5(feature.encode("utf-8")).digest()
        index = int.from_bytes(digest[:4], "big") % self.dim
        sign = 1.0 if digest[4] & 1 else -1.0
        return index, sign

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            tokens = text.lower().split()
            features = ["__bias__"]
            features.extend(tokens)
            features.extend(a + " " + b for a, b in zip(tokens, tokens[1:]))
            for f in features:
                idx, sign = self._indices(f)
                out[row, idx] += sign
            norm = np.linalg.norm(out[row])
            if norm == 0.0:
                out[row, 0] = 1.0
            else:
                out[row] /= norm
        return out


def write_embedding_file(path, items: Sequence[tuple[str, Sequence[float]]], dim: int) -> None:
    """Write id/vector records behind a dim= header, 6 significant digits."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim={dim}\n")
        for item_id, vector in items:
            if len(vector) != dim:
                raise ValueError(f"{item_id}: expected {dim} floats, got {len(vector)}")
            fh.write(item_id + "\t" + ",".join(f"{float(v):.6g}" for v in vector) + "\n")


def load_embedding_file(path) -> tuple[dict[str, np.ndarray], int]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("dim="):
            raise EmbeddingError(f"{path}: missing dim= header")
        try:
            dim = int(header[len("dim="):])
        except ValueError as err:
            raise EmbeddingError(f"{path}: bad header {header!r}") from err
        table: dict[str, np.ndarray] = {}
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                item_id, raw = line.split("\t", 1)
                vector = np.array([float(v) for v in raw.split(",")], dtype=np.float64)
            except ValueError as err:
                raise EmbeddingError(f"{path}:{lineno}: bad record") from err
            if vector.shape[0] != dim:
                raise EmbeddingError(
                    f"{path}:{lineno}: {vector.shape[0]} floats, header says {dim}"
                )
            table[item_id] = vector
    return table, dim


class PrecomputedEmbeddings:
    """File-backed embedder; looks texts up by their fingerprint."""

    def __init__(self, table: dict[str, np.ndarray], dim: int):
        self._table = table
        self.dim = dim

    @classmethod
    def from_file(cls, path) -> "PrecomputedEmbeddings":
        table, dim = load_embedding_file(path)
        return cls(table, dim)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            fp = fingerprint(text)
            vector = self._table.get(fp)
            if vector is None:
                raise EmbeddingError(
                    f"no precomputed vector for fingerprint {fp} ({text[:60]!r})"
                )
            out[row] = vector
        return out


class BridgeEmbedder:
    """HTTP client for the external embedding bridge."""

    def __init__(self, base_url: str, timeout: float = 60.0, session=None):
        import requests

        self._base = base_url.rstrip("/")
        self._timeout = timeout
        self._session = session or requests.Session()
        info = self._get_json("/info")
        self.dim = int(info["dim"])
        self.model = str(info.get("model", ""))
        self.max_batch = int(info.get("max_batch", 256))

    def _get_json(self, route: str) -> dict:
        resp = self._session.get(self._base + route, timeout=self._timeout)
        if resp.status_code != 200:
            raise EmbeddingError(f"GET {route} -> {resp.status_code}")
        return resp.json()

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for start in range(0, len(texts), self.max_batch):
            batch = texts[start : start + self.max_batch]
            items = [
                {"id": f"{start + i}:{fingerprint(t)}", "text": t}
                for i, t in enumerate(batch)
            ]
            resp = self._session.post(
                self._base + "/embed", json={"items": items}, timeout=self._timeout
            )
            if resp.status_code != 200:
                raise EmbeddingError(f"POST /embed -> {resp.status_code}: {resp.text[:200]}")
            payload = resp.json()
            returned = payload.get("items", [])
            if len(returned) != len(items):
                raise EmbeddingError("bridge returned a different item count")
            for i, (sent, got) in enumerate(zip(items, returned)):
                if got.get("id") != sent["id"]:
                    raise EmbeddingError("bridge reordered items")
                vector = np.asarray(got.get("vector", []), dtype=np.float64)
                if vector.shape[0] != self.dim:
                    raise EmbeddingError("bridge vector has wrong dimension")
                out[start + i] = vector
        return out


def thread_chunk_texts(
    thread: Thread,
    chunk_tokens: int = CHUNK_TOKENS,
    tokenizer: Tokenizer = whitespace_tokenize,
) -> list[str]:
    """Concatenated post bodies split into consecutive fixed-size token chunks."""
    tokens = tokenizer(" ".join(flatten_ws(p.body) for p in thread.posts))
    return [
        " ".join(tokens[i : i + chunk_tokens]) for i in range(0, len(tokens), chunk_tokens)
    ]


def embed_threads(
    threads: Sequence[Thread],
    embedder,
    ids: Sequence[str] | None = None,
    chunk_tokens: int = CHUNK_TOKENS,
    tokenizer: Tokenizer = whitespace_tokenize,
) -> EmbeddingSet:
    """Mean-pool chunk embeddings into one fixed-size vector per thread."""
    if not threads:
        raise EmbeddingError("no threads to embed")
    if ids is None:
        ids = tuple(f"t{i}" for i in range(len(threads)))
    if len(ids) != len(threads):
        raise ValueError("ids and threads disagree on count")
    chunk_lists = []
    flat: list[str] = []
    for i, thread in enumerate(threads):
        chunks = thread_chunk_texts(thread, chunk_tokens, tokenizer)
        if not chunks:
            raise EmbeddingError(f"thread {ids[i]} has no text to embed")
        chunk_lists.append((len(flat), len(chunks)))
        flat.extend(chunks)
    matrix = np.asarray(embedder.embed(flat), dtype=np.float64)
    if matrix.shape != (len(flat), embedder.dim):
        raise EmbeddingError("embedder returned a misshaped matrix")
    pooled = np.zeros((len(threads), embedder.dim), dtype=np.float64)
    for row, (start, count) in enumerate(chunk_lists):
        pooled[row] = matrix[start : start + count].mean(axis=0)
    return EmbeddingSet(ids=tuple(ids), vectors=pooled)


def embedder_from_spec(spec: str):
    """builtin | path to a precomputed file | http(s) URL of a bridge."""
    if spec == "builtin":
        return HashingEmbedder()
    if spec.startswith("http://") or spec.startswith("https://"):
        return BridgeEmbedder(spec)
    return PrecomputedEmbeddings.from_file(spec)
