"""End-to-end orchestration: split, fit, generate, evaluate, persist.

Communities run sequentially with rng streams derived from the master seed
(string seeding is process-stable), so runs are bit-reproducible and a run
resumed after an abort writes byte-identical reports. Artifacts never embed
timestamps for the same reason.
"""
from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Sequence

from .dataset import DataError, Dataset, load_dataset, split_train_test, thread_to_record
from .embeddings import EmbeddingError, embed_threads, embedder_from_spec
from .generate import (
    EmptyCompletionError,
    GenerationConfig,
    GenerationOutcome,
    build_scaffold_from_thread,
    generate_content,
    generate_scaffold_fewshot,
    generate_thread_baseline,
    summarize_post,
)
from .llm import (
    BackendProtocolError,
    Gateway,
    GatewayError,
    HTTPBackend,
    LLMRequest,
)
from .prompts import GENERATION_KINDS, prompt_kind
from .realism import NoJudgmentsError, RealismConfig, realism_score
from .report import MetricsReport, ReportRow, row_label, write_report
from .similarity import (
    EmptyTopicVectorError,
    KeywordClassifier,
    LLMClassifier,
    MauveConfig,
    js_similarity,
    mauve,
    recitation_report,
    topic_vector,
    weighted_jaccard,
)
from .threads import Thread, serialize_thread, with_topics
from .topics import (
    ExtractionFailedError,
    SamplingInfeasibleError,
    extract_topics,
    fit_topic_model,
    sample_topics_conditional,
    sample_topics_independent,
)
from .tree_metrics import structural_metrics, user_metrics

logger = logging.getLogger(__name__)

TOPIC_SAMPLING_CHOICES = ("ind", "cond")
MODE_CHOICES = ("baseline", "scaffold-fewshot")
CONTENT_MODE_CHOICES = ("none", "zero", "few")


class ConfigError(RuntimeError):
    pass


class AuditError(RuntimeError):
    """A held-out thread leaked into a generation prompt."""


# Few-shot payload for the topic extraction prompt.
_EXTRACT_EX_1 = "\n".join(
    [
        "title: Pitching a tent in high wind",
        "post # user-1 # NA # Any tips for keeping a tent staked down on an exposed ridge?",
        "comment-1 # user-2 # post # Use every guyline and point the low end into the wind.",
        "comment-2 # user-1 # comment-1 # Good call, I only staked the corners last time.",
    ]
)
_EXTRACT_EX_2 = "\n".join(
    [
        "title: First sourdough came out dense",
        "post # user-1 # NA # Crumb is tight and gummy. Did I underproof it?",
        "comment-1 # user-2 # post # Sounds underproofed, try pushing bulk fermentation longer.",
    ]
)
DEFAULT_TOPIC_EXEMPLARS: tuple[tuple[str, str], ...] = (
    (_EXTRACT_EX_1, "camping, tents, wind"),
    (_EXTRACT_EX_2, "sourdough, baking, fermentation"),
)

# Few-shot payload for the post summarization prompt.
DEFAULT_SUMMARY_EXEMPLARS: tuple[tuple[str, str], ...] = (
    (
        "Any tips for keeping a tent staked down on an exposed ridge? Mine nearly took off last weekend.",
        "The user asks for advice on keeping a tent staked down in strong wind after almost losing theirs.",
    ),
    (
        "Sounds underproofed. Let the bulk fermentation run longer and the crumb will open up.",
        "The user suggests that the bread was underproofed and recommends a longer bulk fermentation.",
    ),
)


@dataclass(frozen=True)
class PipelineConfig:
    dataset: str
    out_dir: str
    seed: int = 0
    communities: tuple[str, ...] = ()
    topic_sampling: tuple[str, ...] = ("ind",)
    mode: tuple[str, ...] = ("scaffold-fewshot",)
    content_mode: str = "none"
    platform: str = "reddit"
    n_train: int = 50
    m_synth: int = 500
    split_ratio: float = 0.5
    num_examples: int = 2
    backend: str = "mock"
    backend_url: str = ""
    backend_fixtures: str = ""
    context_budget: int = 4096
    temperature: float = 0.7
    concurrency: int = 8
    embeddings: str = "builtin"
    classifier: str = "keyword"
    taxonomy: str = ""
    skip_mauve: bool = False
    skip_realism: bool = False
    mauve_clusters: int | None = None
    realism_threads: int = 100
    realism_paths: int = 5
    max_path_len: int = 4
    content_pool_size: int = 8

    def __post_init__(self):
        if not self.dataset:
            raise ConfigError("dataset path is required")
        if not self.out_dir:
            raise ConfigError("out_dir is required")
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigError("split_ratio must be in (0, 1)")
        if self.n_train < self.num_examples:
            raise ConfigError("n_train must be >= num_examples")
        if self.m_synth < 1:
            raise ConfigError("m_synth must be >= 1")
        if not self.topic_sampling or any(
            s not in TOPIC_SAMPLING_CHOICES for s in self.topic_sampling
        ):
            raise ConfigError(f"topic_sampling must be drawn from {TOPIC_SAMPLING_CHOICES}")
        if not self.mode or any(m not in MODE_CHOICES for m in self.mode):
            raise ConfigError(f"mode must be drawn from {MODE_CHOICES}")
        if self.content_mode not in CONTENT_MODE_CHOICES:
            raise ConfigError(f"content_mode must be one of {CONTENT_MODE_CHOICES}")
        if self.content_mode != "none" and "scaffold-fewshot" not in self.mode:
            raise ConfigError("content generation needs the scaffold-fewshot mode")
        if self.backend not in ("mock", "http"):
            raise ConfigError("backend must be mock or http")
        if self.backend == "mock" and not self.backend_fixtures:
            raise ConfigError("mock backend needs backend_fixtures")
        if self.backend == "http" and not self.backend_url:
            raise ConfigError("http backend needs backend_url")
        if self.classifier not in ("keyword", "llm"):
            raise ConfigError("classifier must be keyword or llm")
        if self.classifier == "keyword" and not self.taxonomy:
            raise ConfigError("keyword classifier needs a taxonomy file")
        if self.mauve_clusters is not None and self.mauve_clusters < 1:
            raise ConfigError("mauve_clusters must be >= 1")
        for name in ("n_train", "realism_threads", "realism_paths", "max_path_len",
                     "content_pool_size", "context_budget", "concurrency"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    @classmethod
    def from_dict(cls, raw: Mapping) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        values = dict(raw)
        for key in ("communities", "topic_sampling", "mode"):
            if key in values:
                values[key] = _as_tuple(values[key], key)
        if "content_mode" in values:
            values["content_mode"] = _CONTENT_ALIASES.get(
                str(values["content_mode"]), str(values["content_mode"])
            )
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be an object")
        return cls.from_dict(raw)

    def public_summary(self) -> dict:
        return {
            "seed": self.seed,
            "topic_sampling": list(self.topic_sampling),
            "mode": list(self.mode),
            "content_mode": self.content_mode,
            "platform": self.platform,
            "n_train": self.n_train,
            "m_synth": self.m_synth,
            "split_ratio": self.split_ratio,
            "num_examples": self.num_examples,
            "backend": self.backend,
            "embeddings": self.embeddings,
            "classifier": self.classifier,
        }


_CONTENT_ALIASES = {"zero-shot": "zero", "few-shot": "few"}


def _as_tuple(value, key: str) -> tuple[str, ...]:
    if isinstance(value, str):
        parts = [p.strip() for p in value.split(",")]
        return tuple(p for p in parts if p)
    if isinstance(value, (list, tuple)):
        return tuple(str(v) for v in value)
    raise ConfigError(f"{key} must be a string or list")


class FixtureBackend:
    """Canned backend that cycles per prompt kind, for reproducible runs.

    The fixture file maps prompt kinds to completion lists; each kind has its
    own cursor so interleaved stages stay aligned. reset() is called at the
    start of every community, which keeps resumed runs byte-identical."""

    backend_id = "fixture"

    def __init__(self, buckets: Mapping[str, Sequence[str]]):
        self._buckets = {k: tuple(v) for k, v in buckets.items()}
        for kind, bucket in self._buckets.items():
            if not bucket:
                raise ConfigError(f"fixture bucket {kind!r} is empty")
        self._cursors: dict[str, int] = {}

    @classmethod
    def from_file(cls, path: str | Path) -> "FixtureBackend":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load fixtures {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("fixture root must be an object")
        return cls(raw)

    def reset(self) -> None:
        self._cursors.clear()

    def generate(self, request: LLMRequest) -> str:
        kind = prompt_kind(request.prompt)
        bucket = self._buckets.get(kind)
        if bucket is None:
            raise BackendProtocolError(f"no fixture bucket for prompt kind {kind!r}")
        i = self._cursors.get(kind, 0)
        self._cursors[kind] = i + 1
        return bucket[i % len(bucket)]


class RecordingBackend:
    """Wraps a backend and keeps (prompt, completion) pairs for transcripts."""

    def __init__(self, inner):
        self.inner = inner
        self.records: list[tuple[str, str]] = []

    @property
    def backend_id(self) -> str:
        return self.inner.backend_id

    def reset(self) -> None:
        self.records.clear()
        if hasattr(self.inner, "reset"):
            self.inner.reset()

    def generate(self, request: LLMRequest) -> str:
        text = self.inner.generate(request)
        self.records.append((request.prompt, text))
        return text


def build_backend(config: PipelineConfig):
    if config.backend == "mock":
        return FixtureBackend.from_file(config.backend_fixtures)
    return HTTPBackend(config.backend_url)


def build_gateway(config: PipelineConfig, backend=None) -> Gateway:
    return Gateway(
        backend if backend is not None else build_backend(config),
        context_budget=config.context_budget,
        temperature=config.temperature,
        concurrency=config.concurrency,
    )


def build_embedder(config: PipelineConfig):
    return embedder_from_spec(config.embeddings)


def build_classifier(config: PipelineConfig, gateway: Gateway):
    if config.classifier == "keyword":
        try:
            raw = json.loads(Path(config.taxonomy).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load taxonomy {config.taxonomy}: {exc}") from exc
        if not isinstance(raw, dict) or not all(
            isinstance(v, list) and all(isinstance(k, str) for k in v) for v in raw.values()
        ):
            raise ConfigError("taxonomy must map labels to keyword lists")
        return KeywordClassifier(raw)
    return LLMClassifier(gateway)


def _stream(seed: int, community: str, tag: str) -> random.Random:
    return random.Random(f"{seed}/{community}/{tag}")


def _mean_rows(rows: Sequence[Mapping[str, float | None]]) -> dict[str, float | None]:
    """Per-key mean over rows, ignoring None; None when nothing contributes."""
    out: dict[str, float | None] = {}
    keys: list[str] = []
    for row in rows:
        for k in row:
            if k not in out:
                out[k] = None
                keys.append(k)
    for k in keys:
        values = [row[k] for row in rows if row.get(k) is not None]
        out[k] = sum(values) / len(values) if values else None
    return out


def _structural_means(threads: Sequence[Thread]) -> dict[str, float | None]:
    rows = []
    for t in threads:
        row = dict(structural_metrics(t).as_row())
        row.update(user_metrics(t).as_row())
        rows.append(row)
    return _mean_rows(rows)


@dataclass
class CommunityPrep:
    community: str
    train: list[Thread]
    test: list[Thread]
    labeled_train: list[Thread]  # train sample with extracted topics attached
    model: object
    scaffold_examples: list[Thread] = field(default_factory=list)
    content_pool: list[tuple[str, str]] = field(default_factory=list)
    n_extraction_failures: int = 0


def prepare_community(
    community: str,
    threads: Sequence[Thread],
    config: PipelineConfig,
    gateway: Gateway,
    need_scaffolds: bool,
    need_content_pool: bool,
) -> CommunityPrep | str:
    """Split, sample, extract topics and fit the topic model.

    Returns a skip reason string when the community is too small to supply
    the configured number of in-context examples."""
    if len(threads) < 2:
        return "fewer than 2 threads"
    split_rng = _stream(config.seed, community, "split")
    train, test = split_train_test(threads, config.split_ratio, split_rng)
    if not train or not test:
        return "empty split"
    sample_rng = _stream(config.seed, community, "train-sample")
    n_train = min(config.n_train, len(train))
    if n_train < config.n_train:
        logger.warning("%s: only %d train threads (wanted %d)", community, n_train, config.n_train)
    train_sample = sample_rng.sample(train, n_train)

    labeled: list[tuple[Thread, object]] = []
    failures = 0
    for t in train_sample:
        try:
            ts = extract_topics(t, gateway, DEFAULT_TOPIC_EXEMPLARS)
        except ExtractionFailedError as exc:
            logger.warning("%s: topic extraction failed (%s), thread dropped", community, exc)
            failures += 1
            continue
        ts = replace(ts, community=community)
        labeled.append((with_topics(t, ts.topics, community), ts))
    if len(labeled) < max(config.num_examples, 1):
        return f"only {len(labeled)} threads with topics (need {config.num_examples})"
    model = fit_topic_model(labeled)
    labeled_train = [t for t, _ in labeled]

    prep = CommunityPrep(
        community=community,
        train=train,
        test=test,
        labeled_train=labeled_train,
        model=model,
        n_extraction_failures=failures,
    )
    if need_scaffolds:
        for t in labeled_train:
            try:
                prep.scaffold_examples.append(
                    build_scaffold_from_thread(t, gateway, DEFAULT_SUMMARY_EXEMPLARS)
                )
            except EmptyCompletionError as exc:
                logger.warning("%s: scaffold example dropped (%s)", community, exc)
        if len(prep.scaffold_examples) < config.num_examples:
            return (
                f"only {len(prep.scaffold_examples)} example scaffolds "
                f"(need {config.num_examples})"
            )
    if need_content_pool:
        bodies = [p.body for t in labeled_train for p in t.posts]
        for body in bodies[: config.content_pool_size]:
            try:
                summary = summarize_post(body, DEFAULT_SUMMARY_EXEMPLARS, gateway)
            except EmptyCompletionError as exc:
                logger.warning("%s: content exemplar dropped (%s)", community, exc)
                continue
            prep.content_pool.append((summary, body))
    return prep


@dataclass
class VariantResult:
    label: str
    attempts: int = 0
    successes: int = 0
    infeasible_topic_draws: int = 0
    valid: list[Thread] = field(default_factory=list)

    @property
    def success_rate(self) -> float:
        return self.successes / self.attempts if self.attempts else 0.0


def _sampler(sampling: str):
    return sample_topics_independent if sampling == "ind" else sample_topics_conditional


def run_generation_variant(
    prep: CommunityPrep,
    sampling: str,
    mode: str,
    config: PipelineConfig,
    gateway: Gateway,
) -> VariantResult:
    label = row_label(sampling, mode)
    result = VariantResult(label=label)
    topic_rng = _stream(config.seed, prep.community, f"topics/{sampling}/{mode}")
    gen_rng = _stream(config.seed, prep.community, f"generate/{sampling}/{mode}")
    gen_config = GenerationConfig(
        mode=mode, num_examples=config.num_examples, platform=config.platform
    )
    draw = _sampler(sampling)
    for _ in range(config.m_synth):
        result.attempts += 1
        try:
            topics = draw(prep.model, topic_rng, community=prep.community)
        except SamplingInfeasibleError as exc:
            logger.warning("%s/%s: topic draw infeasible (%s)", prep.community, label, exc)
            result.infeasible_topic_draws += 1
            continue
        if mode == "baseline":
            outcome = generate_thread_baseline(
                topics, prep.labeled_train, gateway, gen_config, gen_rng
            )
        else:
            outcome = generate_scaffold_fewshot(
                topics, prep.scaffold_examples, gateway, gen_config, gen_rng
            )
        if outcome.ok:
            result.successes += 1
            result.valid.append(outcome.thread)
    return result


def run_content_variant(
    prep: CommunityPrep,
    sampling: str,
    scaffolds: Sequence[Thread],
    config: PipelineConfig,
    gateway: Gateway,
) -> VariantResult:
    mode_label = "content-zeroshot" if config.content_mode == "zero" else "content-fewshot"
    label = row_label(sampling, mode_label)
    result = VariantResult(label=label)
    content_rng = _stream(config.seed, prep.community, f"content/{sampling}")
    gen_config = GenerationConfig(
        mode="scaffold-fewshot",
        content_mode="zero-shot" if config.content_mode == "zero" else "few-shot",
        num_examples=config.num_examples,
        platform=config.platform,
    )
    for scaffold in scaffolds:
        result.attempts += 1
        outcome: GenerationOutcome = generate_content(
            scaffold, prep.content_pool, gateway, gen_config, content_rng
        )
        if outcome.ok:
            result.successes += 1
            result.valid.append(outcome.thread)
    return result


def evaluate_threads(
    synthetic: Sequence[Thread],
    test: Sequence[Thread],
    community: str,
    config: PipelineConfig,
    gateway: Gateway,
    embedder,
    classifier,
    realism_rng: random.Random,
) -> dict[str, float | None]:
    """All enabled metric cells for one community and one thread set."""
    cells: dict[str, float | None] = _structural_means(synthetic)
    try:
        synth_vec = topic_vector(synthetic, classifier)
        test_vec = topic_vector(test, classifier)
        cells["topic_js_similarity"] = js_similarity(synth_vec, test_vec)
        cells["topic_weighted_jaccard"] = weighted_jaccard(synth_vec, test_vec)
    except (EmptyTopicVectorError, ValueError) as exc:
        logger.warning("%s: topic similarity unavailable (%s)", community, exc)
        cells["topic_js_similarity"] = None
        cells["topic_weighted_jaccard"] = None
    if not config.skip_mauve:
        cells["mauve"] = _mauve_cell(synthetic, test, community, config, embedder)
    if not config.skip_realism:
        cells["realism"] = _realism_cell(synthetic, community, config, gateway, realism_rng)
    return cells


def _mauve_cell(synthetic, test, community, config, embedder) -> float | None:
    if len(synthetic) < 2 or len(test) < 2:
        logger.warning("%s: too few threads for mauve", community)
        return None
    try:
        real_emb = embed_threads(test, embedder)
        synth_emb = embed_threads(synthetic, embedder)
        return mauve(
            real_emb,
            synth_emb,
            MauveConfig(n_clusters=config.mauve_clusters, seed=config.seed),
        )
    except (EmbeddingError, ValueError) as exc:
        logger.warning("%s: mauve unavailable (%s)", community, exc)
        return None


def _realism_cell(threads, community, config, gateway, rng) -> float | None:
    if not threads:
        return None
    realism_config = RealismConfig(
        n_threads=config.realism_threads,
        paths_per_thread=config.realism_paths,
        max_path_len=config.max_path_len,
    )
    try:
        return realism_score(threads, gateway, realism_config, rng).score
    except (NoJudgmentsError, ValueError) as exc:
        logger.warning("%s: realism unavailable (%s)", community, exc)
        return None


def _recitation_payload(train, synthetic, embedder, community) -> dict | None:
    if not train or not synthetic:
        return None
    try:
        rep = recitation_report(train, synthetic, embedder)
    except (ValueError, EmbeddingError) as exc:
        logger.warning("%s: recitation unavailable (%s)", community, exc)
        return None
    return {
        "max_similarity": rep.max_similarity,
        "quantiles": rep.quantiles,
        "n_pairs": rep.n_pairs,
        "top_pairs": [list(p) for p in rep.top_pairs],
    }


def audit_generation_prompts(
    records: Sequence[tuple[str, str]],
    test: Sequence[Thread],
) -> dict:
    """Assert no held-out thread text appears in any generation-stage prompt."""
    serialized = [serialize_thread(t, include_topics=False) for t in test]
    generation_prompts = 0
    violations: list[dict] = []
    for prompt, _ in records:
        kind = prompt_kind(prompt)
        if kind not in GENERATION_KINDS:
            continue
        generation_prompts += 1
        for i, text in enumerate(serialized):
            if text in prompt:
                violations.append({"kind": kind, "test_index": i})
    return {"generation_prompts": generation_prompts, "violations": violations}


def _label_slug(label: str) -> str:
    return label.lower().replace("/", "-").replace(" ", "-")


def process_community(
    community: str,
    threads: Sequence[Thread],
    config: PipelineConfig,
    gateway: Gateway,
    recording: RecordingBackend,
    embedder,
    classifier,
) -> dict:
    """Run every variant for one community and return its done-payload."""
    recording.reset()
    need_scaffolds = "scaffold-fewshot" in config.mode
    need_pool = config.content_mode == "few"
    prep = prepare_community(community, threads, config, gateway, need_scaffolds, need_pool)
    if isinstance(prep, str):
        logger.warning("%s skipped: %s", community, prep)
        return {"community": community, "skipped": prep}

    rows: dict[str, dict] = {}
    scaffold_valid: dict[str, list[Thread]] = {}
    for sampling in config.topic_sampling:
        for mode in config.mode:
            result = run_generation_variant(prep, sampling, mode, config, gateway)
            if mode == "scaffold-fewshot":
                scaffold_valid[sampling] = result.valid
            rows[result.label] = _row_payload(result, prep, config, gateway, embedder, classifier)
    if config.content_mode != "none":
        if need_pool and not prep.content_pool:
            logger.warning("%s: no content exemplars, content variants skipped", community)
        else:
            for sampling in config.topic_sampling:
                result = run_content_variant(
                    prep, sampling, scaffold_valid.get(sampling, []), config, gateway
                )
                rows[result.label] = _row_payload(
                    result, prep, config, gateway, embedder, classifier
                )

    reference = {
        "TEST SET": _reference_cells(prep.test, prep, "test", config, gateway, embedder, classifier),
        "TRAIN SET": _reference_cells(prep.train, prep, "train", config, gateway, embedder, classifier),
    }

    audit = audit_generation_prompts(recording.records, prep.test)
    payload = {
        "community": community,
        "n_threads": len(threads),
        "n_train": len(prep.train),
        "n_test": len(prep.test),
        "n_train_sample": len(prep.labeled_train),
        "n_extraction_failures": prep.n_extraction_failures,
        "rows": rows,
        "reference": reference,
        "audit": audit,
    }
    if audit["violations"]:
        raise AuditError(f"{community}: test text leaked into generation prompts: {audit}")
    return payload


def _row_payload(result, prep, config, gateway, embedder, classifier) -> dict:
    realism_rng = _stream(config.seed, prep.community, f"realism/{_label_slug(result.label)}")
    metrics: dict[str, float | None]
    if result.valid:
        metrics = evaluate_threads(
            result.valid, prep.test, prep.community,
            config, gateway, embedder, classifier, realism_rng,
        )
    else:
        metrics = {}
    return {
        "attempts": result.attempts,
        "successes": result.successes,
        "infeasible_topic_draws": result.infeasible_topic_draws,
        "success_rate": result.success_rate,
        "metrics": metrics,
        "recitation": _recitation_payload(
            prep.labeled_train, result.valid, embedder, prep.community
        ),
        "threads": [
            thread_to_record(prep.community, f"s{i + 1}", t)
            for i, t in enumerate(result.valid)
        ],
    }


def _reference_cells(threads, prep, tag, config, gateway, embedder, classifier) -> dict:
    """TEST SET carries structure (and realism); TRAIN SET adds the
    train-vs-test distributional reference."""
    cells = _structural_means(threads)
    if tag == "train":
        try:
            train_vec = topic_vector(threads, classifier)
            test_vec = topic_vector(prep.test, classifier)
            cells["topic_js_similarity"] = js_similarity(train_vec, test_vec)
            cells["topic_weighted_jaccard"] = weighted_jaccard(train_vec, test_vec)
        except (EmptyTopicVectorError, ValueError) as exc:
            logger.warning("%s: reference topic similarity unavailable (%s)", prep.community, exc)
        if not config.skip_mauve:
            cells["mauve"] = _mauve_cell(threads, prep.test, prep.community, config, embedder)
    if tag == "test" and not config.skip_realism:
        rng = _stream(config.seed, prep.community, "realism/test-set")
        cells["realism"] = _realism_cell(threads, prep.community, config, gateway, rng)
    return cells


def _write_json(path: Path, payload) -> None:
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def _persist_community(out_dir: Path, payload: dict, records: Sequence[tuple[str, str]]) -> None:
    cdir = out_dir / "communities" / payload["community"]
    cdir.mkdir(parents=True, exist_ok=True)
    if not payload.get("skipped"):
        lines = []
        for prompt, completion in records:
            lines.append(
                json.dumps(
                    {"kind": prompt_kind(prompt), "prompt": prompt, "completion": completion},
                    sort_keys=True,
                    ensure_ascii=False,
                )
            )
        (cdir / "transcripts.jsonl").write_text(
            "\n".join(lines) + ("\n" if lines else ""), encoding="utf-8"
        )
        for label, row in payload["rows"].items():
            slug = _label_slug(label)
            thread_lines = [
                json.dumps(rec, sort_keys=True, ensure_ascii=False) for rec in row["threads"]
            ]
            (cdir / f"synthetic-{slug}.jsonl").write_text(
                "\n".join(thread_lines) + ("\n" if thread_lines else ""), encoding="utf-8"
            )
    _write_json(cdir / "done.json", payload)


def assemble_report(config: PipelineConfig, payloads: Sequence[dict]) -> MetricsReport:
    report = MetricsReport(config=config.public_summary())
    rows: dict[str, ReportRow] = {}
    for payload in payloads:
        if payload.get("skipped"):
            continue
        community = payload["community"]
        report.communities.append(community)
        for label, row in payload["rows"].items():
            cell = {"success_rate": row["success_rate"], **row["metrics"]}
            rows.setdefault(label, ReportRow(label=label)).per_community[community] = cell
        for label, cells in payload["reference"].items():
            rows.setdefault(label, ReportRow(label=label)).per_community[community] = cells
    for label in sorted(rows):
        report.rows.append(rows[label])
    report.communities.sort()
    return report


def run_pipeline(config: PipelineConfig) -> MetricsReport:
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "config.json", {**config.public_summary(),
                                          "dataset": config.dataset,
                                          "out_dir": config.out_dir})

    dataset = load_dataset(config.dataset)
    if config.communities:
        dataset = dataset.subset(list(config.communities))

    recording = RecordingBackend(build_backend(config))
    gateway = build_gateway(config, backend=recording)
    embedder = build_embedder(config)
    classifier = build_classifier(config, gateway)

    payloads: list[dict] = []
    for community in dataset.community_names():
        done_path = out_dir / "communities" / community / "done.json"
        if done_path.exists():
            logger.info("%s: resuming from %s", community, done_path)
            payloads.append(json.loads(done_path.read_text(encoding="utf-8")))
            continue
        payload = process_community(
            community,
            dataset.communities[community],
            config,
            gateway,
            recording,
            embedder,
            classifier,
        )
        _persist_community(out_dir, payload, recording.records)
        payloads.append(payload)

    report = assemble_report(config, payloads)
    write_report(report, out_dir)
    _write_json(out_dir / "usage.json", gateway.usage_summary())
    return report
