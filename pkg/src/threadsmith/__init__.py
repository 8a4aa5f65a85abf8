"""Synthetic discussion-thread generation and fidelity evaluation."""

from .threads import (
    Post,
    Thread,
    Scaffold,
    ThreadParseError,
    ValidityReport,
    parse_thread_text,
    serialize_thread,
    validate_structure,
    validate_thread_text,
    reply_chain,
    normalize_post_ids,
)
from .llm import (
    Gateway,
    GatewayError,
    HTTPBackend,
    LLMRequest,
    LLMResponse,
    MockBackend,
    PromptTemplate,
    ScriptedBackend,
    render_prompt,
    truncate_to_budget,
)
from .topics import (
    TopicModel,
    TopicSet,
    SamplingInfeasibleError,
    extract_topics,
    fit_topic_model,
    conditional_prob,
    sample_topics_conditional,
    sample_topics_independent,
)
from .generate import (
    GenerationConfig,
    GenerationOutcome,
    build_scaffold_from_thread,
    generate_content,
    generate_scaffold_fewshot,
    generate_thread_baseline,
    summarize_post,
    validity_metric,
)
from .tree_metrics import (
    StructuralMetrics,
    UserMetrics,
    aggregate_metrics,
    structural_metrics,
    user_metrics,
)
from .embeddings import (
    EmbeddingSet,
    HashingEmbedder,
    PrecomputedEmbeddings,
    BridgeEmbedder,
    embed_threads,
    embedder_from_spec,
)
from .similarity import (
    KeywordClassifier,
    LLMClassifier,
    MauveConfig,
    js_divergence,
    js_similarity,
    mauve,
    recitation_report,
    topic_vector,
    weighted_jaccard,
)
from .realism import (
    DiscussionPath,
    RealismConfig,
    RealismScore,
    corrupt_path,
    meta_evaluate,
    realism_score,
    sample_paths,
)
from .dataset import (
    Dataset,
    DataError,
    load_dataset,
    split_train_test,
    stratified_sample_by_size,
    stratified_sample_communities,
    write_dataset,
)
from .report import MetricsReport, ReportRow, merge_reports, write_report
from .pipeline import ConfigError, FixtureBackend, PipelineConfig, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "Post",
    "Thread",
    "Scaffold",
    "ThreadParseError",
    "ValidityReport",
    "parse_thread_text",
    "serialize_thread",
    "validate_structure",
    "validate_thread_text",
    "reply_chain",
    "normalize_post_ids",
    "Gateway",
    "GatewayError",
    "HTTPBackend",
    "LLMRequest",
    "LLMResponse",
    "MockBackend",
    "PromptTemplate",
    "ScriptedBackend",
    "render_prompt",
    "truncate_to_budget",
    "TopicModel",
    "TopicSet",
    "SamplingInfeasibleError",
    "extract_topics",
    "fit_topic_model",
    "conditional_prob",
    "sample_topics_conditional",
    "sample_topics_independent",
    "GenerationConfig",
    "GenerationOutcome",
    "build_scaffold_from_thread",
    "generate_content",
    "generate_scaffold_fewshot",
    "generate_thread_baseline",
    "summarize_post",
    "validity_metric",
    "StructuralMetrics",
    "UserMetrics",
    "aggregate_metrics",
    "structural_metrics",
    "user_metrics",
    "EmbeddingSet",
    "HashingEmbedder",
    "PrecomputedEmbeddings",
    "BridgeEmbedder",
    "embed_threads",
    "embedder_from_spec",
    "KeywordClassifier",
    "LLMClassifier",
    "MauveConfig",
    "js_divergence",
    "js_similarity",
    "mauve",
    "recitation_report",
    "topic_vector",
    "weighted_jaccard",
    "DiscussionPath",
    "RealismConfig",
    "RealismScore",
    "corrupt_path",
    "meta_evaluate",
    "realism_score",
    "sample_paths",
    "Dataset",
    "DataError",
    "load_dataset",
    "split_train_test",
    "stratified_sample_by_size",
    "stratified_sample_communities",
    "write_dataset",
    "MetricsReport",
    "ReportRow",
    "merge_reports",
    "write_report",
    "ConfigError",
    "FixtureBackend",
    "PipelineConfig",
    "run_pipeline",
]
