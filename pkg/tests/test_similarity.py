import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ReplayBackend, thread_from_parents
from threadsmith.embeddings import EmbeddingSet, HashingEmbedder
from threadsmith.llm import Gateway
from threadsmith.similarity import (
    EmptyTopicVectorError,
    KeywordClassifier,
    LLMClassifier,
    MauveConfig,
    js_divergence,
    js_similarity,
    mauve,
    recitation_report,
    thread_text,
    topic_vector,
    weighted_jaccard,
)
from threadsmith.threads import Post, Thread

_dists = st.dictionaries(
    st.sampled_from("abcdefg"),
    st.floats(min_value=0.01, max_value=10.0),
    min_size=1,
    max_size=7,
).map(lambda d: {k: v / sum(d.values()) for k, v in d.items()})


def test_js_similarity_identity():
    v = {"a": 0.5, "b": 0.3, "c": 0.2}
    assert js_similarity(v, v) == pytest.approx(1.0, abs=1e-12)


def test_js_similarity_disjoint_support():
    assert js_similarity({"a": 1.0}, {"b": 1.0}) == pytest.approx(0.0, abs=1e-12)
    assert js_divergence({"a": 1.0}, {"b": 1.0}) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(_dists, _dists)
def test_js_divergence_bounded_and_symmetric(v1, v2):
    d = js_divergence(v1, v2)
    assert -1e-12 <= d <= 1.0 + 1e-12
    assert d == pytest.approx(js_divergence(v2, v1), abs=1e-12)


def test_weighted_jaccard_identity():
    v = {"a": 0.7, "b": 0.3}
    assert weighted_jaccard(v, v) == 1.0


def test_weighted_jaccard_disjoint():
    assert weighted_jaccard({"a": 1.0}, {"b": 1.0}) == 0.0


def test_weighted_jaccard_worked_value():
    # min sums to 0.5, max sums to 1.5
    assert weighted_jaccard({"A": 1.0}, {"A": 0.5, "B": 0.5}) == pytest.approx(1 / 3)
    assert weighted_jaccard({"A": 0.5, "B": 0.5}, {"A": 1.0}) == pytest.approx(1 / 3)


@settings(max_examples=100, deadline=None)
@given(_dists, _dists)
def test_weighted_jaccard_bounded(v1, v2):
    wj = weighted_jaccard(v1, v2)
    assert 0.0 <= wj <= 1.0
    assert wj == pytest.approx(weighted_jaccard(v2, v1), abs=1e-12)


def test_empty_inputs_rejected():
    with pytest.raises(ValueError):
        js_divergence({}, {"a": 1.0})
    with pytest.raises(ValueError):
        weighted_jaccard({"a": 1.0}, {})


def _embedding_sets(seed=0, n=40, dim=8, spread=0.01, distance=0.0):
    rng = np.random.default_rng(seed)
    center_a = np.zeros(dim)
    center_b = np.zeros(dim)
    center_b[0] = distance
    real = center_a + spread * rng.standard_normal((n, dim))
    synth = center_b + spread * rng.standard_normal((n, dim))
    return (
        EmbeddingSet(vectors=real, ids=tuple(f"r{i}" for i in range(n))),
        EmbeddingSet(vectors=synth, ids=tuple(f"s{i}" for i in range(n))),
    )


def test_mauve_self_is_one():
    real, _ = _embedding_sets(distance=3.0)
    assert mauve(real, real, MauveConfig(n_clusters=4)) == pytest.approx(1.0, abs=1e-6)


def test_mauve_symmetry():
    real, synth = _embedding_sets(seed=3, distance=0.5)
    config = MauveConfig(n_clusters=4)
    assert mauve(real, synth, config) == pytest.approx(
        mauve(synth, real, config), abs=1e-9
    )


def test_mauve_separated_gaussians_low():
    real, synth = _embedding_sets(seed=1, distance=10.0, spread=0.01)
    score = mauve(real, synth, MauveConfig(n_clusters=2))
    assert score < 0.1


def test_mauve_identical_distributions_high():
    real, synth = _embedding_sets(seed=2, distance=0.0)
    score = mauve(real, synth, MauveConfig(n_clusters=2))
    assert score > 0.9


def test_mauve_deterministic_for_seed():
    real, synth = _embedding_sets(seed=4, distance=1.0)
    config = MauveConfig(n_clusters=3, seed=11)
    assert mauve(real, synth, config) == mauve(real, synth, config)


def test_mauve_rejects_mismatched_inputs():
    real, synth = _embedding_sets()
    other = EmbeddingSet(vectors=np.zeros((4, 5)), ids=("a", "b", "c", "d"))
    with pytest.raises(ValueError):
        mauve(real, other)
    tiny = EmbeddingSet(vectors=np.zeros((1, 8)), ids=("a",))
    with pytest.raises(ValueError):
        mauve(real, tiny)


def test_mauve_degenerate_quantization_warns():
    vectors = np.zeros((6, 4))
    same = EmbeddingSet(vectors=vectors, ids=tuple(f"i{i}" for i in range(6)))
    with pytest.warns(UserWarning, match="degenerate"):
        score = mauve(same, same, MauveConfig(n_clusters=1))
    assert score == pytest.approx(1.0, abs=1e-6)


def test_mauve_config_validation():
    with pytest.raises(ValueError):
        MauveConfig(scaling_c=0.0)
    with pytest.raises(ValueError):
        MauveConfig(n_grid=1)
    with pytest.raises(ValueError):
        MauveConfig(n_clusters=0)


def test_thread_text_flattens():
    t = Thread(
        title="A title",
        posts=(Post("post", "user-1", "NA", "body\nwith lines"),),
    )
    assert thread_text(t) == "A title body with lines"


TAXONOMY = {"camping": ("tent", "camp"), "baking": ("bread", "oven")}


def _thread_with_body(body):
    return Thread(title="t", posts=(Post("post", "user-1", "NA", body),))


def test_keyword_classifier():
    clf = KeywordClassifier(TAXONOMY, confidence=0.8)
    assert clf("We pitched the TENT near camp") == [("camping", 0.8)]
    assert clf("bread in a tent") == [("baking", 0.8), ("camping", 0.8)]
    assert clf("nothing relevant") == []


def test_topic_vector_counts_label_shares():
    clf = KeywordClassifier(TAXONOMY)
    threads = [
        _thread_with_body("a tent story"),
        _thread_with_body("bread and oven"),
        _thread_with_body("camp bread"),
    ]
    vec = topic_vector(threads, clf)
    assert vec == {"baking": 0.5, "camping": 0.5}
    assert sum(vec.values()) == pytest.approx(1.0)


def test_topic_vector_confidence_floor():
    clf = KeywordClassifier(TAXONOMY, confidence=0.05)
    with pytest.raises(EmptyTopicVectorError):
        topic_vector([_thread_with_body("tent")], clf, min_confidence=0.1)


def test_llm_classifier_parses_lines():
    gateway = Gateway(ReplayBackend(["camping: 0.9\nbaking: 1.7\nnoise\nblank: x"]))
    clf = LLMClassifier(gateway, labels=("camping", "baking"))
    assert clf("text") == [("camping", 0.9), ("baking", 1.0)]


def test_recitation_report_detects_copy():
    real = [thread_from_parents([None, 0], body="a rare phrase about marmots")]
    synth_copy = [thread_from_parents([None, 0], body="a rare phrase about marmots")]
    synth_fresh = [thread_from_parents([None, 0], body="totally different words here")]
    embedder = HashingEmbedder(dim=64)
    copied = recitation_report(real, synth_copy, embedder)
    fresh = recitation_report(real, synth_fresh, embedder)
    assert copied.max_similarity == pytest.approx(1.0, abs=1e-9)
    assert fresh.max_similarity < 0.9
    assert copied.n_pairs == 4
    assert len(copied.top_pairs) == 4
    ref_real, ref_synth, sim = copied.top_pairs[0]
    assert ref_real.startswith("real:")
    assert ref_synth.startswith("synth:")
    assert sim == pytest.approx(copied.max_similarity)


def test_recitation_report_requires_threads():
    with pytest.raises(ValueError):
        recitation_report([], [thread_from_parents([None])], HashingEmbedder(dim=8))
