import json
import shutil
from pathlib import Path

import pytest

from threadsmith.cli import main
from threadsmith.llm import BackendProtocolError, LLMRequest
from threadsmith.pipeline import (
    AuditError,
    ConfigError,
    FixtureBackend,
    PipelineConfig,
    RecordingBackend,
    audit_generation_prompts,
    run_pipeline,
)
from threadsmith.prompts import (
    GENERATION_KINDS,
    KIND_CLASSIFY,
    KIND_EXTRACT_TOPICS,
    KIND_FIRST_POST,
    KIND_GENERATE_SCAFFOLD,
    KIND_GENERATE_THREAD,
    KIND_JUDGE_PATH,
    KIND_NEXT_POST,
    KIND_SUMMARIZE,
    KIND_UNKNOWN,
    prompt_kind,
)
from threadsmith.report import load_report
from threadsmith.threads import parse_thread_text, serialize_thread

REPO = Path(__file__).resolve().parent.parent
FIXTURES = REPO / "fixtures"


def _fixture_config(tmp_path, **overrides):
    with open(FIXTURES / "fixture_config.json") as fh:
        raw = json.load(fh)
    raw["dataset"] = str(FIXTURES / "fixture_dataset.jsonl")
    raw["backend_fixtures"] = str(FIXTURES / "mock_fixtures.json")
    raw["taxonomy"] = str(FIXTURES / "taxonomy.json")
    raw["out_dir"] = str(tmp_path / "run")
    raw.update(overrides)
    return PipelineConfig.from_dict(raw)


def test_config_validation_errors():
    base = dict(dataset="d.jsonl", out_dir="out")
    with pytest.raises(ConfigError):
        PipelineConfig(**base, split_ratio=1.5)
    with pytest.raises(ConfigError):
        PipelineConfig(**base, n_train=1, num_examples=2)
    with pytest.raises(ConfigError):
        PipelineConfig(**base, m_synth=0)
    with pytest.raises(ConfigError):
        PipelineConfig(**base, topic_sampling=("both",))
    with pytest.raises(ConfigError):
        PipelineConfig(**base, mode=("finetune",))
    with pytest.raises(ConfigError):
        PipelineConfig(**base, content_mode="sometimes")
    with pytest.raises(ConfigError):
        PipelineConfig(**base, content_mode="few", mode=("baseline",))
    with pytest.raises(ConfigError):
        PipelineConfig(**base, backend="mock", backend_fixtures="")
    with pytest.raises(ConfigError):
        PipelineConfig(**base, backend="http", backend_url="")
    with pytest.raises(ConfigError):
        PipelineConfig(**base, classifier="keyword", taxonomy="")


def test_config_from_dict():
    config = PipelineConfig.from_dict(
        {
            "dataset": "d.jsonl",
            "out_dir": "out",
            "communities": "a, b",
            "topic_sampling": "ind,cond",
            "mode": "baseline",
            "content_mode": "zero-shot",
            "backend": "mock",
            "backend_fixtures": "f.json",
            "taxonomy": "t.json",
        }
    )
    assert config.communities == ("a", "b")
    assert config.topic_sampling == ("ind", "cond")
    assert config.mode == ("baseline", "scaffold-fewshot")[0:1]
    assert config.content_mode == "zero"
    with pytest.raises(ConfigError, match="unknown"):
        PipelineConfig.from_dict({"dataset": "d", "out_dir": "o", "wat": 1})


def test_config_public_summary_hides_paths():
    config = PipelineConfig(
        dataset="secret/data.jsonl",
        out_dir="secret/out",
        backend="mock",
        backend_fixtures="f.json",
        taxonomy="t.json",
    )
    summary = config.public_summary()
    assert "dataset" not in summary
    assert "out_dir" not in summary
    assert summary["seed"] == 0


def test_fixture_backend_cycles_per_kind():
    backend = FixtureBackend(
        {KIND_EXTRACT_TOPICS: ["a", "b"], KIND_SUMMARIZE: ["The user writes."]}
    )
    topic_prompt = "List the topics discussed in the thread.\n\nsome thread\nTopics:"
    outs = [backend.generate(LLMRequest(prompt=topic_prompt)) for _ in range(3)]
    assert outs == ["a", "b", "a"]
    backend.reset()
    assert backend.generate(LLMRequest(prompt=topic_prompt)) == "a"


def test_fixture_backend_missing_bucket():
    backend = FixtureBackend({KIND_EXTRACT_TOPICS: ["a"]})
    with pytest.raises(BackendProtocolError):
        backend.generate(LLMRequest(prompt="unclassifiable chatter"))


def test_recording_backend_captures():
    inner = FixtureBackend({KIND_EXTRACT_TOPICS: ["a"]})
    recording = RecordingBackend(inner)
    prompt = "List the topics discussed in the thread.\n\nx\nTopics:"
    recording.generate(LLMRequest(prompt=prompt))
    assert recording.records == [(prompt, "a")]
    recording.reset()
    assert recording.records == []
    assert recording.backend_id == inner.backend_id


def test_prompt_kind_router():
    fixtures = json.loads((FIXTURES / "mock_fixtures.json").read_text())
    assert set(fixtures) >= {
        KIND_EXTRACT_TOPICS,
        KIND_SUMMARIZE,
        KIND_GENERATE_THREAD,
        KIND_GENERATE_SCAFFOLD,
        KIND_FIRST_POST,
        KIND_NEXT_POST,
        KIND_JUDGE_PATH,
        KIND_CLASSIFY,
    }
    assert prompt_kind("gibberish with no markers") == KIND_UNKNOWN
    assert KIND_JUDGE_PATH not in GENERATION_KINDS
    assert KIND_CLASSIFY not in GENERATION_KINDS
    assert KIND_UNKNOWN not in GENERATION_KINDS


def test_run_pipeline_end_to_end(tmp_path):
    config = _fixture_config(tmp_path)
    report = run_pipeline(config)
    labels = {r.label for r in report.rows}
    assert labels == {
        "TEST SET",
        "TRAIN SET",
        "IND BASELINE",
        "IND SCAFFOLD/FewS",
        "IND CONT/FewS",
        "COND BASELINE",
        "COND SCAFFOLD/FewS",
        "COND CONT/FewS",
    }
    assert report.communities == ["baking", "camping"]
    # alternating valid/invalid fixture buckets pin the success rate
    for label in ("IND BASELINE", "IND SCAFFOLD/FewS", "COND BASELINE"):
        mean, std, n = report.row(label).cell("success_rate")
        assert mean == 0.5
        assert std == 0.0
        assert n == 2
    mean, _, _ = report.row("IND CONT/FewS").cell("success_rate")
    assert mean == 1.0
    # judge fixture alternates yes/no
    mean, _, _ = report.row("TEST SET").cell("realism")
    assert mean == 0.5
    out = Path(config.out_dir)
    assert (out / "report.json").exists()
    assert (out / "report.csv").exists()
    assert (out / "report.txt").exists()
    assert (out / "usage.json").exists()
    for community in ("baking", "camping"):
        cdir = out / "communities" / community
        assert (cdir / "done.json").exists()
        assert (cdir / "transcripts.jsonl").exists()
        assert list(cdir.glob("synthetic-*.jsonl"))


def test_run_pipeline_deterministic_reports(tmp_path):
    first = run_pipeline(_fixture_config(tmp_path / "a"))
    second = run_pipeline(_fixture_config(tmp_path / "b"))
    a = (Path(first.config["out_dir"]) if "out_dir" in first.config else tmp_path / "a" / "run")
    report_a = (tmp_path / "a" / "run" / "report.json").read_bytes()
    report_b = (tmp_path / "b" / "run" / "report.json").read_bytes()
    assert report_a == report_b


def test_run_pipeline_resume_reuses_done_communities(tmp_path):
    config = _fixture_config(tmp_path)
    run_pipeline(config)
    out = Path(config.out_dir)
    report_before = (out / "report.json").read_bytes()
    baking_done = json.loads((out / "communities" / "baking" / "done.json").read_text())
    # wipe one community; resume must regenerate it and leave the rest alone
    shutil.rmtree(out / "communities" / "camping")
    run_pipeline(config)
    assert (out / "report.json").read_bytes() == report_before
    baking_after = json.loads((out / "communities" / "baking" / "done.json").read_text())
    assert baking_after == baking_done


def test_run_pipeline_toggles_drop_columns(tmp_path):
    config = _fixture_config(tmp_path, skip_mauve=True, skip_realism=True)
    report = run_pipeline(config)
    names = report.metric_names()
    assert "mauve" not in names
    assert "realism" not in names
    assert "success_rate" in names


def test_synthetic_threads_parse_and_round_trip(tmp_path):
    config = _fixture_config(tmp_path)
    run_pipeline(config)
    out = Path(config.out_dir)
    n_loaded = 0
    for path in (out / "communities").glob("*/synthetic-*.jsonl"):
        for line in path.read_text().strip().split("\n"):
            record = json.loads(line)
            posts = record["posts"]
            assert posts[0]["id"] == "post"
            n_loaded += 1
    assert n_loaded > 0


def test_audit_passes_on_fixture_run(tmp_path):
    config = _fixture_config(tmp_path)
    run_pipeline(config)
    out = Path(config.out_dir)
    for community in ("baking", "camping"):
        done = json.loads((out / "communities" / community / "done.json").read_text())
        audit = done["audit"]
        assert audit["violations"] == []
        assert audit["generation_prompts"] > 0


def test_audit_detects_leak():
    thread = parse_thread_text(
        "title: Leaky thread\n"
        "post # user-1 # NA # This exact body must never appear in prompts."
    )
    leak = serialize_thread(thread, include_topics=False)
    clean_prompt = (
        "Generate a discussion thread about the following topics.\n\nsafe text\nThread:"
    )
    leaky_prompt = clean_prompt + "\n" + leak
    result = audit_generation_prompts([(clean_prompt, "c")], [thread])
    assert result["violations"] == []
    result = audit_generation_prompts([(leaky_prompt, "c")], [thread])
    assert result["violations"] == [{"kind": KIND_GENERATE_THREAD, "test_index": 0}]


def test_cli_run_and_report(tmp_path, capsys):
    out_dir = tmp_path / "cli-run"
    config_path = tmp_path / "config.json"
    with open(FIXTURES / "fixture_config.json") as fh:
        raw = json.load(fh)
    raw["dataset"] = str(FIXTURES / "fixture_dataset.jsonl")
    raw["backend_fixtures"] = str(FIXTURES / "mock_fixtures.json")
    raw["taxonomy"] = str(FIXTURES / "taxonomy.json")
    raw.pop("out_dir")
    config_path.write_text(json.dumps(raw))
    code = main(["run", "--config", str(config_path), "--out", str(out_dir)])
    assert code == 0
    printed = capsys.readouterr().out
    assert "IND BASELINE" in printed
    assert (out_dir / "report.json").exists()

    merged_dir = tmp_path / "merged"
    code = main(
        ["report", "--out", str(merged_dir), str(out_dir / "report.json")]
    )
    assert code == 0
    merged = load_report(merged_dir / "report.json")
    assert merged.row("IND BASELINE").cell("success_rate")[0] == 0.5


def test_cli_single_community_override(tmp_path):
    out_dir = tmp_path / "one"
    config_path = tmp_path / "config.json"
    with open(FIXTURES / "fixture_config.json") as fh:
        raw = json.load(fh)
    raw["dataset"] = str(FIXTURES / "fixture_dataset.jsonl")
    raw["backend_fixtures"] = str(FIXTURES / "mock_fixtures.json")
    raw["taxonomy"] = str(FIXTURES / "taxonomy.json")
    raw.pop("out_dir")
    config_path.write_text(json.dumps(raw))
    code = main(
        [
            "run",
            "--config",
            str(config_path),
            "--out",
            str(out_dir),
            "--communities",
            "camping",
            "--topic-sampling",
            "ind",
            "--mode",
            "baseline",
            "--content-mode",
            "none",
        ]
    )
    assert code == 0
    report = load_report(out_dir / "report.json")
    assert {r.label for r in report.rows} == {"TEST SET", "TRAIN SET", "IND BASELINE"}
    assert report.communities == ["camping"]
    # single community: macro std collapses to zero
    assert report.row("IND BASELINE").cell("success_rate")[1] == 0.0


def test_cli_ingest_and_sample(tmp_path):
    out = tmp_path / "clean.jsonl"
    code = main(
        ["ingest", "--dataset", str(FIXTURES / "fixture_dataset.jsonl"), "--out", str(out)]
    )
    assert code == 0
    assert out.exists()
    sampled = tmp_path / "sampled.jsonl"
    code = main(
        ["sample", "--dataset", str(out), "--out", str(sampled), "--seed", "3"]
    )
    assert code == 0
    assert sampled.exists()


def test_cli_exit_codes(tmp_path):
    # bad config -> 1
    assert main(["run", "--dataset", "x.jsonl", "--out", str(tmp_path / "o")]) == 1
    # unreadable dataset -> 2
    config_path = tmp_path / "c.json"
    with open(FIXTURES / "fixture_config.json") as fh:
        raw = json.load(fh)
    raw["dataset"] = str(tmp_path / "missing.jsonl")
    raw["backend_fixtures"] = str(FIXTURES / "mock_fixtures.json")
    raw["taxonomy"] = str(FIXTURES / "taxonomy.json")
    raw["out_dir"] = str(tmp_path / "o2")
    config_path.write_text(json.dumps(raw))
    assert main(["run", "--config", str(config_path)]) == 2


def test_cli_evaluate_external_threads(tmp_path):
    # reuse pipeline synthetic output as if produced externally
    config = _fixture_config(tmp_path)
    run_pipeline(config)
    out = Path(config.out_dir)
    synthetic = next((out / "communities" / "camping").glob("synthetic-ind-scaffold*.jsonl"))
    config_path = tmp_path / "config.json"
    with open(FIXTURES / "fixture_config.json") as fh:
        raw = json.load(fh)
    raw["dataset"] = str(FIXTURES / "fixture_dataset.jsonl")
    raw["backend_fixtures"] = str(FIXTURES / "mock_fixtures.json")
    raw["taxonomy"] = str(FIXTURES / "taxonomy.json")
    raw.pop("out_dir")
    config_path.write_text(json.dumps(raw))
    eval_dir = tmp_path / "external"
    code = main(
        [
            "evaluate",
            "--config",
            str(config_path),
            "--out",
            str(eval_dir),
            "--synthetic",
            str(synthetic),
            "--row-label",
            "SCAFFOLD/FineT",
        ]
    )
    assert code == 0
    report = load_report(eval_dir / "report.json")
    (row,) = report.rows
    assert row.label == "SCAFFOLD/FineT"
    assert "camping" in row.per_community
