"""Command line entry points.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 backend
failure. Flags override config-file values.
"""
from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path

from .dataset import (
    DataError,
    Dataset,
    community_stats,
    load_dataset,
    split_train_test,
    stratified_sample_by_size,
    stratified_sample_communities,
    thread_to_record,
    write_dataset,
)
from .embeddings import EmbeddingError
from .llm import GatewayError
from .pipeline import (
    ConfigError,
    PipelineConfig,
    build_classifier,
    build_embedder,
    build_gateway,
    evaluate_threads,
    prepare_community,
    run_content_variant,
    run_generation_variant,
    run_pipeline,
    _label_slug,
    _stream,
)
from .report import MetricsReport, ReportRow, load_report, merge_reports, write_report

logger = logging.getLogger(__name__)


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--dataset", help="interchange JSONL path")
    parser.add_argument("--out", help="output directory or file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--communities", help="comma-separated community labels")
    parser.add_argument("--mode", help="comma list: baseline, scaffold-fewshot")
    parser.add_argument("--content-mode", choices=["none", "zero", "few"], dest="content_mode")
    parser.add_argument("--topic-sampling", help="comma list: ind, cond", dest="topic_sampling")
    parser.add_argument("--backend", choices=["mock", "http"])
    parser.add_argument("--embeddings", help="builtin, bridge URL, or precomputed file")
    parser.add_argument("--skip-mauve", action="store_true", default=None, dest="skip_mauve")
    parser.add_argument("--skip-realism", action="store_true", default=None, dest="skip_realism")


_OVERRIDE_KEYS = (
    "dataset",
    "seed",
    "communities",
    "mode",
    "content_mode",
    "topic_sampling",
    "backend",
    "embeddings",
    "skip_mauve",
    "skip_realism",
)


def load_config(args: argparse.Namespace) -> PipelineConfig:
    raw: dict = {}
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config root must be an object")
        raw.update(loaded)
    for key in _OVERRIDE_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    if getattr(args, "out", None):
        raw["out_dir"] = args.out
    return PipelineConfig.from_dict(raw)


def cmd_ingest(args: argparse.Namespace) -> int:
    if not args.dataset or not args.out:
        raise ConfigError("ingest needs --dataset and --out")
    dataset = load_dataset(args.dataset)
    write_dataset(dataset, args.out)
    print(f"ingested {dataset.n_threads} threads across {len(dataset.communities)} communities")
    return 0


def cmd_sample(args: argparse.Namespace) -> int:
    if not args.dataset or not args.out:
        raise ConfigError("sample needs --dataset and --out")
    dataset = load_dataset(args.dataset)
    seed = args.seed if args.seed is not None else 0
    names = dataset.community_names()
    if args.communities:
        names = [c.strip() for c in args.communities.split(",") if c.strip()]
    elif args.select_communities:
        stats = [s for s in community_stats(dataset) if s.is_eligible()]
        if not stats:
            raise DataError("no eligible communities to stratify")
        names = stratified_sample_communities(
            stats, random.Random(f"{seed}/communities"), per_group=args.per_group
        )
    sampled = Dataset(source=dataset.source)
    for community in names:
        if community not in dataset.communities:
            raise DataError(f"unknown community {community!r}")
        rng = random.Random(f"{seed}/{community}/size-sample")
        kept = stratified_sample_by_size(dataset.communities[community], rng)
        kept_set = {id(t) for t in kept}
        for thread_id, thread in zip(dataset.ids[community], dataset.communities[community]):
            if id(thread) in kept_set:
                sampled.add(thread, thread_id)
    write_dataset(sampled, args.out)
    print(
        f"sampled {sampled.n_threads} of {dataset.n_threads} threads "
        f"({len(sampled.communities)} communities)"
    )
    return 0


def cmd_fit_topics(args: argparse.Namespace) -> int:
    config = load_config(args)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = load_dataset(config.dataset)
    if config.communities:
        dataset = dataset.subset(list(config.communities))
    gateway = build_gateway(config)
    for community in dataset.community_names():
        prep = prepare_community(
            community, dataset.communities[community], config, gateway,
            need_scaffolds=False, need_content_pool=False,
        )
        if isinstance(prep, str):
            logger.warning("%s skipped: %s", community, prep)
            continue
        path = out_dir / f"topics-{community}.json"
        path.write_text(prep.model.to_json() + "\n", encoding="utf-8")
        print(f"{community}: {prep.model.vocab_size} topics -> {path}")
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    config = load_config(args)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = load_dataset(config.dataset)
    if config.communities:
        dataset = dataset.subset(list(config.communities))
    gateway = build_gateway(config)
    summary: dict[str, dict] = {}
    for community in dataset.community_names():
        if hasattr(gateway.backend, "reset"):
            gateway.backend.reset()
        prep = prepare_community(
            community, dataset.communities[community], config, gateway,
            need_scaffolds="scaffold-fewshot" in config.mode,
            need_content_pool=config.content_mode == "few",
        )
        if isinstance(prep, str):
            logger.warning("%s skipped: %s", community, prep)
            summary[community] = {"skipped": prep}
            continue
        cdir = out_dir / "communities" / community
        cdir.mkdir(parents=True, exist_ok=True)
        rows: dict[str, dict] = {}
        scaffold_valid: dict[str, list] = {}
        for sampling in config.topic_sampling:
            for mode in config.mode:
                result = run_generation_variant(prep, sampling, mode, config, gateway)
                if mode == "scaffold-fewshot":
                    scaffold_valid[sampling] = result.valid
                rows[result.label] = _write_generated(cdir, community, result)
        if config.content_mode != "none" and (config.content_mode != "few" or prep.content_pool):
            for sampling in config.topic_sampling:
                result = run_content_variant(
                    prep, sampling, scaffold_valid.get(sampling, []), config, gateway
                )
                rows[result.label] = _write_generated(cdir, community, result)
        summary[community] = rows
        for label, row in rows.items():
            print(f"{community} {label}: success rate {row['success_rate']:.3f}")
    (out_dir / "generation.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    return 0


def _write_generated(cdir: Path, community: str, result) -> dict:
    lines = [
        json.dumps(
            thread_to_record(community, f"s{i + 1}", t), sort_keys=True, ensure_ascii=False
        )
        for i, t in enumerate(result.valid)
    ]
    path = cdir / f"synthetic-{_label_slug(result.label)}.jsonl"
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return {
        "attempts": result.attempts,
        "successes": result.successes,
        "success_rate": result.success_rate,
    }


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = load_config(args)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    synthetic = load_dataset(args.synthetic)
    dataset = load_dataset(config.dataset)
    gateway = build_gateway(config)
    embedder = build_embedder(config)
    classifier = build_classifier(config, gateway)
    label = args.row_label
    row = ReportRow(label=label)
    for community in synthetic.community_names():
        if community not in dataset.communities:
            logger.warning("%s: not in the reference dataset, skipped", community)
            continue
        if hasattr(gateway.backend, "reset"):
            gateway.backend.reset()
        split_rng = _stream(config.seed, community, "split")
        _, test = split_train_test(dataset.communities[community], config.split_ratio, split_rng)
        realism_rng = _stream(config.seed, community, f"realism/{_label_slug(label)}")
        row.per_community[community] = evaluate_threads(
            synthetic.communities[community], test, community,
            config, gateway, embedder, classifier, realism_rng,
        )
    if not row.per_community:
        raise DataError("no synthetic communities matched the reference dataset")
    report = MetricsReport(
        rows=[row],
        communities=sorted(row.per_community),
        config=config.public_summary(),
    )
    write_report(report, out_dir)
    print(f"evaluated {len(row.per_community)} communities -> {out_dir}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    if not args.out:
        raise ConfigError("report needs --out")
    if not args.inputs:
        raise ConfigError("report needs at least one report.json input")
    try:
        reports = [load_report(p) for p in args.inputs]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"cannot load report: {exc}") from exc
    merged = merge_reports(reports)
    paths = write_report(merged, args.out)
    print(f"merged {len(reports)} reports -> {paths['text']}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args)
    report = run_pipeline(config)
    print(f"report written to {Path(config.out_dir) / 'report.txt'}")
    for line in (Path(config.out_dir) / "report.txt").read_text(encoding="utf-8").splitlines():
        print(line)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="threadsmith",
        description="Synthetic discussion thread generation and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="normalize raw JSONL into interchange form")
    _add_common_flags(p)
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("sample", help="stratified sampling of threads and communities")
    _add_common_flags(p)
    p.add_argument("--per-group", type=int, default=8, dest="per_group")
    p.add_argument(
        "--select-communities", action="store_true", dest="select_communities",
        help="stratify communities by their stats before size sampling",
    )
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("fit-topics", help="extract topics and fit per-community topic models")
    _add_common_flags(p)
    p.set_defaults(handler=cmd_fit_topics)

    p = sub.add_parser("generate", help="generate synthetic threads")
    _add_common_flags(p)
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("evaluate", help="evaluate externally produced threads")
    _add_common_flags(p)
    p.add_argument("--synthetic", required=True, help="interchange JSONL of generated threads")
    p.add_argument("--row-label", default="SCAFFOLD/FineT", dest="row_label")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("report", help="merge evaluation reports")
    _add_common_flags(p)
    p.add_argument("inputs", nargs="*", help="report.json files")
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser("run", help="full pipeline: split, fit, generate, evaluate, report")
    _add_common_flags(p)
    p.set_defaults(handler=cmd_run)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        logger.error("config error: %s", exc)
        return 1
    except (DataError, EmbeddingError, OSError) as exc:
        logger.error("data error: %s", exc)
        return 2
    except GatewayError as exc:
        logger.error("backend failure: %s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
