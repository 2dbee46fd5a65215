"""Command-line entry point: ``wildalign <command> [options]``."""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import structlog

from . import __version__
from .config import AlignConfig, dump_config, load_config
from .errors import ConfigError, RoundAbortedError, WildAlignError
from .evaluation import NoiseSweep, dataset_stats, rank_pairs, scenario_breakdown
from .integration import SimilarityMatrix
from .kg import SeedAlignment, TemporalKG
from .parsers import parse_seed_file, parse_tkg_file
from .pipeline import AlignmentResult, AlignmentRun, build_reasoner, encode
from .projection import build_projection_hypergraph
from .retrieval import build_memory_bank
from .synth import preset, synth_generate
from .temporal import encode_all_granularities
from .writers import (
    read_similarity,
    write_bank_records,
    write_corpus,
    write_similarity,
    write_temporal_embeddings,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def configure_logging(level: str = "INFO", log_file: Optional[str] = None) -> logging.Handler:
    """Route every stdlib log record through structlog's JSON renderer."""
    formatter = structlog.stdlib.ProcessorFormatter(
        processor=structlog.processors.JSONRenderer(sort_keys=True),
        foreign_pre_chain=[
            structlog.stdlib.add_log_level,
            structlog.stdlib.add_logger_name,
            structlog.processors.TimeStamper(fmt="iso", utc=True),
        ],
    )
    handler = logging.FileHandler(log_file, encoding="utf-8") if log_file else logging.StreamHandler(sys.stderr)
    handler.setFormatter(formatter)
    root = logging.getLogger()
    root.addHandler(handler)
    root.setLevel(level.upper())
    return handler


def _write_json(payload: dict, path: Optional[Path]) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")


def _load_inputs(args: argparse.Namespace) -> tuple[TemporalKG, TemporalKG, SeedAlignment]:
    source = parse_tkg_file(args.source, name="source")
    target = parse_tkg_file(args.target, name="target")
    seeds = parse_seed_file(args.seeds, source, target)
    return source, target, seeds


def _config(args: argparse.Namespace, **overrides) -> AlignConfig:
    values = {
        "seed": getattr(args, "seed", None),
        "relation_map": getattr(args, "relation_map", None),
    }
    values.update(overrides)
    return load_config(args.config, values)


def _result_json(result: AlignmentResult, source: TemporalKG, target: TemporalKG, config: AlignConfig) -> dict:
    pins = result.state.pins
    return {
        "schema_version": SCHEMA_VERSION,
        "config": config.model_dump(mode="json", exclude={"reasoner_token"}),
        "rounds": [r.to_json() for r in result.reports],
        "converged": result.state.converged,
        "aborted": result.state.aborted,
        "abort_reason": result.state.abort_reason,
        "seed_pool": len(result.state.seed_pool),
        "alignment": [
            {"source": source.entities[s], "target": target.entities[t], "pinned": pins.get(s) == t}
            for s, t in sorted(result.alignment.items())
        ],
        "metrics": result.metrics.to_json() if result.metrics is not None else None,
    }


def cmd_encode(args: argparse.Namespace) -> int:
    config = _config(args)
    source, target, seeds = _load_inputs(args)
    run = AlignmentRun(source, target, seeds, config)
    encoding = encode(source, target, run.names, run.seeds.train_pairs, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus(encoding.corpus, out / "corpus.txt")
    write_similarity(encoding.similarity.scores, out / "similarity.bin")
    temporal = encoding.model.module.temporal
    for side, kg in (("source", source), ("target", target)):
        embeddings = encode_all_granularities(kg, temporal, encoding.model.span)
        write_temporal_embeddings(embeddings.vectors, out / f"temporal_{side}.bin")
    projection_graph = build_projection_hypergraph(
        encoding.similarity, config.top_k, source, target, run.rel_map,
        use_time=config.use_time_projection, use_rel=config.use_rel_projection,
    )
    bank = build_memory_bank(projection_graph, encoding.model, config.bank_mode, config.bank_include_targets)
    write_bank_records(
        ((p.pid, target.entities[p.target], p.kind.value, v) for p, v in zip(bank.projections, bank.vectors)),
        out / "bank.bin",
    )
    _write_json(
        {
            "schema_version": SCHEMA_VERSION,
            "corpus_walks": len(encoding.corpus),
            "structural_losses": encoding.structural.losses,
            "alignment_losses": encoding.training.losses,
            "temporal_dim": config.time_dim,
            "bank_entries": len(bank),
            "bank_checksum": bank.checksum(),
        },
        out / "encode.json",
    )
    logger.info(f"Encoder outputs written to {out}")
    return 0


def cmd_align(args: argparse.Namespace) -> int:
    config = _config(
        args,
        iterations=args.iterations,
        reasoner=args.reasoner,
        transcript=args.transcript,
        noise_ratio=args.noise_ratio,
    )
    source, target, seeds = _load_inputs(args)
    reasoner = build_reasoner(config)
    try:
        result = AlignmentRun(source, target, seeds, config, reasoner=reasoner).run()
    finally:
        close = getattr(reasoner, "close", None)
        if close is not None:
            close()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_similarity(result.similarity.scores, out / "similarity.bin")
    _write_json(_result_json(result, source, target, config), out / "alignment.json")
    (out / "config.txt").write_text(dump_config(config), encoding="utf-8")
    if result.aborted:
        logger.error(f"Run aborted: {result.state.abort_reason}")
        return 1
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    source, target, seeds = _load_inputs(args)
    scores = read_similarity(run_dir / "similarity.bin")
    if scores.shape != (source.num_entities, target.num_entities):
        raise ValueError(
            f"similarity dump is {scores.shape[0]}x{scores.shape[1]} but the graphs have "
            f"{source.num_entities}x{target.num_entities} entities"
        )
    aligned = json.loads((run_dir / "alignment.json").read_text(encoding="utf-8"))
    pins = {
        source.resolve(row["source"]): target.resolve(row["target"])
        for row in aligned["alignment"]
        if row.get("pinned")
    }
    pairs = seeds.test_pairs or [(p.source, p.target) for p in seeds]
    report = rank_pairs(SimilarityMatrix(scores, k_csls=0), pairs, pins)
    scenarios = scenario_breakdown(report, source, target)
    _write_json(
        {
            "schema_version": SCHEMA_VERSION,
            "metrics": report.to_json(),
            "scenarios": {k: {"count": v.count, "hits@1": v.hits1} for k, v in scenarios.items()},
        },
        Path(args.out) if args.out else None,
    )
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    config = _config(args)
    source, target, seeds = _load_inputs(args)
    stats = dataset_stats(source, target, seeds, config.consistency, config.density_base)
    _write_json({"schema_version": SCHEMA_VERSION, "stats": stats.to_json()}, Path(args.out) if args.out else None)
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = preset(args.preset, seed=args.seed if args.seed is not None else 0, entities=args.entities)
    dataset = synth_generate(cfg)
    paths = dataset.write(args.out)
    config = load_config(overrides={"relation_map": str(paths["relation_map"]), "seed": cfg.seed})
    (Path(args.out) / "config.txt").write_text(dump_config(config), encoding="utf-8")
    logger.info(f"Wrote {args.preset} dataset to {args.out}")
    return 0


def _parse_ratios(text: str) -> list[float]:
    try:
        ratios = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"invalid ratio list {text!r}") from e
    if not ratios or any(not 0.0 <= r <= 1.0 for r in ratios):
        raise argparse.ArgumentTypeError(f"ratios must lie in [0, 1], got {text!r}")
    return ratios


def cmd_noise_sweep(args: argparse.Namespace) -> int:
    base = _config(args, iterations=args.iterations)
    source, target, seeds = _load_inputs(args)
    sweep = NoiseSweep()
    for ratio in args.ratios:
        config = base.model_copy(update={"noise_ratio": ratio})
        full = AlignmentRun(source, target, seeds, config).run()
        baseline = None
        if args.compare_baseline:
            baseline = AlignmentRun(source, target, seeds, config.model_copy(update={"csls_only": True})).run()
        if full.metrics is None:
            raise ValueError("noise sweep needs test pairs in the seed file (or train_ratio < 1)")
        sweep.add(ratio, full.metrics, baseline.metrics if baseline is not None else None)
        logger.info(f"Noise {ratio}: Hits@1 {full.metrics.hits[1]:.4f}")
    _write_json({"schema_version": SCHEMA_VERSION, "sweep": sweep.to_json()}, Path(args.out) if args.out else None)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--log-level", default="INFO", help="logging level (default INFO)")
    common.add_argument("--log-file", help="write JSON log lines here instead of stderr")
    common.add_argument("--seed", type=int, help="override the configured seed")

    inputs = argparse.ArgumentParser(add_help=False)
    inputs.add_argument("--source", required=True, help="source quadruple file")
    inputs.add_argument("--target", required=True, help="target quadruple file")
    inputs.add_argument("--seeds", required=True, help="seed alignment file")
    inputs.add_argument("--relation-map", dest="relation_map", help="relation equivalence file")

    parser = argparse.ArgumentParser(prog="wildalign", description="Temporal knowledge graph alignment.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    encode_cmd = commands.add_parser("encode", parents=[common, inputs], help="train encoders and dump embeddings")
    encode_cmd.add_argument("--out", required=True, help="output directory")
    encode_cmd.set_defaults(func=cmd_encode)

    align = commands.add_parser("align", parents=[common, inputs], help="run the full alignment pipeline")
    align.add_argument("--out", required=True, help="output directory")
    align.add_argument("--iterations", type=int, help="number of rounds")
    align.add_argument("--reasoner", choices=("mock", "remote", "replay"))
    align.add_argument("--transcript", help="reasoner transcript (written by remote, read by replay)")
    align.add_argument("--noise-ratio", dest="noise_ratio", type=float)
    align.set_defaults(func=cmd_align)

    evaluate = commands.add_parser("eval", parents=[common, inputs], help="score an align output directory")
    evaluate.add_argument("--run", required=True, help="align output directory")
    evaluate.add_argument("--out", help="metrics JSON file (stdout when omitted)")
    evaluate.set_defaults(func=cmd_eval)

    stats = commands.add_parser("stats", parents=[common, inputs], help="dataset statistics")
    stats.add_argument("--out", help="statistics JSON file (stdout when omitted)")
    stats.set_defaults(func=cmd_stats)

    synth = commands.add_parser("synth", parents=[common], help="generate a synthetic graph pair")
    synth.add_argument("--preset", choices=("easy", "wild"), default="easy")
    synth.add_argument("--entities", type=int)
    synth.add_argument("--out", required=True, help="output directory")
    synth.set_defaults(func=cmd_synth)

    sweep = commands.add_parser("noise-sweep", parents=[common, inputs], help="robustness under embedding noise")
    sweep.add_argument("--ratios", type=_parse_ratios, default=[0.0, 0.4, 0.8], help="comma-separated noise ratios")
    sweep.add_argument("--iterations", type=int)
    sweep.add_argument("--compare-baseline", action="store_true", help="also run the CSLS-only ablation")
    sweep.add_argument("--out", help="sweep JSON file (stdout when omitted)")
    sweep.set_defaults(func=cmd_noise_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = configure_logging(args.log_level, args.log_file)
    try:
        return args.func(args)
    except ConfigError as e:
        parser.error(str(e))
    except RoundAbortedError as e:
        logger.error(str(e))
        return 1
    except (WildAlignError, FileNotFoundError, ValueError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 1
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()


if __name__ == "__main__":
    sys.exit(main())
