"""Subcommand front-end for the selection / curriculum / diagnostics pipeline.

Data goes to files, logs go to stderr. Exit codes: 0 on success, 2 for
configuration problems (bad flags, missing paths, malformed config), 3 for
data problems (malformed corpora, inconsistent alignments, broken files).
"""

import argparse
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from datasel import __version__
from datasel.corpus import (
    Corpus,
    ParallelCorpus,
    build_vocab,
    load_corpus,
    load_parallel,
    sample_positions,
    sample_uniform,
    save_corpus,
)
from datasel.curriculum import (
    build_shards,
    emit_schedule,
    load_plan,
    load_schedule,
    make_schedule,
    save_plan,
)
from datasel.diagnostics import (
    avg_sentence_length,
    hellinger,
    oov_count,
    overlap,
    perplexity_selection_curve,
    shared_vocabulary,
    unigram_distribution,
    write_curve_csv,
    write_report_json,
    write_report_tsv,
)
from datasel.errors import ConfigError, DataError
from datasel import lm as lm_mod
from datasel.manifest import write_manifest
from datasel import s4 as s4_mod
from datasel.selection import (
    SelectionResult,
    cynical_select,
    moore_lewis_bilingual,
    moore_lewis_scores,
    random_select,
    rank_and_cut,
    read_ranking_tsv,
    write_ranking_tsv,
    write_selection_trace_tsv,
)

logger = logging.getLogger("datasel")

NO_FILTER = 1_000_000_000  # alignment-bearing corpora must not be length-filtered


# ---------------------------------------------------------------------------
# Pipeline configuration
# ---------------------------------------------------------------------------

@dataclass
class PipelineConfig:
    """Everything the end-to-end pipeline needs, loadable from a YAML file.

    CLI flags override file values. Seeds are recorded in every manifest so
    artifacts can be reproduced from the manifest alone.
    """

    in_domain_src: str = ""
    pool_src: str = ""
    in_domain_trg: str | None = None
    pool_trg: str | None = None
    max_len: int = 80
    in_domain_sample: int | None = None
    sample_seed: int = 17
    lm_order: int = 5
    method: str = "moore_lewis"
    side: str = "source"
    contrast_seed: int = 29
    alpha: float = 1.0
    random_seed: int = 41
    cut_sizes: list[int] = field(default_factory=list)
    num_shards: int = 40
    phase_len: int = 1000
    batch_words: int = 4096
    bucket_width: int = 10
    mode: str = "standard"
    schedule_seed: int = 97
    num_phases: int | None = None
    out_dir: str = "datasel-out"
    workers: int = 1

    def validate(self) -> None:
        problems = []
        for name in ("in_domain_src", "pool_src"):
            value = getattr(self, name)
            if not value:
                problems.append(f"field '{name}': required")
            elif not Path(value).exists():
                problems.append(f"field '{name}': file not found: {value}")
        for name in ("in_domain_trg", "pool_trg"):
            value = getattr(self, name)
            if value is not None and not Path(value).exists():
                problems.append(f"field '{name}': file not found: {value}")
        if self.method not in ("moore_lewis", "cynical", "random"):
            problems.append(f"field 'method': unknown method {self.method!r}")
        if self.side not in ("source", "target", "both"):
            problems.append(f"field 'side': must be source, target, or both")
        if self.side != "source" and (not self.in_domain_trg or not self.pool_trg):
            problems.append(
                "field 'side': target/both scoring needs in_domain_trg and pool_trg")
        if not self.cut_sizes:
            problems.append("field 'cut_sizes': at least one cut size required")
        elif self.cut_sizes != sorted(set(self.cut_sizes)) or self.cut_sizes[0] < 1:
            problems.append("field 'cut_sizes': must be ascending positive integers")
        for name in ("max_len", "lm_order", "num_shards", "phase_len",
                     "batch_words", "bucket_width", "workers"):
            if getattr(self, name) < 1:
                problems.append(f"field '{name}': must be positive")
        if self.mode not in ("standard", "reverse", "scrambled", "noshuffle"):
            problems.append(f"field 'mode': unknown mode {self.mode!r}")
        if problems:
            raise ConfigError("; ".join(problems))

    def seeds(self) -> dict:
        return {
            "sample_seed": self.sample_seed,
            "contrast_seed": self.contrast_seed,
            "random_seed": self.random_seed,
            "schedule_seed": self.schedule_seed,
        }


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a key-value mapping")
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    return PipelineConfig(**doc)


def apply_overrides(cfg: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    mapping = {
        "out_dir": "out_dir", "method": "method", "mode": "mode",
        "workers": "workers", "num_shards": "num_shards",
        "phase_len": "phase_len", "batch_words": "batch_words",
        "num_phases": "num_phases", "seed": "schedule_seed",
        "contrast_seed": "contrast_seed", "max_len": "max_len",
        "order": "lm_order", "side": "side", "alpha": "alpha",
    }
    for flag, cfg_field in mapping.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, cfg_field, value)
    if getattr(args, "cut_sizes", None):
        cfg.cut_sizes = _parse_cuts(args.cut_sizes)
    return cfg


def _parse_cuts(text: str) -> list[int]:
    try:
        cuts = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad cut list {text!r}: {exc}") from exc
    if not cuts:
        raise ConfigError("empty cut list")
    return cuts


# ---------------------------------------------------------------------------
# Shared pipeline stages
# ---------------------------------------------------------------------------

def _rank_pool(cfg: PipelineConfig, in_src: Corpus, pool_src: Corpus,
               in_trg: Corpus | None, pool_trg: Corpus | None) -> SelectionResult:
    """The scoring stage shared by `score-ml`, `select-cds`, and `pipeline`."""
    budget = cfg.cut_sizes[-1]
    if budget > len(pool_src):
        raise DataError(
            f"largest cut {budget} exceeds the candidate pool of {len(pool_src)}")
    if cfg.method == "cynical":
        return cynical_select(in_src, pool_src, budget=budget, alpha=cfg.alpha)
    if cfg.method == "random":
        return random_select(pool_src, budget=budget, seed=cfg.random_seed)

    contrast_positions = sample_positions(
        len(pool_src), min(len(in_src), len(pool_src)), cfg.contrast_seed)
    if cfg.side == "source":
        lm_in = lm_mod.train(in_src, order=cfg.lm_order)
        lm_gen = lm_mod.train(pool_src.subset(contrast_positions), order=cfg.lm_order)
        return moore_lewis_scores(lm_in, lm_gen, pool_src, workers=cfg.workers)
    if cfg.side == "target":
        lm_in = lm_mod.train(in_trg, order=cfg.lm_order)
        lm_gen = lm_mod.train(pool_trg.subset(contrast_positions), order=cfg.lm_order)
        return moore_lewis_scores(lm_in, lm_gen, pool_trg, workers=cfg.workers)
    lm_in_src = lm_mod.train(in_src, order=cfg.lm_order)
    lm_gen_src = lm_mod.train(pool_src.subset(contrast_positions), order=cfg.lm_order)
    lm_in_trg = lm_mod.train(in_trg, order=cfg.lm_order)
    lm_gen_trg = lm_mod.train(pool_trg.subset(contrast_positions), order=cfg.lm_order)
    pair = ParallelCorpus(src=pool_src, trg=pool_trg)
    return moore_lewis_bilingual(lm_in_src, lm_gen_src, lm_in_trg, lm_gen_trg,
                                 pair, workers=cfg.workers)


def _write_ranking_artifacts(cfg: PipelineConfig, result: SelectionResult,
                             out_dir: Path, inputs: dict) -> Path:
    ranking_path = out_dir / "ranking.tsv"
    write_ranking_tsv(result, ranking_path)
    params = {
        "method": cfg.method, "side": cfg.side, "lm_order": cfg.lm_order,
        "alpha": cfg.alpha, "max_len": cfg.max_len, "cut_sizes": cfg.cut_sizes,
    }
    write_manifest(ranking_path, inputs, params, cfg.seeds())
    if result.selection_order is not None:
        trace_path = out_dir / "trace.tsv"
        write_selection_trace_tsv(result, trace_path)
        write_manifest(trace_path, inputs, params, cfg.seeds())
    for cut in cfg.cut_sizes:
        cut_path = out_dir / f"top_{cut}.txt"
        with cut_path.open("w", encoding="utf-8") as fh:
            for idx in rank_and_cut(result, cut):
                fh.write(f"{idx}\n")
        write_manifest(cut_path, inputs, {**params, "cut": cut}, cfg.seeds())
    return ranking_path


def _diagnostics_report(cfg: PipelineConfig, in_src: Corpus, pool_src: Corpus,
                        result: SelectionResult, out_dir: Path, inputs: dict,
                        ppl_curve: bool = False) -> Path:
    vocab = shared_vocabulary(in_src, pool_src)
    dist_in = unigram_distribution(in_src, vocab)
    rows = []
    for cut in cfg.cut_sizes:
        subset = pool_src.subset(rank_and_cut(result, cut))
        counts = oov_count(in_src, build_vocab(subset))
        rows.append({
            "cut": cut,
            "avg_sentence_length": round(avg_sentence_length(subset), 6),
            "oov_occurrences": counts.occurrences,
            "oov_types": counts.types,
            "hellinger_to_in_domain": round(
                hellinger(dist_in, unigram_distribution(subset, vocab)), 9),
        })
    report = {
        "method": result.method,
        "in_domain": {
            "sentences": len(in_src),
            "avg_sentence_length": round(avg_sentence_length(in_src), 6),
        },
        "pool_sentences": len(pool_src),
        "cuts": rows,
    }
    if ppl_curve:
        points, best = perplexity_selection_curve(
            in_src, result, pool_src, cfg.cut_sizes, order=cfg.lm_order,
            workers=cfg.workers)
        report["perplexity_curve"] = {
            "points": [[cut, round(ppl, 6)] for cut, ppl in points],
            "best_cut": best,
        }
        write_curve_csv(out_dir / "ppl_curve.csv", points, value_name="perplexity")

    report_path = out_dir / "diagnostics.json"
    write_report_json(report_path, report)
    columns = ["cut", "avg_sentence_length", "oov_occurrences", "oov_types",
               "hellinger_to_in_domain"]
    write_report_tsv(out_dir / "diagnostics.tsv", rows, columns)
    write_curve_csv(out_dir / "length_curve.csv",
                    [(r["cut"], r["avg_sentence_length"]) for r in rows],
                    value_name="avg_sentence_length")
    write_curve_csv(out_dir / "oov_curve.csv",
                    [(r["cut"], r["oov_occurrences"]) for r in rows],
                    value_name="oov_occurrences")
    write_curve_csv(out_dir / "hellinger_curve.csv",
                    [(r["cut"], r["hellinger_to_in_domain"]) for r in rows],
                    value_name="hellinger")
    params = {"method": cfg.method, "cut_sizes": cfg.cut_sizes,
              "lm_order": cfg.lm_order, "ppl_curve": ppl_curve}
    artifacts = [report_path, out_dir / "diagnostics.tsv",
                 out_dir / "length_curve.csv", out_dir / "oov_curve.csv",
                 out_dir / "hellinger_curve.csv"]
    if ppl_curve:
        artifacts.append(out_dir / "ppl_curve.csv")
    for artifact in artifacts:
        write_manifest(artifact, inputs, params, cfg.seeds())
    return report_path


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_lm_train(args) -> int:
    corpus = load_corpus(args.input, max_len=args.max_len)
    model = lm_mod.train(corpus, order=args.order, smoothing=args.smoothing)
    lm_mod.export_arpa(model, args.output)
    write_manifest(args.output, {"corpus": args.input},
                   {"order": args.order, "smoothing": args.smoothing,
                    "max_len": args.max_len})
    logger.info("trained order-%d model on %d sentences -> %s",
                args.order, len(corpus), args.output)
    return 0


def _load_side_corpora(cfg: PipelineConfig):
    """Load pipeline corpora; parallel loading keeps sides index-aligned."""
    if cfg.side == "source":
        in_src = load_corpus(cfg.in_domain_src, cfg.max_len)
        pool_src = load_corpus(cfg.pool_src, cfg.max_len)
        return in_src, pool_src, None, None
    in_pair = load_parallel(cfg.in_domain_src, cfg.in_domain_trg, cfg.max_len)
    pool_pair = load_parallel(cfg.pool_src, cfg.pool_trg, cfg.max_len)
    return in_pair.src, pool_pair.src, in_pair.trg, pool_pair.trg


def _score_inputs(cfg: PipelineConfig) -> dict:
    inputs = {"in_domain_src": cfg.in_domain_src, "pool_src": cfg.pool_src}
    if cfg.side != "source":
        inputs["in_domain_trg"] = cfg.in_domain_trg
        inputs["pool_trg"] = cfg.pool_trg
    return inputs


def cmd_score_ml(args) -> int:
    cfg = apply_overrides(PipelineConfig(), args)
    cfg.in_domain_src = args.in_src
    cfg.pool_src = args.pool_src
    cfg.in_domain_trg = args.in_trg
    cfg.pool_trg = args.pool_trg
    cfg.method = "moore_lewis"
    if not cfg.cut_sizes:
        raise ConfigError("--cuts is required (largest cut bounds the ranking use)")
    cfg.validate()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    in_src, pool_src, in_trg, pool_trg = _load_side_corpora(cfg)
    result = _rank_pool(cfg, in_src, pool_src, in_trg, pool_trg)
    _write_ranking_artifacts(cfg, result, out_dir, _score_inputs(cfg))
    return 0


def cmd_select_cds(args) -> int:
    cfg = PipelineConfig()
    cfg.in_domain_src = args.in_src
    cfg.pool_src = args.pool_src
    cfg.method = "cynical"
    cfg.alpha = args.alpha
    cfg.max_len = args.max_len
    cfg.cut_sizes = _parse_cuts(args.cuts)
    cfg.validate()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    in_src = load_corpus(cfg.in_domain_src, cfg.max_len)
    pool_src = load_corpus(cfg.pool_src, cfg.max_len)
    result = _rank_pool(cfg, in_src, pool_src, None, None)
    _write_ranking_artifacts(cfg, result, out_dir, _score_inputs(cfg))
    return 0


def cmd_shard(args) -> int:
    if args.pool_trg:
        # replicate the joint filtering used when the ranking was built on
        # target or both sides, so candidate indices keep their meaning
        in_src = load_parallel(args.in_src, args.in_trg, args.max_len).src
        pool_src = load_parallel(args.pool_src, args.pool_trg, args.max_len).src
    else:
        in_src = load_corpus(args.in_src, max_len=args.max_len)
        pool_src = load_corpus(args.pool_src, max_len=args.max_len)
    ranking = read_ranking_tsv(args.ranking)
    cut = args.cut if args.cut is not None else len(ranking.ranking)
    plan = build_shards(in_src, ranking, cut=cut, num_shards=args.num_shards)
    lengths = [len(s) for s in in_src] + [len(s) for s in pool_src]
    save_plan(plan, lengths, args.output)
    write_manifest(args.output,
                   {"in_domain_src": args.in_src, "pool_src": args.pool_src,
                    "ranking": args.ranking},
                   {"cut": cut, "num_shards": args.num_shards,
                    "max_len": args.max_len})
    logger.info("plan: %d shards over %d sentences -> %s",
                plan.num_shards, len(plan.all_ids()), args.output)
    return 0


def cmd_schedule(args) -> int:
    plan, lengths = load_plan(args.plan)
    schedule = make_schedule(
        plan, lengths, mode=args.mode, phase_len=args.phase_len,
        batch_budget=args.batch_words, bucket_width=args.bucket_width,
        num_phases=args.num_phases, seed=args.seed)
    emit_schedule(schedule, args.output)
    write_manifest(args.output, {"plan": args.plan},
                   {"mode": args.mode, "phase_len": args.phase_len,
                    "batch_words": args.batch_words,
                    "bucket_width": args.bucket_width,
                    "num_phases": schedule.num_phases},
                   {"schedule_seed": args.seed})
    logger.info("schedule: %d phases x %d batches -> %s",
                schedule.num_phases, args.phase_len, args.output)
    return 0


def cmd_diagnose(args) -> int:
    cfg = PipelineConfig()
    cfg.in_domain_src = args.in_src
    cfg.pool_src = args.pool_src
    cfg.max_len = args.max_len
    cfg.lm_order = args.order
    cfg.workers = args.workers
    cfg.cut_sizes = _parse_cuts(args.cuts)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    in_src = load_corpus(cfg.in_domain_src, cfg.max_len)
    pool_src = load_corpus(cfg.pool_src, cfg.max_len)
    result = read_ranking_tsv(args.ranking)
    if cfg.cut_sizes[-1] > len(result.ranking):
        raise DataError(f"largest cut {cfg.cut_sizes[-1]} exceeds ranking length "
                        f"{len(result.ranking)}")
    inputs = {"in_domain_src": args.in_src, "pool_src": args.pool_src,
              "ranking": args.ranking}
    report_path = _diagnostics_report(cfg, in_src, pool_src, result, out_dir,
                                      inputs, ppl_curve=args.ppl_curve)
    if args.compare_ranking:
        other = read_ranking_tsv(args.compare_ranking)
        rows = []
        for cut in cfg.cut_sizes:
            if cut > len(other.ranking):
                raise DataError(f"cut {cut} exceeds comparison ranking length")
            rows.append({"cut": cut,
                         "overlap": round(overlap(rank_and_cut(result, cut),
                                                  rank_and_cut(other, cut)), 9)})
        write_report_tsv(out_dir / "overlap.tsv", rows, ["cut", "overlap"])
        write_curve_csv(out_dir / "overlap_curve.csv",
                        [(r["cut"], r["overlap"]) for r in rows],
                        value_name="overlap")
    logger.info("diagnostics -> %s", report_path)
    return 0


def cmd_s4(args) -> int:
    train_pair = load_parallel(args.train_src, args.train_trg, max_len=NO_FILTER)
    train_align = s4_mod.load_alignments(args.train_align, src=train_pair.src,
                                         trg=train_pair.trg)
    lexicon = s4_mod.build_lexicon(train_pair, train_align)
    test_src = load_corpus(args.test_src, max_len=NO_FILTER)
    ref = load_corpus(args.ref, max_len=NO_FILTER, side_label="target")
    hyp = load_corpus(args.hyp, max_len=NO_FILTER, side_label="target")
    ref_align = s4_mod.load_alignments(args.ref_align, src=test_src, trg=ref)
    hyp_align = s4_mod.load_alignments(args.hyp_align, src=test_src, trg=hyp)
    report = s4_mod.s4_count(test_src, ref, ref_align, hyp, hyp_align, lexicon)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "s4.json"
    s4_mod.write_s4_json(report, json_path)
    s4_mod.write_s4_tsv(report, out_dir / "s4.tsv")
    inputs = {name: getattr(args, name) for name in
              ("train_src", "train_trg", "train_align", "test_src",
               "ref", "ref_align", "hyp", "hyp_align")}
    write_manifest(json_path, inputs, {})
    logger.info("s4: correct=%d seen=%d sense=%d score=%d",
                report.correct, report.seen, report.sense, report.score)
    return 0


def cmd_pipeline(args) -> int:
    cfg = load_config(args.config)
    cfg = apply_overrides(cfg, args)
    cfg.validate()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    in_src, pool_src, in_trg, pool_trg = _load_side_corpora(cfg)
    if cfg.in_domain_sample is not None:
        if cfg.in_domain_sample > len(in_src):
            raise DataError(
                f"in_domain_sample {cfg.in_domain_sample} exceeds in-domain "
                f"corpus of {len(in_src)}")
        positions = sample_positions(len(in_src), cfg.in_domain_sample,
                                     cfg.sample_seed)
        in_src = in_src.subset(positions)
        if in_trg is not None:
            in_trg = in_trg.subset(positions)
        sample_path = out_dir / "in_domain.sample.txt"
        save_corpus(in_src, sample_path)
        write_manifest(sample_path, {"in_domain_src": cfg.in_domain_src},
                       {"in_domain_sample": cfg.in_domain_sample},
                       {"sample_seed": cfg.sample_seed})

    result = _rank_pool(cfg, in_src, pool_src, in_trg, pool_trg)
    _write_ranking_artifacts(cfg, result, out_dir, _score_inputs(cfg))

    plan = build_shards(in_src, result, cut=cfg.cut_sizes[-1],
                        num_shards=cfg.num_shards)
    lengths = [len(s) for s in in_src] + [len(s) for s in pool_src]
    plan_path = out_dir / "plan.json"
    save_plan(plan, lengths, plan_path)
    write_manifest(plan_path, _score_inputs(cfg),
                   {"cut": cfg.cut_sizes[-1], "num_shards": cfg.num_shards},
                   cfg.seeds())

    schedule = make_schedule(
        plan, lengths, mode=cfg.mode, phase_len=cfg.phase_len,
        batch_budget=cfg.batch_words, bucket_width=cfg.bucket_width,
        num_phases=cfg.num_phases, seed=cfg.schedule_seed)
    schedule_path = out_dir / "schedule.jsonl"
    emit_schedule(schedule, schedule_path)
    write_manifest(schedule_path, {"plan": str(plan_path)},
                   {"mode": cfg.mode, "phase_len": cfg.phase_len,
                    "batch_words": cfg.batch_words,
                    "bucket_width": cfg.bucket_width,
                    "num_phases": schedule.num_phases},
                   {"schedule_seed": cfg.schedule_seed})

    _diagnostics_report(cfg, in_src, pool_src, result, out_dir,
                        _score_inputs(cfg))
    logger.info("pipeline complete -> %s", out_dir)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="datasel",
        description="Rank unlabeled-domain sentences by in-domain similarity, "
                    "emit curriculum training schedules, and diagnose selections.")
    parser.add_argument("--version", action="version", version=f"datasel {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lm-train", help="train a Kneser-Ney n-gram model, write ARPA")
    p.add_argument("--input", required=True, help="tokenized training corpus")
    p.add_argument("--output", required=True, help="ARPA output path")
    p.add_argument("--order", type=int, default=5)
    p.add_argument("--smoothing", choices=("modkn", "add_one"), default="modkn")
    p.add_argument("--max-len", type=int, default=80)
    p.set_defaults(func=cmd_lm_train)

    p = sub.add_parser("score-ml", help="cross-entropy difference ranking")
    p.add_argument("--in-src", required=True, help="in-domain source corpus")
    p.add_argument("--pool-src", required=True, help="candidate pool source corpus")
    p.add_argument("--in-trg", default=None)
    p.add_argument("--pool-trg", default=None)
    p.add_argument("--side", choices=("source", "target", "both"), default=None)
    p.add_argument("--order", type=int, default=None, help="LM order (default 5)")
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--contrast-seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--cuts", dest="cut_sizes", required=True,
                   help="comma-separated cut sizes, e.g. 64000,128000")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_score_ml)

    p = sub.add_parser("select-cds", help="greedy cynical selection")
    p.add_argument("--in-src", required=True)
    p.add_argument("--pool-src", required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--max-len", type=int, default=80)
    p.add_argument("--cuts", required=True, help="comma-separated cut sizes; "
                   "the largest is the selection budget")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_select_cds)

    p = sub.add_parser("shard", help="build a shard plan from a ranking")
    p.add_argument("--in-src", required=True)
    p.add_argument("--pool-src", required=True)
    p.add_argument("--in-trg", default=None,
                   help="replicate joint filtering for target/both rankings")
    p.add_argument("--pool-trg", default=None)
    p.add_argument("--ranking", required=True, help="ranking.tsv from score/select")
    p.add_argument("--cut", type=int, default=None,
                   help="how many top candidates to shard (default: all ranked)")
    p.add_argument("--num-shards", type=int, default=40)
    p.add_argument("--max-len", type=int, default=80)
    p.add_argument("--output", required=True, help="plan JSON path")
    p.set_defaults(func=cmd_shard)

    p = sub.add_parser("schedule", help="emit a curriculum schedule from a plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--mode", choices=("standard", "reverse", "scrambled",
                                      "noshuffle"), default="standard")
    p.add_argument("--phase-len", type=int, default=1000)
    p.add_argument("--batch-words", type=int, default=4096)
    p.add_argument("--bucket-width", type=int, default=10)
    p.add_argument("--num-phases", type=int, default=None,
                   help="default: num_shards + 20")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True, help="schedule JSON-lines path")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("diagnose", help="per-cut selection diagnostics")
    p.add_argument("--in-src", required=True)
    p.add_argument("--pool-src", required=True)
    p.add_argument("--ranking", required=True)
    p.add_argument("--cuts", required=True)
    p.add_argument("--compare-ranking", default=None,
                   help="second ranking for per-cut overlap")
    p.add_argument("--ppl-curve", action="store_true",
                   help="also train per-cut models and report in-domain perplexity")
    p.add_argument("--order", type=int, default=5)
    p.add_argument("--max-len", type=int, default=80)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("s4", help="word-level translation error taxonomy")
    p.add_argument("--train-src", required=True)
    p.add_argument("--train-trg", required=True)
    p.add_argument("--train-align", required=True)
    p.add_argument("--test-src", required=True)
    p.add_argument("--ref", required=True, help="reference translation")
    p.add_argument("--ref-align", required=True)
    p.add_argument("--hyp", required=True, help="system translation")
    p.add_argument("--hyp-align", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_s4)

    p = sub.add_parser("pipeline", help="score -> select -> shard -> schedule "
                                        "-> diagnose, from one config file")
    p.add_argument("--config", required=True, help="YAML key-value config")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--method", choices=("moore_lewis", "cynical", "random"),
                   default=None)
    p.add_argument("--side", choices=("source", "target", "both"), default=None)
    p.add_argument("--mode", choices=("standard", "reverse", "scrambled",
                                      "noshuffle"), default=None)
    p.add_argument("--num-shards", type=int, default=None)
    p.add_argument("--phase-len", type=int, default=None)
    p.add_argument("--batch-words", type=int, default=None)
    p.add_argument("--num-phases", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="schedule seed override")
    p.add_argument("--contrast-seed", type=int, default=None)
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--cut-sizes", dest="cut_sizes", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
