"""Corpus-comparison analytics: selection overlap, sentence length, OOV
counts, Hellinger distance between unigram distributions, and the
perplexity-vs-selection-size curve.

All operations are pure functions of immutable inputs. Note that cutoffs
chosen by minimizing in-domain perplexity are known to disagree with the
cutoffs that maximize downstream translation quality; the curve is a
diagnostic, not a tuner.
"""

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from datasel.corpus import Corpus, Vocabulary
from datasel.errors import DataError
from datasel import lm as lm_mod
from datasel.selection import SelectionResult, rank_and_cut

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class UnigramDistribution:
    """Token distribution over an explicit shared vocabulary.

    Comparisons require both distributions to carry the same vocabulary in
    the same order; tokens absent from the underlying corpus get exactly
    zero probability (no smoothing).
    """

    vocab: tuple[str, ...]
    probs: np.ndarray

    def __post_init__(self):
        if len(self.vocab) != len(self.probs):
            raise DataError("vocabulary and probability vector differ in length")
        if np.any(self.probs < 0):
            raise DataError("negative probability in unigram distribution")
        total = float(self.probs.sum())
        if abs(total - 1.0) > 1e-12:
            raise DataError(f"unigram distribution sums to {total!r}, not 1")


def shared_vocabulary(*corpora: Corpus) -> tuple[str, ...]:
    """Sorted union of the corpora's vocabularies, for comparable distributions."""
    vocab: set[str] = set()
    for corpus in corpora:
        for sent in corpus:
            vocab.update(sent)
    return tuple(sorted(vocab))


def unigram_distribution(corpus: Corpus, vocab: Sequence[str]) -> UnigramDistribution:
    ids = {tok: i for i, tok in enumerate(vocab)}
    counts = np.zeros(len(vocab), dtype=np.float64)
    for sent in corpus:
        for tok in sent:
            idx = ids.get(tok)
            if idx is None:
                raise DataError(f"token {tok!r} missing from the shared vocabulary")
            counts[idx] += 1.0
    total = counts.sum()
    if total == 0:
        raise DataError("cannot build a distribution from an empty corpus")
    return UnigramDistribution(vocab=tuple(vocab), probs=counts / total)


def hellinger(p: UnigramDistribution, q: UnigramDistribution) -> float:
    """(1/sqrt(2)) * sqrt(sum_i (sqrt(p_i) - sqrt(q_i))^2), in [0, 1]."""
    if p.vocab != q.vocab:
        raise DataError("Hellinger distance requires identical shared vocabularies")
    diff = np.sqrt(p.probs) - np.sqrt(q.probs)
    return float(math.sqrt(float((diff * diff).sum())) / math.sqrt(2.0))


def overlap(a: Sequence[int], b: Sequence[int]) -> float:
    """|set(a) & set(b)| / max(|set(a)|, |set(b)|); empty inputs give 0."""
    sa, sb = set(a), set(b)
    if not sa or not sb:
        logger.info("overlap of empty selections defined as 0")
        return 0.0
    return len(sa & sb) / max(len(sa), len(sb))


def avg_sentence_length(corpus: Corpus) -> float:
    if len(corpus) == 0:
        raise DataError("cannot average over an empty corpus")
    return corpus.token_count() / len(corpus)


@dataclass(frozen=True)
class OOVCounts:
    """OOV occurrences (token events) and types against a reference vocabulary."""

    occurrences: int
    types: int


def oov_count(target: Corpus, reference_vocab: Vocabulary) -> OOVCounts:
    occurrences = 0
    types: set[str] = set()
    for sent in target:
        for tok in sent:
            if tok not in reference_vocab:
                occurrences += 1
                types.add(tok)
    return OOVCounts(occurrences=occurrences, types=len(types))


# ---------------------------------------------------------------------------
# Perplexity selection curve
# ---------------------------------------------------------------------------

def _curve_point(args) -> tuple[int, float]:
    cut, in_domain, subset, order = args
    model = lm_mod.train(subset, order=order)
    return cut, lm_mod.perplexity(model, in_domain)


def perplexity_selection_curve(in_domain: Corpus, ranking: SelectionResult,
                               candidates: Corpus, cuts: Sequence[int],
                               order: int = 5, workers: int = 1,
                               ) -> tuple[list[tuple[int, float]], int]:
    """In-domain perplexity under models trained on each top-cut subset.

    Returns the (cut, perplexity) points and the cut minimizing perplexity.
    Models are trained sequentially unless workers > 1.
    """
    if not cuts:
        raise DataError("no cut sizes given")
    if list(cuts) != sorted(set(cuts)):
        raise DataError("cut sizes must be strictly ascending")
    if cuts[-1] > len(ranking.ranking):
        raise DataError(f"largest cut {cuts[-1]} exceeds ranking length")
    jobs = []
    for cut in cuts:
        subset = candidates.subset(rank_and_cut(ranking, cut))
        jobs.append((cut, in_domain, subset, order))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_curve_point, jobs))
    else:
        points = [_curve_point(job) for job in jobs]
    best_cut = min(points, key=lambda p: (p[1], p[0]))[0]
    return points, best_cut


# ---------------------------------------------------------------------------
# Report output
# ---------------------------------------------------------------------------

def write_report_json(path: str | Path, report: dict) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_report_tsv(path: str | Path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("\t".join(columns) + "\n")
        for row in rows:
            fh.write("\t".join(str(row[c]) for c in columns) + "\n")


def write_curve_csv(path: str | Path, points: Sequence[tuple[int, float]],
                    value_name: str = "value") -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cut", value_name])
        for cut, value in points:
            writer.writerow([cut, f"{value:.6f}"])
