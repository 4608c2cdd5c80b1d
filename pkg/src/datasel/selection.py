"""Domain-similarity ranking of candidate sentences.

Two scoring families: cross-entropy difference against an in-domain and a
contrast language model (optionally summed over both sides of a parallel
corpus), and greedy selection that at each step takes the sentence whose
addition most lowers the cross-entropy between the selected set's unigram
model and the in-domain distribution.

Everything here is deterministic given its inputs; the only randomized
operation is the random baseline, which takes an explicit seed.
"""

import json
import logging
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from datasel.corpus import Corpus, ParallelCorpus
from datasel.errors import DataError
from datasel.lm import NGramModel, corpus_cross_entropies

logger = logging.getLogger(__name__)

METHODS = ("moore_lewis", "moore_lewis_bilingual", "cynical", "random")


@dataclass(frozen=True)
class SentenceScore:
    index: int
    score: float


@dataclass(frozen=True)
class GreedyStep:
    step: int
    index: int
    delta_h: float
    h_after: float


@dataclass
class SelectionResult:
    """A ranking over candidate sentence indices, lower score = more in-domain.

    For greedy (cynical) selection the ranking is the selection order and
    each score is the cross-entropy change at the step that chose it;
    `selection_order` carries the full per-step trace.
    """

    method: str
    ranking: list[SentenceScore]
    selection_order: list[GreedyStep] | None = None
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise DataError(f"unknown selection method {self.method!r}")

    def indices(self) -> list[int]:
        return [s.index for s in self.ranking]


def rank_and_cut(result: SelectionResult, n: int) -> list[int]:
    """The n best candidate indices; cut(n) is always a prefix of cut(m>n)."""
    if n < 1 or n > len(result.ranking):
        raise DataError(f"cut size {n} outside 1..{len(result.ranking)}")
    return [s.index for s in result.ranking[:n]]


# ---------------------------------------------------------------------------
# Cross-entropy difference scoring
# ---------------------------------------------------------------------------

def moore_lewis_scores(lm_in: NGramModel, lm_gen: NGramModel, candidates: Corpus,
                       workers: int = 1) -> SelectionResult:
    """Score each candidate by in-domain minus contrast cross-entropy.

    Ties are broken by ascending sentence index.
    """
    if len(candidates) == 0:
        raise DataError("no candidate sentences to score")
    h_in = corpus_cross_entropies(lm_in, candidates, workers=workers)
    h_gen = corpus_cross_entropies(lm_gen, candidates, workers=workers)
    scores = [a - b for a, b in zip(h_in, h_gen)]
    order = sorted(range(len(scores)), key=lambda i: (scores[i], i))
    return SelectionResult(
        method="moore_lewis",
        ranking=[SentenceScore(i, scores[i]) for i in order],
    )


def moore_lewis_stream(lm_in: NGramModel, lm_gen: NGramModel,
                       sentences: Iterable[Sequence[str]]) -> Iterator[float]:
    """Streaming scores for very large pools: constant memory, no ranking."""
    for sent in sentences:
        yield lm_in.sentence_cross_entropy(sent) - lm_gen.sentence_cross_entropy(sent)


def moore_lewis_bilingual(lm_in_src: NGramModel, lm_gen_src: NGramModel,
                          lm_in_trg: NGramModel, lm_gen_trg: NGramModel,
                          candidates: ParallelCorpus, workers: int = 1) -> SelectionResult:
    """Sum of the source-side and target-side cross-entropy differences."""
    if len(candidates) == 0:
        raise DataError("no candidate sentence pairs to score")
    src = moore_lewis_scores(lm_in_src, lm_gen_src, candidates.src, workers)
    trg = moore_lewis_scores(lm_in_trg, lm_gen_trg, candidates.trg, workers)
    by_index_src = {s.index: s.score for s in src.ranking}
    by_index_trg = {s.index: s.score for s in trg.ranking}
    scores = [by_index_src[i] + by_index_trg[i] for i in range(len(candidates))]
    order = sorted(range(len(scores)), key=lambda i: (scores[i], i))
    return SelectionResult(
        method="moore_lewis_bilingual",
        ranking=[SentenceScore(i, scores[i]) for i in order],
    )


def random_select(candidates: Corpus, budget: int, seed: int) -> SelectionResult:
    """Seeded random baseline; the score of each entry is its draw position."""
    if budget < 1 or budget > len(candidates):
        raise DataError(f"budget {budget} outside 1..{len(candidates)}")
    rng = random.Random(seed)
    picked = rng.sample(range(len(candidates)), budget)
    return SelectionResult(
        method="random",
        ranking=[SentenceScore(idx, float(pos)) for pos, idx in enumerate(picked)],
    )


# ---------------------------------------------------------------------------
# Cynical (greedy cross-entropy) selection
# ---------------------------------------------------------------------------

@dataclass
class CynicalState:
    """Unigram view of the selected set against the in-domain distribution.

    The distribution and counts are defined over the joint vocabulary of
    the in-domain corpus and the candidate pool; `alpha` smooths the
    selected set's empirical distribution.
    """

    vocab: tuple[str, ...]
    ids: dict[str, int] = field(repr=False)
    p_in: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    total: int = 0
    alpha: float = 1.0
    scratch_evaluations: int = 0

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)


def make_cynical_state(in_domain: Corpus, candidates: Corpus, alpha: float = 1.0) -> CynicalState:
    joint = sorted({t for s in in_domain for t in s} | {t for s in candidates for t in s})
    ids = {t: i for i, t in enumerate(joint)}
    counts_in = Counter(t for s in in_domain for t in s)
    total_in = sum(counts_in.values())
    p_in = np.zeros(len(joint), dtype=np.float64)
    for tok, c in counts_in.items():
        p_in[ids[tok]] = c / total_in
    return CynicalState(
        vocab=tuple(joint),
        ids=ids,
        p_in=p_in,
        counts=np.zeros(len(joint), dtype=np.int64),
        total=0,
        alpha=alpha,
    )


def selected_cross_entropy(state: CynicalState) -> float:
    """From-scratch H of the selected set against the in-domain distribution.

    Kept out of the greedy loop on purpose; the loop works purely from the
    incremental decomposition, and `scratch_evaluations` counts uses of
    this function so tests can verify that.
    """
    state.scratch_evaluations += 1
    denom = state.total + state.alpha * state.vocab_size
    logp = np.log2((state.counts + state.alpha) / denom)
    return float(-(state.p_in * logp).sum())


def delta_h_components(state: CynicalState, sentence: Sequence[str]) -> tuple[float, float]:
    """(length penalty, word gain) for adding one sentence to the state.

    Their sum is algebraically identical to the from-scratch change in H;
    the penalty depends only on the sentence's token count and the gain
    only on its in-domain-vocabulary tokens.
    """
    denom = state.total + state.alpha * state.vocab_size
    penalty = math.log2((denom + len(sentence)) / denom)
    terms = []
    for tok, c_s in sorted(Counter(sentence).items()):
        idx = state.ids[tok]
        p = float(state.p_in[idx])
        if p > 0.0:
            c = int(state.counts[idx])
            terms.append(p * math.log2((c + c_s + state.alpha) / (c + state.alpha)))
    return penalty, 0.0 - math.fsum(terms)


def cynical_select(in_domain: Corpus, candidates: Corpus, budget: int,
                   alpha: float = 1.0) -> SelectionResult:
    """Greedy selection minimizing the selected-set cross-entropy against
    the in-domain unigram distribution.

    Per-step work is incremental: selecting a sentence adjusts only the
    gains of candidates sharing its in-domain-vocabulary words, and the
    next choice is a vectorized argmin over penalty-plus-gain keys. The
    winner (and any candidate within a hair of it) is re-derived from the
    decomposition with an exactly-rounded sum, so mathematically tied
    candidates compare as exact ties and break by lowest sentence index.
    No from-scratch H over the vocabulary is computed inside the loop.
    """
    if len(in_domain) == 0 or len(candidates) == 0:
        raise DataError("cynical selection needs non-empty corpora")
    if budget < 1 or budget > len(candidates):
        raise DataError(f"budget {budget} exceeds candidate pool of {len(candidates)}")

    state = make_cynical_state(in_domain, candidates, alpha)
    h_start = selected_cross_entropy(state)
    scratch_baseline = state.scratch_evaluations
    alpha_f = float(alpha)
    p_in = state.p_in
    counts = state.counts
    ids = state.ids

    n = len(candidates)
    lengths = np.fromiter((len(s) for s in candidates), dtype=np.int64, count=n)

    # Flat sparse profiles over in-domain-vocabulary tokens only: tokens
    # outside that vocabulary never contribute to the gain term.
    flat_word: list[int] = []
    flat_count: list[int] = []
    ptr = [0]
    inverted: dict[int, dict[int, list[int]]] = {}
    for t, sent in enumerate(candidates):
        for tok, c_s in sorted(Counter(sent).items()):
            v = ids[tok]
            if p_in[v] > 0.0:
                flat_word.append(v)
                flat_count.append(c_s)
                inverted.setdefault(v, {}).setdefault(c_s, []).append(t)
        ptr.append(len(flat_word))
    inv_arrays = {
        v: [(c_s, np.asarray(idxs, dtype=np.int64))
            for c_s, idxs in sorted(groups.items())]
        for v, groups in inverted.items()
    }
    del inverted

    log2 = math.log2
    fsum = math.fsum

    def exact_neg_gain(t: int) -> float:
        # exactly-rounded and order-independent, so candidates whose terms
        # are equal as multisets compare as exact ties
        terms = []
        for j in range(ptr[t], ptr[t + 1]):
            v = flat_word[j]
            c = int(counts[v])
            terms.append(float(p_in[v]) * log2((c + flat_count[j] + alpha_f)
                                               / (c + alpha_f)))
        return 0.0 - fsum(terms)

    # Running (scatter-updated) negated gains: accumulation noise stays many
    # orders below TIE_BAND, inside which the winner is re-derived exactly.
    TIE_BAND = 1e-10
    neg_gains = np.zeros(n, dtype=np.float64)
    if flat_word:
        fw = np.asarray(flat_word, dtype=np.int64)
        fc = np.asarray(flat_count, dtype=np.int64)
        owner = np.repeat(np.arange(n), np.diff(ptr))
        neg_gains -= np.bincount(
            owner, weights=p_in[fw] * np.log2((fc + alpha_f) / alpha_f), minlength=n)
        del fw, fc, owner

    penalty_by_len = np.zeros(int(lengths.max()) + 1, dtype=np.float64)
    distinct_lengths = np.unique(lengths)
    keys = np.empty(n, dtype=np.float64)

    steps: list[GreedyStep] = []
    h_running = h_start
    update_elements = 0
    band_resolutions = 0

    for step in range(budget):
        denom = state.total + alpha_f * state.vocab_size
        log_denom = log2(denom)
        for w in distinct_lengths:
            penalty_by_len[w] = log2(denom + int(w))
        np.take(penalty_by_len, lengths, out=keys)
        keys += neg_gains

        first = int(np.argmin(keys))
        band = np.flatnonzero(keys <= keys[first] + TIE_BAND)
        if len(band) == 1:
            best_idx = first
        else:
            band_resolutions += 1
            best_idx = min(
                band,
                key=lambda t: (penalty_by_len[lengths[t]] + exact_neg_gain(int(t)),
                               int(t)),
            )
        best_idx = int(best_idx)
        delta_h = float(penalty_by_len[lengths[best_idx]]
                        + exact_neg_gain(best_idx)) - log_denom
        neg_gains[best_idx] = np.inf  # remove from the pool

        # incremental gain updates for candidates sharing the chosen words
        for j in range(ptr[best_idx], ptr[best_idx + 1]):
            v = flat_word[j]
            c_old = int(counts[v])
            c_new = c_old + flat_count[j]
            shift = log2(c_new + alpha_f) - log2(c_old + alpha_f)
            for c_s, idx_arr in inv_arrays[v]:
                delta = float(p_in[v]) * (
                    log2(c_new + c_s + alpha_f) - log2(c_old + c_s + alpha_f) - shift)
                neg_gains[idx_arr] -= delta
                update_elements += len(idx_arr)
        neg_gains[best_idx] = np.inf  # scatter may have touched the winner
        # full counts, including tokens outside the in-domain vocabulary
        for tok, c_s in Counter(candidates[best_idx]).items():
            counts[ids[tok]] += c_s
        state.total += int(lengths[best_idx])

        h_running += delta_h
        steps.append(GreedyStep(step, best_idx, delta_h, h_running))

    return SelectionResult(
        method="cynical",
        ranking=[SentenceScore(s.index, s.delta_h) for s in steps],
        selection_order=steps,
        stats={
            "joint_vocab_size": state.vocab_size,
            "h_start": h_start,
            "h_final": h_running,
            "gain_update_elements": update_elements,
            "band_resolutions": band_resolutions,
            "scratch_h_during_steps": state.scratch_evaluations - scratch_baseline,
            "state": state,
        },
    )


# ---------------------------------------------------------------------------
# Artifact output
# ---------------------------------------------------------------------------

def write_ranking_tsv(result: SelectionResult, path: str | Path) -> None:
    """`rank<TAB>sentence_index<TAB>score`, best first."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for rank, entry in enumerate(result.ranking):
            fh.write(f"{rank}\t{entry.index}\t{entry.score:.9f}\n")


def read_ranking_tsv(path: str | Path, method: str = "moore_lewis") -> SelectionResult:
    """Read a ranking written by `write_ranking_tsv`."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"ranking file not found: {path}")
    ranking: list[SentenceScore] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
        fields = line.split("\t")
        if len(fields) != 3:
            raise DataError(f"malformed ranking line {lineno + 1} in {path}")
        rank, index, score = fields
        if int(rank) != lineno:
            raise DataError(f"non-contiguous rank {rank} at line {lineno + 1} in {path}")
        ranking.append(SentenceScore(int(index), float(score)))
    if not ranking:
        raise DataError(f"empty ranking file: {path}")
    return SelectionResult(method=method, ranking=ranking)


def write_selection_trace_tsv(result: SelectionResult, path: str | Path) -> None:
    """`step<TAB>index<TAB>delta_H<TAB>H_n` for greedy selection."""
    if result.selection_order is None:
        raise DataError(f"no selection trace for method {result.method}")
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in result.selection_order:
            fh.write(f"{s.step}\t{s.index}\t{s.delta_h:.9f}\t{s.h_after:.9f}\n")


def write_selection_manifest(path: str | Path, method: str, cut_sizes: Sequence[int],
                             alpha: float | None = None, seed: int | None = None,
                             model_files: Sequence[str] = (), extras: dict | None = None) -> None:
    doc = {
        "method": method,
        "model_files": list(model_files),
        "alpha": alpha,
        "seed": seed,
        "cut_sizes": list(cut_sizes),
    }
    if extras:
        doc.update(extras)
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
