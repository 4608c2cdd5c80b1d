"""Count-based n-gram language models with interpolated modified Kneser-Ney
smoothing, plus an add-one unigram mode for tests with hand-computable values.

Probabilities are kept in log base 2 so that sentence cross-entropies come out
in bits per word. ARPA import/export converts to the format's log10 on the way
through.
"""

import logging
import math
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from datasel.corpus import Corpus
from datasel.errors import DataError

logger = logging.getLogger(__name__)

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

LOG2_10 = math.log2(10.0)
# ARPA convention for "never predicted" entries such as <s>.
LOG10_ZERO = -99.0
LOG2_ZERO = LOG10_ZERO * LOG2_10

FALLBACK_DISCOUNT = 0.75


@dataclass
class Discounts:
    """Per-order discounts for counts of 1, 2, and 3+."""

    d1: float
    d2: float
    d3: float
    fallback: bool = False

    def for_count(self, count: int) -> float:
        if count >= 3:
            return self.d3
        if count == 2:
            return self.d2
        if count == 1:
            return self.d1
        return 0.0


@dataclass
class NGramModel:
    """Immutable after training; safe for concurrent scoring.

    `probs[k]` maps k-grams (tuples of tokens) to log2 probabilities for
    k = 1..order; `backoffs[j]` maps length-j contexts to log2 backoff
    weights for j = 1..order-1. `vocab` holds the predictable events:
    every training token plus </s> and <unk>. <s> is context only.
    """

    order: int
    probs: list[dict[tuple[str, ...], float]]
    backoffs: list[dict[tuple[str, ...], float]]
    vocab: frozenset[str]
    smoothing: str = "modkn"
    discounts: list[Discounts | None] = field(default_factory=list)

    def ngram_count(self, k: int) -> int:
        return len(self.probs[k])

    def logprob(self, token: str, context: Sequence[str] = ()) -> float:
        """log2 P(token | context) with standard backoff and <unk> mapping."""
        w = token if token in self.vocab else UNK
        ctx: tuple[str, ...] = ()
        if self.order > 1:
            ctx = tuple(
                t if (t in self.vocab or t == BOS) else UNK
                for t in tuple(context)[-(self.order - 1):]
            )
        seq = ctx + (w,)
        return self._score_window(seq, len(seq) - 1)

    def _score_window(self, seq: tuple[str, ...], i: int) -> float:
        """Score the event at position i given up to order-1 preceding tokens.

        Walks from the longest available context downward, accumulating
        backoff weights of contexts that exist but lack the n-gram.
        """
        probs = self.probs
        backoffs = self.backoffs
        lo = max(0, i - self.order + 1)
        acc = 0.0
        for start in range(lo, i + 1):
            gram = seq[start:i + 1]
            p = probs[len(gram)].get(gram)
            if p is not None:
                return acc + p
            if len(gram) > 1:
                acc += backoffs[len(gram) - 1].get(gram[:-1], 0.0)
        raise DataError(
            f"no probability for token {seq[i]!r}; model lacks an <unk> entry"
        )

    def sentence_logprob_bits(self, sentence: Sequence[str], include_eos: bool = True) -> tuple[float, int]:
        """Total log2 probability (negated = bits) and event count for one sentence."""
        if len(sentence) == 0:
            raise DataError("cannot score an empty sentence")
        vocab = self.vocab
        mapped = tuple(t if t in vocab else UNK for t in sentence)
        seq = (BOS,) * (self.order - 1) + mapped + ((EOS,) if include_eos else ())
        n_events = len(mapped) + (1 if include_eos else 0)
        start = self.order - 1
        total = 0.0
        for i in range(start, start + n_events):
            total += self._score_window(seq, i)
        return total, n_events

    def sentence_cross_entropy(self, sentence: Sequence[str], include_eos: bool = True) -> float:
        """Per-word cross-entropy in bits: the mean negative log2 probability
        over the sentence's tokens plus, by default, the </s> event."""
        total, n_events = self.sentence_logprob_bits(sentence, include_eos)
        return -total / n_events


def sentence_cross_entropy(model: NGramModel, sentence: Sequence[str], include_eos: bool = True) -> float:
    return model.sentence_cross_entropy(sentence, include_eos)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def train(corpus: Corpus, order: int = 5, smoothing: str = "modkn") -> NGramModel:
    """Estimate an order-n model from a corpus.

    smoothing="modkn" (default) gives interpolated modified Kneser-Ney with
    Chen-Goodman discounts estimated per order from counts of counts; when
    those cannot be estimated the order falls back to a flat 0.75 absolute
    discount with a logged warning. smoothing="add_one" is the order-1
    test mode with hand-computable probabilities.
    """
    if len(corpus) == 0:
        raise DataError("cannot train on an empty corpus")
    if order < 1:
        raise DataError(f"order must be >= 1, got {order}")
    if smoothing == "add_one":
        if order != 1:
            raise DataError("add_one smoothing is defined for order=1 only")
        return _train_add_one(corpus)
    if smoothing != "modkn":
        raise DataError(f"unknown smoothing {smoothing!r}")
    return _train_modkn(corpus, order)


def _train_add_one(corpus: Corpus) -> NGramModel:
    counts: Counter[str] = Counter()
    for sent in corpus:
        counts.update(sent)
        counts[EOS] += 1
    total = sum(counts.values())
    vocab = set(counts) | {UNK}
    denom = total + len(vocab)
    probs1 = {(w,): math.log2((counts.get(w, 0) + 1) / denom) for w in vocab}
    probs1[(BOS,)] = LOG2_ZERO
    return NGramModel(
        order=1,
        probs=[{}, probs1],
        backoffs=[{}],
        vocab=frozenset(vocab),
        smoothing="add_one",
        discounts=[None, None],
    )


def _count_raw(corpus: Corpus, order: int) -> list[Counter]:
    """Raw k-gram counts for every order, each from its own (k-1)-padded text.

    Windows always end at a predicted event (a real token or </s>), so
    all-<s> grams never occur and <s> is never counted as an event.
    """
    raw: list[Counter] = [Counter() for _ in range(order + 1)]
    for sent in corpus:
        base = tuple(sent) + (EOS,)
        n_events = len(base)
        for k in range(1, order + 1):
            padded = (BOS,) * (k - 1) + base
            counts_k = raw[k]
            for i in range(n_events):
                counts_k[padded[i:i + k]] += 1
    return raw


def _adjusted_counts(raw: list[Counter], order: int) -> list[dict]:
    """Kneser-Ney continuation counts for lower orders.

    The highest order keeps raw counts, as do grams starting with <s>
    (they can never be extended to the left); every other k-gram's count
    becomes the number of distinct tokens preceding it at order k+1.
    """
    adjusted: list[dict] = [dict() for _ in range(order + 1)]
    adjusted[order] = dict(raw[order])
    for k in range(order - 1, 0, -1):
        support: Counter = Counter()
        for gram in raw[k + 1]:
            support[gram[1:]] += 1
        adj_k = {}
        for gram, count in raw[k].items():
            if gram[0] == BOS:
                adj_k[gram] = count
            else:
                adj_k[gram] = support[gram]
        adjusted[k] = adj_k
    return adjusted


def _estimate_discounts(counts: Iterable[int], order_k: int) -> Discounts:
    n = Counter()
    for c in counts:
        if 1 <= c <= 4:
            n[c] += 1
    if any(n[i] == 0 for i in (1, 2, 3, 4)):
        logger.warning(
            "order %d: counts of counts too sparse for Kneser-Ney discount "
            "estimation; falling back to absolute discount %.2f",
            order_k, FALLBACK_DISCOUNT,
        )
        return Discounts(FALLBACK_DISCOUNT, FALLBACK_DISCOUNT, FALLBACK_DISCOUNT, fallback=True)
    y = n[1] / (n[1] + 2.0 * n[2])
    d1 = 1.0 - 2.0 * y * n[2] / n[1]
    d2 = 2.0 - 3.0 * y * n[3] / n[2]
    d3 = 3.0 - 4.0 * y * n[4] / n[3]
    if not (0.0 < d1 < 1.0 and 0.0 < d2 < 2.0 and 0.0 < d3 < 3.0):
        logger.warning(
            "order %d: estimated discounts (%.3f, %.3f, %.3f) out of range; "
            "falling back to absolute discount %.2f",
            order_k, d1, d2, d3, FALLBACK_DISCOUNT,
        )
        return Discounts(FALLBACK_DISCOUNT, FALLBACK_DISCOUNT, FALLBACK_DISCOUNT, fallback=True)
    return Discounts(d1, d2, d3)


def _train_modkn(corpus: Corpus, order: int) -> NGramModel:
    raw = _count_raw(corpus, order)
    adjusted = _adjusted_counts(raw, order)
    vocab = frozenset(w for (w,) in adjusted[1]) | {EOS, UNK}

    discounts: list[Discounts | None] = [None] * (order + 1)
    for k in range(1, order + 1):
        discounts[k] = _estimate_discounts(adjusted[k].values(), k)

    probs: list[dict] = [dict() for _ in range(order + 1)]
    backoffs: list[dict] = [dict() for _ in range(order)]

    # Unigrams: interpolation mass at the bottom goes entirely to <unk>,
    # which keeps every conditional distribution summing to one exactly.
    disc1 = discounts[1]
    total1 = sum(adjusted[1].values())
    leftover = 0.0
    for (w,), count in adjusted[1].items():
        d = disc1.for_count(count)
        probs[1][(w,)] = math.log2((count - d) / total1)
        leftover += d
    probs[1][(UNK,)] = math.log2(leftover / total1)
    probs[1][(BOS,)] = LOG2_ZERO

    model = NGramModel(
        order=order,
        probs=probs,
        backoffs=backoffs,
        vocab=vocab,
        smoothing="modkn",
        discounts=discounts,
    )

    for k in range(2, order + 1):
        disc = discounts[k]
        ctx_total: dict = defaultdict(int)
        ctx_types: dict = defaultdict(lambda: [0, 0, 0])  # counts equal to 1, 2, >=3
        for gram, count in adjusted[k].items():
            h = gram[:-1]
            ctx_total[h] += count
            ctx_types[h][min(count, 3) - 1] += 1
        gamma = {}
        for h, total in ctx_total.items():
            t1, t2, t3 = ctx_types[h]
            gamma[h] = (disc.d1 * t1 + disc.d2 * t2 + disc.d3 * t3) / total
        for gram, count in adjusted[k].items():
            h = gram[:-1]
            d = disc.for_count(count)
            lower = model._score_window(gram[1:], len(gram) - 2)
            p = (count - d) / ctx_total[h] + gamma[h] * (2.0 ** lower)
            probs[k][gram] = math.log2(p)
        for h, g in gamma.items():
            backoffs[k - 1][h] = math.log2(g)

    return model


# ---------------------------------------------------------------------------
# Corpus-level scoring
# ---------------------------------------------------------------------------

_WORKER_MODEL: NGramModel | None = None


def _init_scoring_worker(model: NGramModel) -> None:
    global _WORKER_MODEL
    _WORKER_MODEL = model


def _score_chunk(sentences: list[tuple[str, ...]]) -> list[float]:
    return [_WORKER_MODEL.sentence_cross_entropy(s) for s in sentences]


def corpus_cross_entropies(model: NGramModel, corpus: Corpus, workers: int = 1) -> list[float]:
    """Per-sentence cross-entropies in bits per word.

    Scoring is a pure function of each sentence, so results are identical
    at any worker count.
    """
    if workers <= 1 or len(corpus) < 2 * workers:
        return [model.sentence_cross_entropy(s) for s in corpus]
    sentences = list(corpus.sentences)
    chunk = (len(sentences) + workers - 1) // workers
    chunks = [sentences[i:i + chunk] for i in range(0, len(sentences), chunk)]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_scoring_worker,
                             initargs=(model,)) as pool:
        out: list[float] = []
        for part in pool.map(_score_chunk, chunks):
            out.extend(part)
    return out


def iter_cross_entropies(model: NGramModel, sentences: Iterable[Sequence[str]]) -> Iterator[float]:
    """Streaming variant: constant memory beyond the model itself."""
    for sent in sentences:
        yield model.sentence_cross_entropy(sent)


def perplexity(model: NGramModel, corpus: Corpus) -> float:
    """Corpus perplexity, 2^(total bits / total predicted events).

    Aggregated over the whole corpus, not averaged per sentence.
    """
    if len(corpus) == 0:
        raise DataError("cannot compute perplexity of an empty corpus")
    total_bits = 0.0
    total_events = 0
    for sent in corpus:
        lp, n = model.sentence_logprob_bits(sent)
        total_bits -= lp
        total_events += n
    return 2.0 ** (total_bits / total_events)


def write_scores_tsv(path: str | Path, scores: Sequence[float]) -> None:
    """Scoring output format: `sentence_index<TAB>bits_per_word`."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for idx, value in enumerate(scores):
            fh.write(f"{idx}\t{value:.6f}\n")


# ---------------------------------------------------------------------------
# ARPA import/export
# ---------------------------------------------------------------------------

def export_arpa(model: NGramModel, path: str | Path) -> None:
    """Write the model in textual ARPA format (log10 probabilities).

    Entries are sorted so identical models export byte-identically;
    context-only entries (e.g. <s>-prefixed histories) get the usual -99
    placeholder probability.
    """
    path = Path(path)
    sections: list[list[str]] = []
    for k in range(1, model.order + 1):
        grams = set(model.probs[k])
        if k < model.order:
            grams.update(model.backoffs[k])
        lines = []
        for gram in sorted(grams):
            logp = model.probs[k].get(gram)
            log10p = LOG10_ZERO if logp is None else logp / LOG2_10
            text = " ".join(gram)
            if k < model.order and gram in model.backoffs[k]:
                log10b = model.backoffs[k][gram] / LOG2_10
                lines.append(f"{log10p:.7f}\t{text}\t{log10b:.7f}")
            else:
                lines.append(f"{log10p:.7f}\t{text}")
        sections.append(lines)

    with path.open("w", encoding="utf-8") as fh:
        fh.write("\\data\\\n")
        for k, lines in enumerate(sections, start=1):
            fh.write(f"ngram {k}={len(lines)}\n")
        for k, lines in enumerate(sections, start=1):
            fh.write(f"\n\\{k}-grams:\n")
            for line in lines:
                fh.write(line + "\n")
        fh.write("\n\\end\\\n")


def import_arpa(path: str | Path) -> NGramModel:
    """Read a textual ARPA model back into memory (probabilities to log2)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"ARPA file not found: {path}")
    lines = path.read_text(encoding="utf-8").split("\n")
    pos = 0

    def next_nonempty() -> str | None:
        nonlocal pos
        while pos < len(lines):
            line = lines[pos]
            pos += 1
            if line.strip():
                return line.strip()
        return None

    header = next_nonempty()
    if header != "\\data\\":
        raise DataError(f"malformed ARPA header in {path}: expected \\data\\, got {header!r}")
    expected: dict[int, int] = {}
    while True:
        line = next_nonempty()
        if line is None:
            raise DataError(f"unexpected end of file in ARPA \\data\\ section: {path}")
        if line.startswith("ngram "):
            try:
                k_part, count_part = line[len("ngram "):].split("=")
                expected[int(k_part)] = int(count_part)
            except ValueError as exc:
                raise DataError(f"malformed ngram count line {line!r} in {path}") from exc
            continue
        break

    if not expected or sorted(expected) != list(range(1, max(expected) + 1)):
        raise DataError(f"malformed ARPA order list in {path}: {sorted(expected)}")
    order = max(expected)
    probs: list[dict] = [dict() for _ in range(order + 1)]
    backoffs: list[dict] = [dict() for _ in range(order)]

    for k in range(1, order + 1):
        if line != f"\\{k}-grams:":
            raise DataError(f"expected \\{k}-grams: section in {path}, got {line!r}")
        read = 0
        while read < expected[k]:
            if pos >= len(lines):
                raise DataError(f"unexpected end of file in {k}-grams section of {path}")
            raw = lines[pos].rstrip("\r")
            pos += 1
            if not raw.strip():
                raise DataError(f"truncated {k}-grams section in {path}: "
                                f"expected {expected[k]} entries, found {read}")
            fields = raw.split("\t")
            if len(fields) not in (2, 3):
                raise DataError(f"malformed {k}-gram line {raw!r} in {path}")
            if len(fields) == 3 and k >= order:
                raise DataError(f"backoff weight on a highest-order gram in {path}: {raw!r}")
            gram = tuple(fields[1].split(" "))
            if len(gram) != k:
                raise DataError(f"{k}-gram line has {len(gram)} tokens in {path}: {raw!r}")
            try:
                log10p = float(fields[0])
                probs[k][gram] = log10p * LOG2_10
                if len(fields) == 3:
                    backoffs[k][gram] = float(fields[2]) * LOG2_10
            except ValueError as exc:
                raise DataError(f"malformed number in {k}-gram line {raw!r}") from exc
            read += 1
        line = next_nonempty()
        if line is None:
            raise DataError(f"unexpected end of file after {k}-grams section of {path}")

    if line != "\\end\\":
        raise DataError(f"missing \\end\\ marker in {path}, got {line!r}")

    vocab = frozenset(w for (w,) in probs[1] if w != BOS)
    return NGramModel(
        order=order,
        probs=probs,
        backoffs=backoffs,
        vocab=vocab,
        smoothing="imported",
        discounts=[None] * (order + 1),
    )
