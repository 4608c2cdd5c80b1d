"""Word-level translation error taxonomy from alignments.

Each (unique source word, reference-aligned target word) event in the test
set is classified as correct, or as one of three error kinds: the source
word was never seen in training (SEEN), the word was seen but never with
this translation (SENSE), or both were seen and the system still preferred
another translation (SCORE). The four counters always partition the events.

Alignment files use the fast-align convention: one line per sentence,
space-separated `i-j` pairs of 0-based source-target positions; a blank
line means an unaligned sentence.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from datasel.corpus import Corpus, ParallelCorpus
from datasel.errors import DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AlignmentSet:
    """Per-sentence alignment links; duplicates collapsed, order normalized."""

    links: tuple[tuple[tuple[int, int], ...], ...]

    def __len__(self) -> int:
        return len(self.links)

    def __getitem__(self, idx: int) -> tuple[tuple[int, int], ...]:
        return self.links[idx]


def parse_alignment_line(line: str, lineno: int) -> tuple[tuple[int, int], ...]:
    pairs = set()
    for token in line.split():
        left, sep, right = token.partition("-")
        if not sep or not left.isdigit() or not right.isdigit():
            raise DataError(f"malformed alignment token {token!r} at line {lineno}")
        pairs.add((int(left), int(right)))
    return tuple(sorted(pairs))


def load_alignments(path: str | Path, src: Corpus | None = None,
                    trg: Corpus | None = None) -> AlignmentSet:
    """Parse a fast-align file; with companion corpora, verify positions.

    Blank lines are legal (unaligned sentences).
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"alignment file not found: {path}")
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    parsed = tuple(parse_alignment_line(line, i + 1) for i, line in enumerate(lines))
    aset = AlignmentSet(links=parsed)
    if src is not None or trg is not None:
        validate_alignments(aset, src, trg, origin=str(path))
    return aset


def validate_alignments(align: AlignmentSet, src: Corpus | None,
                        trg: Corpus | None, origin: str = "<alignments>") -> None:
    for corpus, side, pos in ((src, "source", 0), (trg, "target", 1)):
        if corpus is None:
            continue
        if len(corpus) != len(align):
            raise DataError(
                f"{origin}: {len(align)} alignment lines but {side} corpus "
                f"has {len(corpus)} sentences")
        for i, sent_links in enumerate(align.links):
            limit = len(corpus[i])
            for link in sent_links:
                if link[pos] >= limit:
                    raise DataError(
                        f"{origin}: alignment {link[0]}-{link[1]} at line {i + 1} "
                        f"out of bounds for a {limit}-token {side} sentence")


TranslationLexicon = Mapping[str, frozenset[str]]


def build_lexicon(train: ParallelCorpus, align: AlignmentSet) -> dict[str, frozenset[str]]:
    """Source word -> set of target words it aligned to in the training data.

    Source words that never align stay absent, so the error counter later
    classifies them as never-seen.
    """
    if len(train) != len(align):
        raise DataError(
            f"{len(align)} alignment lines but training corpus has {len(train)} pairs")
    validate_alignments(align, train.src, train.trg, origin="<training alignments>")
    acc: dict[str, set[str]] = {}
    for idx in range(len(train)):
        src_sent, trg_sent = train.src[idx], train.trg[idx]
        for i, j in align[idx]:
            acc.setdefault(src_sent[i], set()).add(trg_sent[j])
    return {word: frozenset(targets) for word, targets in acc.items()}


@dataclass(frozen=True)
class SentenceBreakdown:
    index: int
    correct: int
    seen: int
    sense: int
    score: int


@dataclass(frozen=True)
class S4Report:
    correct: int
    seen: int
    sense: int
    score: int
    per_sentence: tuple[SentenceBreakdown, ...]

    @property
    def total(self) -> int:
        return self.correct + self.seen + self.sense + self.score

    def rates(self) -> dict[str, float]:
        total = self.total
        if total == 0:
            return {"correct": 0.0, "seen": 0.0, "sense": 0.0, "score": 0.0}
        return {
            "correct": self.correct / total,
            "seen": self.seen / total,
            "sense": self.sense / total,
            "score": self.score / total,
        }


def _aligned_words(sentence: Sequence[str], target: Sequence[str],
                   links: Sequence[tuple[int, int]]) -> dict[str, set[str]]:
    out: dict[str, set[str]] = {}
    for i, j in links:
        out.setdefault(sentence[i], set()).add(target[j])
    return out


def s4_count(test_src: Corpus, ref: Corpus, ref_align: AlignmentSet,
             hyp: Corpus, hyp_align: AlignmentSet,
             lexicon: TranslationLexicon) -> S4Report:
    """Classify every (unique source word, reference link) event.

    A word's reference and hypothesis translations are unioned over all of
    its occurrences in the sentence. Precedence on a wrong translation is
    SEEN, then SENSE, then SCORE.
    """
    n = len(test_src)
    for name, other in (("reference corpus", ref), ("hypothesis corpus", hyp)):
        if len(other) != n:
            raise DataError(f"{name} has {len(other)} sentences, test source has {n}")
    for name, align in (("reference", ref_align), ("hypothesis", hyp_align)):
        if len(align) != n:
            raise DataError(f"{name} alignments cover {len(align)} sentences, not {n}")
    validate_alignments(ref_align, test_src, ref, origin="<reference alignments>")
    validate_alignments(hyp_align, test_src, hyp, origin="<hypothesis alignments>")

    breakdown: list[SentenceBreakdown] = []
    totals = [0, 0, 0, 0]  # correct, seen, sense, score
    for idx in range(n):
        src_sent = test_src[idx]
        e_ref = _aligned_words(src_sent, ref[idx], ref_align[idx])
        e_hyp = _aligned_words(src_sent, hyp[idx], hyp_align[idx])
        counts = [0, 0, 0, 0]
        for word in dict.fromkeys(src_sent):
            hyp_words = e_hyp.get(word, frozenset())
            for target in sorted(e_ref.get(word, frozenset())):
                if target in hyp_words:
                    counts[0] += 1
                elif word not in lexicon:
                    counts[1] += 1
                elif target not in lexicon[word]:
                    counts[2] += 1
                else:
                    counts[3] += 1
        breakdown.append(SentenceBreakdown(idx, *counts))
        for slot in range(4):
            totals[slot] += counts[slot]

    return S4Report(correct=totals[0], seen=totals[1], sense=totals[2],
                    score=totals[3], per_sentence=tuple(breakdown))


def write_s4_json(report: S4Report, path: str | Path) -> None:
    doc = {
        "correct": report.correct,
        "seen": report.seen,
        "sense": report.sense,
        "score": report.score,
        "total": report.total,
        "rates": report.rates(),
    }
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_s4_tsv(report: S4Report, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("sentence\tcorrect\tseen\tsense\tscore\n")
        for row in report.per_sentence:
            fh.write(f"{row.index}\t{row.correct}\t{row.seen}\t{row.sense}\t{row.score}\n")
