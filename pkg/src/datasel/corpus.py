"""Corpus loading, validation, sampling, and persistence.

Every other module identifies sentences by their 0-based index into a
Corpus, so this module is the single source of truth for indexing.
Input format is plain UTF-8 text, one sentence per line, tokens
separated by single spaces.
"""

import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from datasel.errors import DataError

logger = logging.getLogger(__name__)

DEFAULT_MAX_LEN = 80

# Tokens with special meaning to the LM module; they may not appear in
# training text.
RESERVED_TOKENS = ("<s>", "</s>", "<unk>")


@dataclass(frozen=True)
class Corpus:
    """An ordered, immutable collection of tokenized sentences.

    Indices are dense, 0-based, and stable for the lifetime of the
    object. `provenance`, when present, maps each index to the 0-based
    line number the sentence had in its file of origin (it survives
    filtering and sampling).
    """

    sentences: tuple[tuple[str, ...], ...]
    side_label: str = "source"
    origin: str = "<memory>"
    provenance: tuple[int, ...] | None = None
    n_dropped: int = 0

    def __post_init__(self):
        if self.side_label not in ("source", "target"):
            raise DataError(f"side_label must be 'source' or 'target', got {self.side_label!r}")
        for i, sent in enumerate(self.sentences):
            if len(sent) == 0:
                raise DataError(f"empty sentence at index {i} in {self.origin}")
        if self.provenance is not None and len(self.provenance) != len(self.sentences):
            raise DataError("provenance length does not match sentence count")

    def __len__(self) -> int:
        return len(self.sentences)

    def __getitem__(self, idx: int) -> tuple[str, ...]:
        return self.sentences[idx]

    def __iter__(self):
        return iter(self.sentences)

    def token_count(self) -> int:
        return sum(len(s) for s in self.sentences)

    def subset(self, indices: Sequence[int]) -> "Corpus":
        """New corpus containing the given sentences, re-indexed densely.

        Provenance records the position each sentence held in this corpus
        (composed with existing provenance if any).
        """
        prov = self.provenance or tuple(range(len(self.sentences)))
        return Corpus(
            sentences=tuple(self.sentences[i] for i in indices),
            side_label=self.side_label,
            origin=f"{self.origin}[subset:{len(indices)}]",
            provenance=tuple(prov[i] for i in indices),
        )


@dataclass(frozen=True)
class Vocabulary:
    """Token inventory with dense ids and exact frequency counts."""

    token_to_id: dict[str, int]
    id_to_token: tuple[str, ...]
    counts: dict[str, int]

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def total_tokens(self) -> int:
        return sum(self.counts.values())


@dataclass(frozen=True)
class ParallelCorpus:
    """A sentence-aligned source/target corpus pair."""

    src: Corpus
    trg: Corpus

    def __post_init__(self):
        if len(self.src) != len(self.trg):
            raise DataError(
                f"parallel corpus sides differ in length: "
                f"{len(self.src)} source vs {len(self.trg)} target"
            )

    def __len__(self) -> int:
        return len(self.src)


def _read_lines(path: str | Path) -> list[str]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"corpus file not found: {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"corpus file is not valid UTF-8: {path} ({exc})") from exc
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def load_corpus(
    path: str | Path,
    max_len: int = DEFAULT_MAX_LEN,
    side_label: str = "source",
) -> Corpus:
    """Load a tokenized corpus, dropping sentences longer than max_len tokens.

    Remaining sentences keep file order; the number of dropped sentences
    is logged and recorded on the returned corpus. Empty lines are a
    data error (sentences must have at least one token).
    """
    if max_len < 1:
        raise DataError(f"max_len must be positive, got {max_len}")
    lines = _read_lines(path)
    sentences: list[tuple[str, ...]] = []
    provenance: list[int] = []
    dropped = 0
    for lineno, line in enumerate(lines):
        tokens = tuple(line.split())
        if not tokens:
            raise DataError(f"empty sentence at line {lineno + 1} in {path}")
        reserved = set(tokens) & set(RESERVED_TOKENS)
        if reserved:
            raise DataError(
                f"reserved token {sorted(reserved)[0]!r} at line {lineno + 1} in {path}"
            )
        if len(tokens) > max_len:
            dropped += 1
            continue
        sentences.append(tokens)
        provenance.append(lineno)
    if not sentences:
        raise DataError(f"no sentences remain after length filtering: {path}")
    if dropped:
        logger.info("dropped %d of %d sentences longer than %d tokens from %s",
                    dropped, len(lines), max_len, path)
    return Corpus(
        sentences=tuple(sentences),
        side_label=side_label,
        origin=str(path),
        provenance=tuple(provenance),
        n_dropped=dropped,
    )


def load_parallel(
    src_path: str | Path,
    trg_path: str | Path,
    max_len: int = DEFAULT_MAX_LEN,
) -> ParallelCorpus:
    """Load an aligned corpus pair, dropping a pair when either side is too long."""
    src_lines = _read_lines(src_path)
    trg_lines = _read_lines(trg_path)
    if len(src_lines) != len(trg_lines):
        raise DataError(
            f"parallel files differ in line count: {src_path} has {len(src_lines)}, "
            f"{trg_path} has {len(trg_lines)}"
        )
    src_sents, trg_sents, prov = [], [], []
    dropped = 0
    for lineno, (s_line, t_line) in enumerate(zip(src_lines, trg_lines)):
        s_toks, t_toks = tuple(s_line.split()), tuple(t_line.split())
        if not s_toks or not t_toks:
            raise DataError(f"empty sentence at line {lineno + 1} in parallel pair")
        if len(s_toks) > max_len or len(t_toks) > max_len:
            dropped += 1
            continue
        src_sents.append(s_toks)
        trg_sents.append(t_toks)
        prov.append(lineno)
    if not src_sents:
        raise DataError("no sentence pairs remain after length filtering")
    if dropped:
        logger.info("dropped %d over-length pairs from %s / %s", dropped, src_path, trg_path)
    return ParallelCorpus(
        src=Corpus(tuple(src_sents), "source", str(src_path), tuple(prov), dropped),
        trg=Corpus(tuple(trg_sents), "target", str(trg_path), tuple(prov), dropped),
    )


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write one sentence per line; provenance goes to a `.lines` sidecar."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for sent in corpus.sentences:
            fh.write(" ".join(sent))
            fh.write("\n")
    if corpus.provenance is not None:
        sidecar = path.with_name(path.name + ".lines")
        with sidecar.open("w", encoding="utf-8") as fh:
            for lineno in corpus.provenance:
                fh.write(f"{lineno}\n")


def corpus_from_sentences(
    sentences: Iterable[Sequence[str]],
    side_label: str = "source",
    origin: str = "<memory>",
) -> Corpus:
    """Build a corpus from in-memory token sequences (mostly for tests and fixtures)."""
    return Corpus(
        sentences=tuple(tuple(s) for s in sentences),
        side_label=side_label,
        origin=origin,
    )


def build_vocab(corpus: Corpus) -> Vocabulary:
    """Vocabulary with ids in first-occurrence order and exact token counts."""
    if len(corpus) == 0:
        raise DataError("cannot build a vocabulary from an empty corpus")
    token_to_id: dict[str, int] = {}
    counts: dict[str, int] = {}
    for sent in corpus.sentences:
        for tok in sent:
            if tok not in token_to_id:
                token_to_id[tok] = len(token_to_id)
                counts[tok] = 0
            counts[tok] += 1
    id_to_token = tuple(sorted(token_to_id, key=token_to_id.get))
    return Vocabulary(token_to_id=token_to_id, id_to_token=id_to_token, counts=counts)


def sample_positions(n: int, k: int, seed: int) -> list[int]:
    """k distinct positions out of n, uniform without replacement, seeded.

    Shared by corpus sampling and by callers that must apply one sample to
    several index-aligned corpora (e.g. both sides of a parallel corpus).
    """
    if k < 1:
        raise DataError(f"sample size must be positive, got {k}")
    if k > n:
        raise DataError(f"cannot sample {k} sentences from a corpus of {n}")
    return random.Random(seed).sample(range(n), k)


def sample_uniform(corpus: Corpus, k: int, seed: int) -> Corpus:
    """Uniform sample of k distinct sentences, deterministic for a given seed.

    Original indices are retained as provenance. k equal to the corpus
    size returns the whole corpus in a shuffled order.
    """
    return corpus.subset(sample_positions(len(corpus), k, seed))
