import random

import pytest

from datasel.corpus import ParallelCorpus, corpus_from_sentences
from datasel.errors import DataError
from datasel.s4 import (
    AlignmentSet,
    build_lexicon,
    load_alignments,
    parse_alignment_line,
    s4_count,
    write_s4_json,
    write_s4_tsv,
)


def align_from_lines(lines):
    return AlignmentSet(links=tuple(parse_alignment_line(l, i + 1)
                                    for i, l in enumerate(lines)))


def diagonal_alignment(corpus):
    return AlignmentSet(links=tuple(
        tuple((i, i) for i in range(len(sent))) for sent in corpus))


@pytest.fixture
def training_lexicon():
    # haus -> {house, home}, katze -> {cat}, hund -> {dog}, blume -> {flower}
    train = ParallelCorpus(
        src=corpus_from_sentences([["haus", "katze", "hund"], ["haus", "blume"]]),
        trg=corpus_from_sentences([["house", "cat", "dog"], ["home", "flower"]],
                                  side_label="target"),
    )
    align = align_from_lines(["0-0 1-1 2-2", "0-0 1-1"])
    return build_lexicon(train, align)


class TestLoadAlignments:
    def test_basic_line(self, tmp_path):
        path = tmp_path / "a.align"
        path.write_text("0-0 1-2\n")
        aset = load_alignments(path)
        assert aset[0] == ((0, 0), (1, 2))

    def test_blank_line_means_unaligned(self, tmp_path):
        path = tmp_path / "a.align"
        path.write_text("0-0\n\n1-1\n")
        aset = load_alignments(path)
        assert len(aset) == 3
        assert aset[1] == ()

    def test_duplicate_links_collapse(self, tmp_path):
        path = tmp_path / "a.align"
        path.write_text("1-1 0-0 1-1\n")
        aset = load_alignments(path)
        assert aset[0] == ((0, 0), (1, 1))

    def test_malformed_token(self, tmp_path):
        path = tmp_path / "a.align"
        path.write_text("0-0 3_4\n")
        with pytest.raises(DataError, match="malformed alignment token"):
            load_alignments(path)

    def test_out_of_bounds_names_line(self, tmp_path):
        path = tmp_path / "a.align"
        path.write_text("0-0\n3-1\n")
        src = corpus_from_sentences([["a"], ["b", "c"]])
        trg = corpus_from_sentences([["x"], ["y", "z"]], side_label="target")
        with pytest.raises(DataError, match="line 2"):
            load_alignments(path, src=src, trg=trg)

    def test_sentence_count_mismatch(self, tmp_path):
        path = tmp_path / "a.align"
        path.write_text("0-0\n")
        src = corpus_from_sentences([["a"], ["b"]])
        with pytest.raises(DataError, match="2 sentences"):
            load_alignments(path, src=src)


class TestBuildLexicon:
    def test_basic_pairs(self):
        train = ParallelCorpus(
            src=corpus_from_sentences([["a", "b"]]),
            trg=corpus_from_sentences([["x", "y"]], side_label="target"),
        )
        lex = build_lexicon(train, align_from_lines(["0-0 1-1"]))
        assert lex == {"a": frozenset({"x"}), "b": frozenset({"y"})}

    def test_union_across_sentences(self, training_lexicon):
        assert training_lexicon["haus"] == frozenset({"house", "home"})

    def test_unaligned_source_word_absent(self):
        train = ParallelCorpus(
            src=corpus_from_sentences([["a", "b"]]),
            trg=corpus_from_sentences([["x", "y"]], side_label="target"),
        )
        lex = build_lexicon(train, align_from_lines(["0-0"]))
        assert "b" not in lex

    def test_size_mismatch(self):
        train = ParallelCorpus(
            src=corpus_from_sentences([["a"]]),
            trg=corpus_from_sentences([["x"]], side_label="target"),
        )
        with pytest.raises(DataError, match="alignment lines"):
            build_lexicon(train, align_from_lines(["0-0", "0-0"]))


class TestS4Count:
    def test_identical_hypothesis_gives_zero_errors(self, training_lexicon):
        test_src = corpus_from_sentences([["haus", "katze"], ["hund"]])
        ref = corpus_from_sentences([["house", "cat"], ["dog"]], side_label="target")
        ref_align = diagonal_alignment(test_src)
        report = s4_count(test_src, ref, ref_align, ref, ref_align, training_lexicon)
        assert (report.correct, report.seen, report.sense, report.score) == (3, 0, 0, 0)

    def test_hand_traced_branch_fixture(self, training_lexicon):
        # haus: ref {house, home}, hyp {house} -> one correct, one SCORE
        #   (home is a known translation of haus in training)
        # katze, hund: correct
        # neu: never aligned in training -> SEEN
        # blume: seen in training, but ref target "rose" never seen -> SENSE
        test_src = corpus_from_sentences(
            [["haus", "katze", "neu", "hund", "blume", "haus"]])
        ref = corpus_from_sentences(
            [["house", "cat", "new", "dog", "rose", "home"]], side_label="target")
        hyp = corpus_from_sentences(
            [["house", "cat", "old", "dog", "flower", "house"]], side_label="target")
        ref_align = align_from_lines(["0-0 1-1 2-2 3-3 4-4 5-5"])
        hyp_align = align_from_lines(["0-0 1-1 2-2 3-3 4-4 5-5"])
        report = s4_count(test_src, ref, ref_align, hyp, hyp_align, training_lexicon)
        assert (report.correct, report.seen, report.sense, report.score) == (3, 1, 1, 1)
        assert report.total == 6

    def test_seen_branch(self, training_lexicon):
        test_src = corpus_from_sentences([["neu"]])
        ref = corpus_from_sentences([["new"]], side_label="target")
        hyp = corpus_from_sentences([["old"]], side_label="target")
        a = align_from_lines(["0-0"])
        report = s4_count(test_src, ref, a, hyp, a, training_lexicon)
        assert (report.correct, report.seen, report.sense, report.score) == (0, 1, 0, 0)

    def test_sense_versus_score_branches(self):
        # E_t(x) = {u}: ref x->w with hyp x->u is SENSE;
        # widening training to E_t(x) = {u, w} makes the same event SCORE.
        test_src = corpus_from_sentences([["x"]])
        ref = corpus_from_sentences([["w"]], side_label="target")
        hyp = corpus_from_sentences([["u"]], side_label="target")
        a = align_from_lines(["0-0"])
        narrow = {"x": frozenset({"u"})}
        wide = {"x": frozenset({"u", "w"})}
        sense_report = s4_count(test_src, ref, a, hyp, a, narrow)
        assert (sense_report.sense, sense_report.score) == (1, 0)
        score_report = s4_count(test_src, ref, a, hyp, a, wide)
        assert (score_report.sense, score_report.score) == (0, 1)

    def test_unique_words_counted_once_with_unioned_links(self):
        # "a" occurs twice; links union to {x, y} on both sides
        test_src = corpus_from_sentences([["a", "a"]])
        ref = corpus_from_sentences([["x", "y"]], side_label="target")
        hyp = corpus_from_sentences([["y", "x"]], side_label="target")
        a = align_from_lines(["0-0 1-1"])
        report = s4_count(test_src, ref, a, hyp, a, {"a": frozenset({"x", "y"})})
        assert (report.correct, report.seen, report.sense, report.score) == (2, 0, 0, 0)

    def test_swapping_one_in_lexicon_translation_flips_correct_to_score(self):
        lexicon = {"a": frozenset({"x", "v"}), "b": frozenset({"y"})}
        test_src = corpus_from_sentences([["a", "b"]])
        ref = corpus_from_sentences([["x", "y"]], side_label="target")
        a = align_from_lines(["0-0 1-1"])
        baseline = s4_count(test_src, ref, a, ref, a, lexicon)
        hyp = corpus_from_sentences([["v", "y"]], side_label="target")
        perturbed = s4_count(test_src, ref, a, hyp, a, lexicon)
        assert perturbed.correct == baseline.correct - 1
        assert perturbed.score == baseline.score + 1
        assert perturbed.seen == baseline.seen
        assert perturbed.sense == baseline.sense

    def test_partition_invariant_on_random_fixtures(self):
        rng = random.Random(99)
        src_vocab = [f"s{i}" for i in range(12)]
        trg_vocab = [f"t{i}" for i in range(12)]
        for _ in range(100):
            n_sents = rng.randint(1, 6)
            src_sents, ref_sents, hyp_sents = [], [], []
            ref_lines, hyp_lines = [], []
            for _ in range(n_sents):
                length = rng.randint(1, 7)
                src_sents.append([rng.choice(src_vocab) for _ in range(length)])
                ref_sents.append([rng.choice(trg_vocab) for _ in range(length)])
                hyp_sents.append([rng.choice(trg_vocab) for _ in range(length)])
                links = {(rng.randrange(length), rng.randrange(length))
                         for _ in range(rng.randint(0, length + 2))}
                ref_lines.append(" ".join(f"{i}-{j}" for i, j in sorted(links)))
                links = {(rng.randrange(length), rng.randrange(length))
                         for _ in range(rng.randint(0, length + 2))}
                hyp_lines.append(" ".join(f"{i}-{j}" for i, j in sorted(links)))
            lexicon = {w: frozenset(rng.sample(trg_vocab, rng.randint(1, 3)))
                       for w in rng.sample(src_vocab, rng.randint(0, len(src_vocab)))}
            test_src = corpus_from_sentences(src_sents)
            ref = corpus_from_sentences(ref_sents, side_label="target")
            hyp = corpus_from_sentences(hyp_sents, side_label="target")
            report = s4_count(test_src, ref, align_from_lines(ref_lines),
                              hyp, align_from_lines(hyp_lines), lexicon)
            expected_events = 0
            for idx, sent in enumerate(src_sents):
                ref_links = align_from_lines(ref_lines)[idx]
                per_word = {}
                for i, j in ref_links:
                    per_word.setdefault(sent[i], set()).add(ref_sents[idx][j])
                expected_events += sum(len(v) for v in per_word.values())
            assert report.total == expected_events
            for row in report.per_sentence:
                assert row.correct + row.seen + row.sense + row.score >= 0

    def test_order_independence_of_sentence_processing(self, training_lexicon):
        src_sents = [["haus", "katze"], ["neu"], ["blume", "hund"]]
        ref_sents = [["house", "cat"], ["new"], ["rose", "dog"]]
        hyp_sents = [["home", "cat"], ["old"], ["flower", "dog"]]
        lines = ["0-0 1-1", "0-0", "0-0 1-1"]
        fwd = s4_count(corpus_from_sentences(src_sents),
                       corpus_from_sentences(ref_sents, side_label="target"),
                       align_from_lines(lines),
                       corpus_from_sentences(hyp_sents, side_label="target"),
                       align_from_lines(lines), training_lexicon)
        perm = [2, 0, 1]
        rev = s4_count(corpus_from_sentences([src_sents[i] for i in perm]),
                       corpus_from_sentences([ref_sents[i] for i in perm],
                                             side_label="target"),
                       align_from_lines([lines[i] for i in perm]),
                       corpus_from_sentences([hyp_sents[i] for i in perm],
                                             side_label="target"),
                       align_from_lines([lines[i] for i in perm]), training_lexicon)
        assert (fwd.correct, fwd.seen, fwd.sense, fwd.score) == \
            (rev.correct, rev.seen, rev.sense, rev.score)

    def test_coverage_mismatch_rejected(self, training_lexicon):
        test_src = corpus_from_sentences([["haus"]])
        ref = corpus_from_sentences([["house"], ["cat"]], side_label="target")
        a = align_from_lines(["0-0"])
        with pytest.raises(DataError, match="reference corpus"):
            s4_count(test_src, ref, a, ref, a, training_lexicon)


class TestReports:
    def test_json_and_tsv(self, tmp_path, training_lexicon):
        test_src = corpus_from_sentences([["haus", "neu"]])
        ref = corpus_from_sentences([["house", "new"]], side_label="target")
        hyp = corpus_from_sentences([["home", "old"]], side_label="target")
        a = align_from_lines(["0-0 1-1"])
        report = s4_count(test_src, ref, a, hyp, a, training_lexicon)
        write_s4_json(report, tmp_path / "r.json")
        write_s4_tsv(report, tmp_path / "r.tsv")
        import json
        doc = json.loads((tmp_path / "r.json").read_text())
        assert doc["total"] == report.total
        assert abs(sum(doc["rates"].values()) - 1.0) < 1e-9
        lines = (tmp_path / "r.tsv").read_text().strip().split("\n")
        assert lines[0] == "sentence\tcorrect\tseen\tsense\tscore"
        assert len(lines) == 2
