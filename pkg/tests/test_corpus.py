import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bpslda.corpus import (
    LabeledDoc,
    SparseBow,
    Vocabulary,
    build_vocabulary,
    center_regression_labels,
    iter_raw_token_streams,
    kfold_split,
    read_raw_corpus,
    read_vectorized_corpus,
    read_vocabulary,
    tokenize,
    vectorize,
    write_vectorized_corpus,
    write_vocabulary,
)
from bpslda.errors import (
    EmptyAfterFilteringError,
    EmptyCorpusError,
    FormatError,
    TooFewDocsError,
)


class TestTokenize:
    def test_lowercase_and_punctuation(self):
        assert tokenize("Hello, World!") == ["hello", "world"]

    def test_digits_kept(self):
        assert tokenize("route 66 rocks") == ["route", "66", "rocks"]

    def test_separators_collapse(self):
        assert tokenize("a--b  c\t d") == ["a", "b", "c", "d"]


class TestBuildVocabulary:
    def test_tie_break_lexicographic(self):
        vocab = build_vocabulary([["a", "b", "a"], ["b", "c"]], max_size=2)
        assert vocab.tokens == ("a", "b")

    def test_fewer_tokens_than_cap(self):
        assert build_vocabulary([["x"]], max_size=5).tokens == ("x",)

    def test_strict_frequency_order(self):
        vocab = build_vocabulary([["a", "a", "a"], ["b"]], max_size=1)
        assert vocab.tokens == ("a",)

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpusError):
            build_vocabulary([[], []], max_size=3)

    def test_ids_match_rank(self):
        vocab = build_vocabulary([["z", "z", "m", "m", "m", "q"]], max_size=3)
        assert vocab.tokens == ("m", "z", "q")
        assert vocab.index == {"m": 0, "z": 1, "q": 2}


class TestVectorize:
    @pytest.fixture
    def vocab(self):
        return Vocabulary(("a", "b"), {"a": 0, "b": 1})

    def test_direct_count(self, vocab):
        bow = vectorize(["a", "b", "a"], vocab)
        np.testing.assert_array_equal(bow.term_ids, [0, 1])
        np.testing.assert_array_equal(bow.counts, [2, 1])

    def test_oov_dropped(self, vocab):
        bow = vectorize(["a", "z"], vocab)
        np.testing.assert_array_equal(bow.term_ids, [0])
        np.testing.assert_array_equal(bow.counts, [1])

    def test_nothing_survives(self, vocab):
        with pytest.raises(EmptyAfterFilteringError):
            vectorize(["z", "z"], vocab)

    def test_count_sum_equals_kept_tokens(self, rng):
        tokens = [str(t) for t in rng.integers(0, 30, size=200)]
        vocab = build_vocabulary([tokens], max_size=10)
        bow = vectorize(tokens, vocab)
        kept = sum(1 for t in tokens if t in vocab.index)
        assert bow.total_count == kept


class TestSparseBow:
    def test_requires_increasing_ids(self):
        with pytest.raises(ValueError):
            SparseBow(5, np.array([2, 1]), np.array([1, 1]))

    def test_requires_positive_counts(self):
        with pytest.raises(ValueError):
            SparseBow(5, np.array([1]), np.array([0]))

    def test_requires_in_range_ids(self):
        with pytest.raises(ValueError):
            SparseBow(5, np.array([5]), np.array([1]))

    def test_requires_nonempty(self):
        with pytest.raises(ValueError):
            SparseBow(5, np.array([], dtype=np.int64), np.array([], dtype=np.int64))


class TestKfold:
    def test_even_partition(self):
        folds = kfold_split(10, 5, seed=0)
        assert [len(f) for f in folds] == [2] * 5
        assert sorted(np.concatenate(folds).tolist()) == list(range(10))

    def test_uneven_partition(self):
        folds = kfold_split(7, 5, seed=0)
        assert sorted(len(f) for f in folds) == [1, 1, 1, 2, 2]

    def test_deterministic(self):
        first = kfold_split(20, 4, seed=9)
        second = kfold_split(20, 4, seed=9)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)

    def test_too_few_docs(self):
        with pytest.raises(TooFewDocsError):
            kfold_split(3, 5, seed=0)

    def test_k_below_two(self):
        with pytest.raises(ValueError):
            kfold_split(10, 1, seed=0)

    @settings(max_examples=40, deadline=None)
    @given(
        n=st.integers(min_value=2, max_value=200),
        k=st.integers(min_value=2, max_value=12),
        seed=st.integers(min_value=0, max_value=2**31),
    )
    def test_partition_property(self, n, k, seed):
        if n < k:
            return
        folds = kfold_split(n, k, seed)
        joined = np.concatenate(folds)
        assert len(joined) == n
        assert len(np.unique(joined)) == n
        assert max(len(f) for f in folds) - min(len(f) for f in folds) <= 1


class TestLabelCentering:
    def test_mean_removed_and_returned(self, rng):
        bows = [SparseBow(4, np.array([0]), np.array([1])) for _ in range(5)]
        labels = [np.array([float(i)]) for i in range(5)]
        docs = [LabeledDoc(b, l) for b, l in zip(bows, labels)]
        centered, mean = center_regression_labels(docs)
        np.testing.assert_allclose(mean, [2.0])
        np.testing.assert_allclose(
            np.array([d.label for d in centered]).ravel(), [-2, -1, 0, 1, 2]
        )


class TestCorpusFiles:
    def test_vectorized_round_trip(self, rng, tmp_path):
        bows = [
            SparseBow(8, np.array([0, 3]), np.array([2, 1])),
            SparseBow(8, np.array([1, 2, 7]), np.array([1, 4, 2])),
        ]
        labels = [1.25, -0.5]
        path = tmp_path / "corpus.txt"
        write_vectorized_corpus(path, bows, labels)
        read_bows, read_labels = read_vectorized_corpus(path, vocab_size=8)
        assert read_labels == labels
        for a, b in zip(read_bows, bows):
            np.testing.assert_array_equal(a.term_ids, b.term_ids)
            np.testing.assert_array_equal(a.counts, b.counts)

    def test_vocab_size_inferred(self, tmp_path):
        path = tmp_path / "corpus.txt"
        path.write_text("0 1:2 5:1\n1 0:1\n")
        bows, _ = read_vectorized_corpus(path)
        assert bows[0].vocab_size == 6

    def test_id_out_of_range(self, tmp_path):
        path = tmp_path / "corpus.txt"
        path.write_text("0 1:2 9:1\n")
        with pytest.raises(FormatError):
            read_vectorized_corpus(path, vocab_size=5)

    def test_bad_pair(self, tmp_path):
        path = tmp_path / "corpus.txt"
        path.write_text("0 1:x\n")
        with pytest.raises(FormatError):
            read_vectorized_corpus(path)

    def test_raw_corpus_and_skip_count(self, tmp_path):
        vocab = Vocabulary(("spam", "ham"), {"spam": 0, "ham": 1})
        path = tmp_path / "raw.txt"
        path.write_text("1\tSpam spam HAM!\n0\tnothing known\n1\tham.\n")
        bows, labels, skipped = read_raw_corpus(path, vocab)
        assert skipped == 1
        assert labels == [1.0, 1.0]
        np.testing.assert_array_equal(bows[0].counts, [2, 1])

    def test_raw_corpus_requires_tab(self, tmp_path):
        path = tmp_path / "raw.txt"
        path.write_text("no tab here\n")
        with pytest.raises(FormatError):
            read_raw_corpus(path, Vocabulary(("a",), {"a": 0}))

    def test_vocab_file_round_trip(self, tmp_path):
        vocab = build_vocabulary([["b", "b", "a"]], max_size=2)
        path = tmp_path / "vocab.txt"
        write_vocabulary(vocab, path)
        assert read_vocabulary(path).tokens == vocab.tokens

    def test_token_streams(self, tmp_path):
        path = tmp_path / "raw.txt"
        path.write_text("1\tAlpha beta\n0\tbeta!\n")
        streams = list(iter_raw_token_streams(path))
        assert streams == [["alpha", "beta"], ["beta"]]
