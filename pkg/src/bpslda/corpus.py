"""Text ingestion, vocabulary construction, sparse vectorization, fold splits.

File formats handled here:
  * vectorized corpus — one document per line,
    ``<label> <id>:<count> <id>:<count> ...`` with strictly increasing
    0-based ids; the label is a decimal (regression) or a non-negative
    integer class id (classification);
  * raw-text corpus — one document per line, ``<label><TAB><raw text>``;
  * vocabulary — one token per line, line number = id.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyAfterFilteringError,
    EmptyCorpusError,
    FormatError,
    TooFewDocsError,
)

_NON_TOKEN = re.compile(r"[^a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, replace anything outside [a-z0-9] with spaces, split."""
    return _NON_TOKEN.sub(" ", text.lower()).split()


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    index: dict  # token -> 0-based id

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class SparseBow:
    """Sparse term-frequency vector of one document."""

    vocab_size: int
    term_ids: np.ndarray  # int64, strictly increasing
    counts: np.ndarray  # int64, all >= 1

    def __post_init__(self):
        ids = np.asarray(self.term_ids, dtype=np.int64)
        counts = np.asarray(self.counts, dtype=np.int64)
        if ids.ndim != 1 or counts.shape != ids.shape:
            raise ValueError("term_ids and counts must be 1-D and equal length")
        if ids.size == 0:
            raise ValueError("a document needs at least one in-vocabulary token")
        if np.any(counts < 1):
            raise ValueError("counts must be >= 1")
        if np.any(np.diff(ids) <= 0):
            raise ValueError("term_ids must be strictly increasing")
        if ids[0] < 0 or ids[-1] >= self.vocab_size:
            raise ValueError("term id out of vocabulary range")
        ids.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "term_ids", ids)
        object.__setattr__(self, "counts", counts)

    @property
    def n_tokens(self) -> int:
        """Number of unique in-vocabulary tokens (nTok)."""
        return int(self.term_ids.size)

    @property
    def total_count(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class LabeledDoc:
    bow: SparseBow
    label: object  # float vector (regression) or int class id (classification)


def build_vocabulary(docs, max_size: int) -> Vocabulary:
    """Keep the max_size most frequent tokens; ties break lexicographically.

    ``docs`` is an iterable of token sequences. Ids are assigned in
    (frequency desc, token asc) order.
    """
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    freq = Counter()
    for tokens in docs:
        freq.update(tokens)
    if not freq:
        raise EmptyCorpusError("no tokens in the corpus")
    ranked = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))[:max_size]
    tokens = tuple(tok for tok, _ in ranked)
    return Vocabulary(tokens, {tok: i for i, tok in enumerate(tokens)})


def vectorize(tokens, vocab: Vocabulary) -> SparseBow:
    """Count in-vocabulary tokens; out-of-vocabulary tokens are dropped."""
    if len(vocab) == 0:
        raise ValueError("empty vocabulary")
    counts = Counter(vocab.index[t] for t in tokens if t in vocab.index)
    if not counts:
        raise EmptyAfterFilteringError("no token survived vocabulary filtering")
    ids = np.array(sorted(counts), dtype=np.int64)
    return SparseBow(len(vocab), ids, np.array([counts[i] for i in ids], dtype=np.int64))


def kfold_split(n_docs: int, k: int, seed: int) -> list[np.ndarray]:
    """Seeded partition of {0..n_docs-1} into k folds with sizes differing <= 1."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if n_docs < k:
        raise TooFewDocsError(f"cannot split {n_docs} documents into {k} folds")
    perm = np.random.default_rng(seed).permutation(n_docs)
    return [np.sort(fold) for fold in np.array_split(perm, k)]


def center_regression_labels(docs: list[LabeledDoc]):
    """Shift regression labels to zero mean; returns (shifted docs, mean).

    The mean is folded back into the trained model's output parameters for
    prediction-time un-shifting (see model.with_output_offset).
    """
    labels = np.array([np.asarray(d.label, dtype=np.float64).reshape(-1) for d in docs])
    mean = labels.mean(axis=0)
    shifted = [LabeledDoc(d.bow, lab - mean) for d, lab in zip(docs, labels)]
    return shifted, mean


# ---------------------------------------------------------------------------
# File IO


def write_vocabulary(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as out:
        for tok in vocab.tokens:
            out.write(tok + "\n")


def read_vocabulary(path) -> Vocabulary:
    with open(path, encoding="utf-8") as handle:
        tokens = [line.strip() for line in handle if line.strip()]
    if not tokens:
        raise FormatError("empty vocabulary file")
    if len(set(tokens)) != len(tokens):
        raise FormatError("vocabulary file has duplicate tokens")
    return Vocabulary(tuple(tokens), {tok: i for i, tok in enumerate(tokens)})


def _parse_label(text: str, lineno: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise FormatError(f"line {lineno}: bad label {text!r}") from None


def read_vectorized_corpus(path, vocab_size: int | None = None):
    """Read a vectorized corpus file; returns (bows, labels as floats).

    When vocab_size is None, it is inferred as max id + 1; otherwise ids
    are validated to stay below it.
    """
    raw = []
    max_id = -1
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            label = _parse_label(parts[0], lineno)
            if len(parts) < 2:
                raise FormatError(f"line {lineno}: document has no terms")
            ids = np.empty(len(parts) - 1, dtype=np.int64)
            counts = np.empty(len(parts) - 1, dtype=np.int64)
            for i, pair in enumerate(parts[1:]):
                try:
                    id_text, count_text = pair.split(":")
                    ids[i] = int(id_text)
                    counts[i] = int(count_text)
                except ValueError:
                    raise FormatError(f"line {lineno}: bad pair {pair!r}") from None
            raw.append((label, ids, counts))
            if ids.size:
                max_id = max(max_id, int(ids[-1]))
    if not raw:
        raise FormatError(f"{path}: empty corpus file")
    if vocab_size is None:
        vocab_size = max_id + 1
    elif max_id >= vocab_size:
        raise FormatError(
            f"term id {max_id} out of range for vocabulary size {vocab_size}"
        )
    bows, labels = [], []
    for lineno, (label, ids, counts) in enumerate(raw, start=1):
        try:
            bows.append(SparseBow(vocab_size, ids, counts))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
        labels.append(label)
    return bows, labels


def write_vectorized_corpus(path, bows, labels) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as out:
        for bow, label in zip(bows, labels):
            if isinstance(label, (int, np.integer)):
                head = str(int(label))
            else:
                value = np.asarray(label, dtype=np.float64).reshape(-1)
                if value.size != 1:
                    raise ValueError("vectorized corpus labels must be scalar")
                head = format(float(value[0]), ".17g")
            pairs = " ".join(
                f"{i}:{c}" for i, c in zip(bow.term_ids, bow.counts)
            )
            out.write(f"{head} {pairs}\n")


def read_raw_corpus(path, vocab: Vocabulary):
    """Read label<TAB>text lines; returns (bows, labels, n_skipped).

    Documents with no in-vocabulary token are skipped and counted rather
    than aborting: large corpora always contain such documents.
    """
    bows, labels = [], []
    skipped = 0
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise FormatError(f"line {lineno}: expected <label><TAB><text>")
            label_text, text = line.split("\t", 1)
            label = _parse_label(label_text, lineno)
            try:
                bow = vectorize(tokenize(text), vocab)
            except EmptyAfterFilteringError:
                skipped += 1
                continue
            bows.append(bow)
            labels.append(label)
    if not bows:
        raise EmptyCorpusError(f"{path}: no document survived vectorization")
    return bows, labels, skipped


def iter_raw_token_streams(path):
    """Token streams of a raw corpus file, for vocabulary building."""
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise FormatError("expected <label><TAB><text>")
            yield tokenize(line.split("\t", 1)[1])
