"""Core domain types, simplex utilities, and text model serialization.

The model file is plain UTF-8 text with LF line endings:

    BPSLDA v1
    V K C task L alpha beta gamma
    <V rows of K topic-matrix entries>
    <C rows of K output-parameter entries>   (omitted when task is "unsup")

Floats are printed with 17 significant digits so a save/load round trip
reproduces every entry bit-exactly.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import AllZeroError, FormatError, NegativeEntryError

REGRESSION = "regression"
CLASSIFICATION = "classification"
UNSUPERVISED = "unsup"

_TASKS = (REGRESSION, CLASSIFICATION, UNSUPERVISED)

# Constructors reject entries below this rather than clamping; silent
# clamping would mask training divergence.
POSITIVITY_FLOOR = 1e-300

COLUMN_SUM_TOL = 1e-9
_FILE_COLUMN_SUM_TOL = 1e-6


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class Task:
    """Prediction head: regression / classification with C outputs, or unsup."""

    kind: str
    num_outputs: int = 1

    def __post_init__(self):
        if self.kind not in _TASKS:
            raise ValueError(f"unknown task kind {self.kind!r}")
        if self.kind == UNSUPERVISED:
            if self.num_outputs != 0:
                object.__setattr__(self, "num_outputs", 0)
        elif self.num_outputs < 1:
            raise ValueError("num_outputs must be >= 1")

    @property
    def supervised(self) -> bool:
        return self.kind != UNSUPERVISED


@dataclass(frozen=True)
class Hyperparams:
    """Model hyperparameters: K, Dirichlet priors, head scale, unroll depth."""

    num_topics: int
    dirichlet_alpha: float
    dirichlet_beta: float = 1.0
    gamma: float = 1.0
    unroll_depth: int = 10
    task: Task = field(default_factory=lambda: Task(REGRESSION, 1))
    convex_regime: bool = field(init=False)

    def __post_init__(self):
        if self.num_topics < 1:
            raise ValueError("num_topics must be >= 1")
        if not self.dirichlet_alpha > 0:
            raise ValueError("dirichlet_alpha must be > 0")
        if not self.dirichlet_beta > 0:
            raise ValueError("dirichlet_beta must be > 0")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if self.unroll_depth < 0:
            raise ValueError("unroll_depth must be >= 0")
        # The per-document MAP objective is (strictly) convex iff alpha >= 1 (> 1).
        object.__setattr__(self, "convex_regime", self.dirichlet_alpha >= 1.0)


@dataclass(frozen=True)
class TopicMatrix:
    """V x K word-topic matrix; every column lives on the V-simplex.

    Entries are stored column-major so per-column updates and column-sum
    checks touch contiguous memory.
    """

    entries: np.ndarray

    def __post_init__(self):
        ent = self.entries
        if not isinstance(ent, np.ndarray) or ent.ndim != 2:
            raise ValueError("entries must be a 2-D array")
        if ent.dtype != np.float64:
            ent = ent.astype(np.float64)
        if not ent.flags.f_contiguous or ent.flags.writeable:
            ent = np.asfortranarray(ent).copy(order="F")
            ent.setflags(write=False)
        object.__setattr__(self, "entries", ent)
        if not np.all(np.isfinite(ent)):
            raise ValueError("topic matrix has non-finite entries")
        if np.any(ent < POSITIVITY_FLOOR):
            raise ValueError(
                f"topic matrix entries must be >= {POSITIVITY_FLOOR:g} "
                f"(min was {ent.min():g})"
            )
        sums = ent.sum(axis=0)
        dev = np.abs(sums - 1.0).max()
        if dev > COLUMN_SUM_TOL:
            raise ValueError(f"topic matrix column sums deviate from 1 by {dev:g}")

    @property
    def vocab_size(self) -> int:
        return self.entries.shape[0]

    @property
    def num_topics(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class OutputParams:
    """C x K matrix of regression coefficients / class weights (unconstrained)."""

    u: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=np.float64, order="C")
        if u.ndim != 2:
            raise ValueError("u must be a 2-D array")
        if not np.all(np.isfinite(u)):
            raise ValueError("output parameters must be finite")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @property
    def num_outputs(self) -> int:
        return self.u.shape[0]

    @property
    def num_topics(self) -> int:
        return self.u.shape[1]


@dataclass(frozen=True)
class Model:
    """Topic matrix plus (for supervised tasks) output parameters."""

    hyper: Hyperparams
    phi: TopicMatrix
    u: OutputParams | None = None

    def __post_init__(self):
        if self.phi.num_topics != self.hyper.num_topics:
            raise ValueError("topic matrix K disagrees with hyperparameters")
        if self.hyper.task.supervised:
            if self.u is None:
                raise ValueError("supervised model requires output parameters")
            if self.u.num_topics != self.hyper.num_topics:
                raise ValueError("output parameter K disagrees with topic matrix")
            if self.u.num_outputs != self.hyper.task.num_outputs:
                raise ValueError("output parameter C disagrees with task")
        elif self.u is not None:
            raise ValueError("unsupervised model must not carry output parameters")

    @property
    def vocab_size(self) -> int:
        return self.phi.vocab_size


def normalize_to_simplex(v) -> np.ndarray:
    """Scale a non-negative vector so it sums to one.

    Raises NegativeEntryError / AllZeroError instead of producing garbage.
    """
    v = np.asarray(v, dtype=np.float64)
    if np.any(v < 0):
        raise NegativeEntryError("cannot normalize a vector with negative entries")
    total = v.sum()
    if total == 0.0:
        raise AllZeroError("cannot normalize the all-zero vector")
    return v / total


def with_output_offset(model: Model, offset) -> Model:
    """Add a constant per-output offset to U.

    Because topic proportions sum to one, adding c to every entry of a row
    of U adds c to that output; used to fold a label-centering shift back
    into a trained model.
    """
    if model.u is None:
        raise ValueError("unsupervised model has no output parameters")
    offset = np.asarray(offset, dtype=np.float64).reshape(-1)
    if offset.shape[0] != model.u.num_outputs:
        raise ValueError("offset dimension disagrees with model outputs")
    shifted = model.u.u + offset[:, None]
    return Model(model.hyper, model.phi, OutputParams(shifted))


def _write_matrix(out: io.TextIOBase, mat: np.ndarray) -> None:
    for row in mat:
        out.write(" ".join(_fmt(x) for x in row))
        out.write("\n")


def save_model(model: Model, path) -> None:
    hyper = model.hyper
    task = hyper.task
    with open(path, "w", encoding="utf-8", newline="\n") as out:
        out.write("BPSLDA v1\n")
        out.write(
            f"{model.vocab_size} {hyper.num_topics} {task.num_outputs} "
            f"{task.kind} {hyper.unroll_depth} "
            f"{_fmt(hyper.dirichlet_alpha)} {_fmt(hyper.dirichlet_beta)} "
            f"{_fmt(hyper.gamma)}\n"
        )
        _write_matrix(out, np.asarray(model.phi.entries))
        if model.u is not None:
            _write_matrix(out, model.u.u)


def _parse_row(line: str, width: int, lineno: int) -> np.ndarray:
    parts = line.split()
    if len(parts) != width:
        raise FormatError(f"line {lineno}: expected {width} values, got {len(parts)}")
    try:
        return np.array([float(p) for p in parts], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"line {lineno}: {exc}") from None


def load_model(path) -> Model:
    """Parse and validate a model file; inverse of save_model bit-for-bit."""
    with open(path, encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    if not lines or lines[0] != "BPSLDA v1":
        found = lines[0] if lines else "<empty file>"
        raise FormatError(f"bad header {found!r}, expected 'BPSLDA v1'")
    if len(lines) < 2:
        raise FormatError("missing dimension line")
    fields = lines[1].split()
    if len(fields) != 8:
        raise FormatError(f"dimension line has {len(fields)} fields, expected 8")
    try:
        vocab_size, num_topics, num_outputs = (int(f) for f in fields[:3])
        kind = fields[3]
        depth = int(fields[4])
        alpha, beta, gamma = (float(f) for f in fields[5:])
    except ValueError as exc:
        raise FormatError(f"dimension line: {exc}") from None
    if kind not in _TASKS:
        raise FormatError(f"unknown task {kind!r}")
    if kind == UNSUPERVISED and num_outputs != 0:
        raise FormatError("unsup model must record C = 0")
    if vocab_size < 1 or num_topics < 1 or depth < 0:
        raise FormatError("dimensions must be positive (L may be zero)")

    body = lines[2:]
    n_u_rows = num_outputs if kind != UNSUPERVISED else 0
    if len(body) != vocab_size + n_u_rows:
        raise FormatError(
            f"expected {vocab_size + n_u_rows} matrix rows, found {len(body)}"
        )
    phi = np.empty((vocab_size, num_topics), order="F")
    for i in range(vocab_size):
        phi[i] = _parse_row(body[i], num_topics, i + 3)
    if np.any(phi <= 0):
        raise FormatError("topic matrix entries must be strictly positive")
    sums = phi.sum(axis=0)
    dev = np.abs(sums - 1.0).max()
    if dev > _FILE_COLUMN_SUM_TOL:
        raise FormatError(f"topic matrix column sums deviate from 1 by {dev:g}")
    if dev > COLUMN_SUM_TOL:
        # Hand-edited files inside the looser file tolerance are corrected to
        # the constructor invariant; our own saves never enter this branch.
        phi /= sums

    u = None
    if kind != UNSUPERVISED:
        u_rows = np.empty((num_outputs, num_topics))
        for i in range(num_outputs):
            u_rows[i] = _parse_row(body[vocab_size + i], num_topics, vocab_size + i + 3)
        u = OutputParams(u_rows)

    try:
        hyper = Hyperparams(
            num_topics=num_topics,
            dirichlet_alpha=alpha,
            dirichlet_beta=beta,
            gamma=gamma,
            unroll_depth=depth,
            task=Task(kind, num_outputs),
        )
        return Model(hyper, TopicMatrix(phi), u)
    except ValueError as exc:
        raise FormatError(str(exc)) from None
