"""Batch command-line front end.

Subcommands: train, infer, eval, gen, gradcheck. Results go to stdout as
TSV, diagnostics to stderr. Exit codes: 0 success, 1 numerical failure,
2 usage or file errors.

Settings resolve as: built-in defaults, overridden by a ``key = value``
config file (--config), overridden by explicit flags. Config keys are the
lower_snake_case field names of the hyperparameter/training options;
flags are the same names in --lower-kebab-case.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import corpus as corpus_io
from .errors import BpsldaError, FormatError, NonFiniteError
from .evaluation import auc, predictive_r2, topic_sparsity
from .inference import (
    BREGMAN_KL,
    SQUARED_ONE_NORM,
    MdaOptions,
    infer_theta,
    predict,
)
from .model import (
    CLASSIFICATION,
    Hyperparams,
    Model,
    REGRESSION,
    Task,
    UNSUPERVISED,
    load_model,
    save_model,
    with_output_offset,
)
from .oracle import SynthSpec, gradient_check_suite, sample_corpus
from .training import TrainConfig, _DocMapper, train_supervised, train_unsupervised

_FMT = "%.17g"


def _fmt(x: float) -> str:
    return _FMT % float(x)


# ---------------------------------------------------------------------------
# Config file + flag resolution

_HYPER_KEYS = (
    "num_topics",
    "dirichlet_alpha",
    "dirichlet_beta",
    "gamma",
    "unroll_depth",
    "task",
    "output_dim",
    "num_classes",
)
_TRAIN_KEYS = (
    "minibatch_size",
    "epochs",
    "mu_u",
    "mu0",
    "eps",
    "seed",
    "running_average_start_epoch",
    "deterministic",
)
_MDA_KEYS = (
    "initial_step",
    "shrink",
    "line_search",
    "max_backtracks",
    "divergence_kind",
)
_ALL_KEYS = set(_HYPER_KEYS) | set(_TRAIN_KEYS) | set(_MDA_KEYS)


def parse_config_file(path) -> dict:
    values = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in _ALL_KEYS:
                raise FormatError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = value
    return values


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


class _Settings:
    """Flag-over-config-over-default resolution."""

    def __init__(self, args):
        self._args = args
        self._config = parse_config_file(args.config) if args.config else {}

    def pick(self, name, cast, default):
        flag = getattr(self._args, name, None)
        if flag is not None:
            return flag
        if name in self._config:
            text = self._config[name]
            return _parse_bool(text) if cast is bool else cast(text)
        return default

    def provided(self, name) -> bool:
        return getattr(self._args, name, None) is not None or name in self._config

    def task(self) -> Task:
        kind = self.pick("task", str, REGRESSION)
        if kind == UNSUPERVISED:
            return Task(UNSUPERVISED, 0)
        if kind == CLASSIFICATION:
            return Task(CLASSIFICATION, self.pick("num_classes", int, 2))
        if kind == REGRESSION:
            return Task(REGRESSION, self.pick("output_dim", int, 1))
        raise ValueError(f"unknown task {kind!r}")

    def hyper(self) -> Hyperparams:
        return Hyperparams(
            num_topics=self.pick("num_topics", int, 10),
            dirichlet_alpha=self.pick("dirichlet_alpha", float, 1.001),
            dirichlet_beta=self.pick("dirichlet_beta", float, 1.0),
            gamma=self.pick("gamma", float, 1.0),
            unroll_depth=self.pick("unroll_depth", int, 10),
            task=self.task(),
        )

    def mda(self) -> MdaOptions:
        return MdaOptions(
            unroll_depth=self.pick("unroll_depth", int, 10),
            initial_step=self.pick("initial_step", float, 1.0),
            shrink=self.pick("shrink", float, 0.5),
            line_search=self.pick("line_search", bool, True),
            max_backtracks=self.pick("max_backtracks", int, 30),
            divergence_kind=self.pick("divergence_kind", str, BREGMAN_KL),
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            minibatch_size=self.pick("minibatch_size", int, 100),
            epochs=self.pick("epochs", int, 10),
            mu_u=self.pick("mu_u", float, 0.01),
            mu0=self.pick("mu0", float, 0.01),
            eps=self.pick("eps", float, 1e-6),
            mda=self.mda(),
            seed=self.pick("seed", int, 0),
            running_average_start_epoch=self.pick(
                "running_average_start_epoch", int, None
            ),
            deterministic=self.pick("deterministic", bool, False),
        )


# ---------------------------------------------------------------------------
# Corpus loading helpers


def _read_corpus(args, vocab_size=None):
    """Returns (bows, raw float labels)."""
    if args.format == "ids":
        return corpus_io.read_vectorized_corpus(args.corpus, vocab_size)
    if args.vocab:
        vocab = corpus_io.read_vocabulary(args.vocab)
    elif getattr(args, "vocab_size", None):
        vocab = corpus_io.build_vocabulary(
            corpus_io.iter_raw_token_streams(args.corpus), args.vocab_size
        )
        if getattr(args, "vocab_out", None):
            corpus_io.write_vocabulary(vocab, args.vocab_out)
    else:
        raise ValueError("--format raw requires --vocab (or --vocab-size on train)")
    if vocab_size is not None and len(vocab) != vocab_size:
        raise ValueError(
            f"vocabulary size {len(vocab)} disagrees with the model ({vocab_size})"
        )
    bows, labels, skipped = corpus_io.read_raw_corpus(args.corpus, vocab)
    if skipped:
        print(f"skipped {skipped} empty documents", file=sys.stderr)
    return bows, labels


def _coerce_class_labels(labels) -> list:
    out = []
    for label in labels:
        rounded = int(round(label))
        if abs(label - rounded) > 1e-9 or rounded < 0:
            raise FormatError(f"bad class label {label!r}")
        out.append(rounded)
    return out


def _labeled_docs(bows, labels, task: Task):
    if task.kind == CLASSIFICATION:
        labels = _coerce_class_labels(labels)
    else:
        labels = [np.array([lab]) for lab in labels]
    return [corpus_io.LabeledDoc(b, lab) for b, lab in zip(bows, labels)]


def _fit(bows, labels, config, hyper, threads, progress=None):
    """Train one model; regression labels are centered and the mean folded
    back into U afterward."""
    if hyper.task.kind == UNSUPERVISED:
        phi = train_unsupervised(bows, config, hyper, threads=threads, progress=progress)
        return Model(hyper, phi, None)
    labeled = _labeled_docs(bows, labels, hyper.task)
    if hyper.task.kind == REGRESSION:
        labeled, mean = corpus_io.center_regression_labels(labeled)
        model = train_supervised(labeled, config, hyper, threads=threads, progress=progress)
        return with_output_offset(model, mean)
    return train_supervised(labeled, config, hyper, threads=threads, progress=progress)


# ---------------------------------------------------------------------------
# Subcommands


def run_train(args) -> int:
    settings = _Settings(args)
    hyper = settings.hyper()
    config = settings.train_config()
    bows, labels = _read_corpus(args)

    def progress(epoch, loss):
        sys.stdout.write(f"{epoch}\t{_fmt(loss)}\n")

    model = _fit(bows, labels, config, hyper, args.threads, progress)
    save_model(model, args.model_out)
    return 0


def _map_thetas(bows, model: Model, opts, threads: int):
    alpha = model.hyper.dirichlet_alpha
    mapper = _DocMapper(threads)
    try:
        return mapper.map(
            lambda b: infer_theta(b, model.phi, alpha, opts).theta_final, bows
        )
    finally:
        mapper.close()


def run_infer(args) -> int:
    model = load_model(args.model)
    bows, _ = _read_corpus(args, vocab_size=model.vocab_size)
    settings = _Settings(args)
    # the model file records its unroll depth; flags and config still override
    if not settings.provided("unroll_depth"):
        args.unroll_depth = model.hyper.unroll_depth
    opts = settings.mda()
    thetas = _map_thetas(bows, model, opts, args.threads)
    for index, theta in enumerate(thetas):
        fields = [str(index)]
        if model.u is not None:
            pred = predict(theta, model.u, model.hyper.gamma, model.hyper.task)
            fields.extend(_fmt(v) for v in pred.values)
        fields.extend(_fmt(v) for v in theta)
        sys.stdout.write("\t".join(fields) + "\n")
    return 0


def _metric_for_model(model: Model, bows, labels, metric: str, opts, mass, threads=1):
    hyper = model.hyper
    thetas = np.vstack(_map_thetas(bows, model, opts, threads))
    if metric == "sparsity":
        return topic_sparsity(thetas, mass), len(bows)
    if model.u is None:
        raise ValueError("metric needs a supervised model")
    preds = thetas @ model.u.u.T
    if metric == "pr2":
        if hyper.task.kind != REGRESSION or hyper.task.num_outputs != 1:
            raise ValueError("pr2 needs a scalar regression task")
        return predictive_r2(np.asarray(labels), preds[:, 0]), len(bows)
    if metric == "auc":
        if hyper.task.kind != CLASSIFICATION or hyper.task.num_outputs != 2:
            raise ValueError("auc needs a binary classification task")
        logits = hyper.gamma * preds
        scores = logits[:, 1] - logits[:, 0]
        return auc(scores, _coerce_class_labels(labels)), len(bows)
    raise ValueError(f"unknown metric {metric!r}")


def run_eval(args) -> int:
    settings = _Settings(args)
    if args.folds is None:
        if not args.model:
            raise ValueError("eval needs --model (or --folds for cross-validation)")
        model = load_model(args.model)
        if not settings.provided("unroll_depth"):
            args.unroll_depth = model.hyper.unroll_depth
        opts = settings.mda()
        bows, labels = _read_corpus(args, vocab_size=model.vocab_size)
        value, n = _metric_for_model(
            model, bows, labels, args.metric, opts, args.mass, args.threads
        )
        sys.stdout.write(f"{args.metric}\t{_fmt(value)}\t{n}\n")
        return 0
    opts = settings.mda()

    hyper = settings.hyper()
    config = settings.train_config()
    bows, labels = _read_corpus(args)
    folds = corpus_io.kfold_split(len(bows), args.folds, config.seed)
    values, total = [], 0
    for i, heldout in enumerate(folds):
        mask = np.ones(len(bows), dtype=bool)
        mask[heldout] = False
        train_idx = np.flatnonzero(mask)
        fold_config = TrainConfig(
            minibatch_size=config.minibatch_size,
            epochs=config.epochs,
            mu_u=config.mu_u,
            mu0=config.mu0,
            eps=config.eps,
            mda=config.mda,
            seed=config.seed + i,
            running_average_start_epoch=config.running_average_start_epoch,
            deterministic=config.deterministic,
        )
        model = _fit(
            [bows[j] for j in train_idx],
            [labels[j] for j in train_idx],
            fold_config,
            hyper,
            args.threads,
        )
        value, n = _metric_for_model(
            model,
            [bows[j] for j in heldout],
            [labels[j] for j in heldout],
            args.metric,
            opts,
            args.mass,
            args.threads,
        )
        sys.stdout.write(f"{args.metric}_fold{i}\t{_fmt(value)}\t{n}\n")
        values.append(value)
        total += n
    sys.stdout.write(f"{args.metric}\t{_fmt(float(np.mean(values)))}\t{total}\n")
    return 0


def run_gen(args) -> int:
    settings = _Settings(args)
    hyper = settings.hyper()
    spec = SynthSpec(
        num_docs=args.num_docs,
        vocab_size=args.vocab_size,
        words_per_doc=args.words_per_doc,
        hyper=hyper,
        seed=settings.pick("seed", int, 0),
    )
    synth = sample_corpus(spec)
    labels = synth.labels if synth.labels is not None else [0] * len(synth.docs)
    corpus_io.write_vectorized_corpus(args.out_corpus, synth.docs, labels)
    save_model(synth.ground_truth_model(hyper), args.out_model)
    return 0


def run_gradcheck(args) -> int:
    report = gradient_check_suite(
        seed=args.seed if args.seed is not None else 0,
        h=args.fd_step,
        sign_flip=args.inject_sign_flip,
    )
    sys.stdout.write(report.summary() + "\n")
    if report.passed:
        sys.stdout.write("gradcheck\tPASS\n")
        return 0
    sys.stdout.write("gradcheck\tFAIL\n")
    return 1


# ---------------------------------------------------------------------------
# Parser


def _add_shared(sub, corpus=False):
    sub.add_argument("--config", help="key = value settings file")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--threads", type=int, default=1)
    sub.add_argument(
        "--deterministic", action="store_const", const=True, default=None
    )
    if corpus:
        sub.add_argument("--corpus", required=True)
        sub.add_argument("--format", choices=("ids", "raw"), default="ids")
        sub.add_argument("--vocab", help="vocabulary file (raw format)")


def _add_hyper_flags(sub):
    sub.add_argument("--num-topics", dest="num_topics", type=int, default=None)
    sub.add_argument("--dirichlet-alpha", dest="dirichlet_alpha", type=float, default=None)
    sub.add_argument("--dirichlet-beta", dest="dirichlet_beta", type=float, default=None)
    sub.add_argument("--gamma", type=float, default=None)
    sub.add_argument("--unroll-depth", dest="unroll_depth", type=int, default=None)
    sub.add_argument(
        "--task", choices=(REGRESSION, CLASSIFICATION, UNSUPERVISED), default=None
    )
    sub.add_argument("--output-dim", dest="output_dim", type=int, default=None)
    sub.add_argument("--num-classes", dest="num_classes", type=int, default=None)


def _add_mda_flags(sub):
    sub.add_argument("--initial-step", dest="initial_step", type=float, default=None)
    sub.add_argument("--shrink", type=float, default=None)
    sub.add_argument(
        "--line-search",
        dest="line_search",
        action=argparse.BooleanOptionalAction,
        default=None,
    )
    sub.add_argument("--max-backtracks", dest="max_backtracks", type=int, default=None)
    sub.add_argument(
        "--divergence-kind",
        dest="divergence_kind",
        choices=(BREGMAN_KL, SQUARED_ONE_NORM),
        default=None,
    )


def _add_train_flags(sub):
    sub.add_argument("--minibatch-size", dest="minibatch_size", type=int, default=None)
    sub.add_argument("--epochs", type=int, default=None)
    sub.add_argument("--mu-u", dest="mu_u", type=float, default=None)
    sub.add_argument("--mu0", type=float, default=None)
    sub.add_argument("--eps", type=float, default=None)
    sub.add_argument(
        "--running-average-start-epoch",
        dest="running_average_start_epoch",
        type=int,
        default=None,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bpslda",
        description="Topic models trained end-to-end through unrolled mirror-descent inference",
    )
    subs = parser.add_subparsers(dest="command")

    train = subs.add_parser("train", help="train a model on a corpus")
    _add_shared(train, corpus=True)
    _add_hyper_flags(train)
    _add_mda_flags(train)
    _add_train_flags(train)
    train.add_argument("--model-out", dest="model_out", required=True)
    train.add_argument(
        "--vocab-size",
        dest="vocab_size",
        type=int,
        default=None,
        help="build a vocabulary of this size from a raw corpus",
    )
    train.add_argument("--vocab-out", dest="vocab_out", default=None)
    train.set_defaults(func=run_train)

    infer = subs.add_parser("infer", help="per-document predictions and topic mixtures")
    _add_shared(infer, corpus=True)
    _add_mda_flags(infer)
    infer.add_argument("--unroll-depth", dest="unroll_depth", type=int, default=None)
    infer.add_argument("--model", required=True)
    infer.set_defaults(func=run_infer)

    evals = subs.add_parser("eval", help="metrics, optionally cross-validated")
    _add_shared(evals, corpus=True)
    _add_hyper_flags(evals)
    _add_mda_flags(evals)
    _add_train_flags(evals)
    evals.add_argument("--model", default=None)
    evals.add_argument("--metric", required=True, choices=("pr2", "auc", "sparsity"))
    evals.add_argument("--folds", type=int, default=None)
    evals.add_argument("--mass", type=float, default=0.9)
    evals.set_defaults(func=run_eval)

    gen = subs.add_parser("gen", help="sample a synthetic corpus + ground-truth model")
    _add_shared(gen)
    _add_hyper_flags(gen)
    gen.add_argument("--num-docs", dest="num_docs", type=int, required=True)
    gen.add_argument("--vocab-size", dest="vocab_size", type=int, required=True)
    gen.add_argument("--words-per-doc", dest="words_per_doc", type=int, required=True)
    gen.add_argument("--out-corpus", dest="out_corpus", required=True)
    gen.add_argument("--out-model", dest="out_model", required=True)
    gen.set_defaults(func=run_gen)

    gradcheck = subs.add_parser("gradcheck", help="finite-difference gradient suite")
    _add_shared(gradcheck)
    gradcheck.add_argument("--fd-step", dest="fd_step", type=float, default=1e-6)
    gradcheck.add_argument(
        "--inject-sign-flip",
        dest="inject_sign_flip",
        action="store_true",
        help=argparse.SUPPRESS,  # mutation hook for tests
    )
    gradcheck.set_defaults(func=run_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except NonFiniteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (BpsldaError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
