"""Mini-batch training loops.

U is updated by plain SGD; each column of Phi by stochastic mirror descent
with a per-column adaptive learning rate driven by the accumulated squared
gradient norms; both parameter sets are running-averaged from a
configurable epoch onward and the averaged model is what training returns.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .corpus import LabeledDoc, SparseBow
from .errors import NonFiniteError
from .gradients import (
    GradientBundle,
    prior_nll,
    supervised_doc_grads,
    unsupervised_doc_grads,
)
from .inference import MdaOptions
from .model import (
    CLASSIFICATION,
    Hyperparams,
    Model,
    OutputParams,
    REGRESSION,
    TopicMatrix,
)


@dataclass(frozen=True)
class TrainConfig:
    minibatch_size: int = 100
    epochs: int = 10
    mu_u: float = 0.01
    mu0: float = 0.01
    eps: float = 1e-6
    mda: MdaOptions = field(default_factory=MdaOptions)
    seed: int = 0
    running_average_start_epoch: int | None = None  # None -> epochs // 2
    deterministic: bool = False

    def __post_init__(self):
        if self.minibatch_size < 1:
            raise ValueError("minibatch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        for name in ("mu_u", "mu0", "eps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if (
            self.running_average_start_epoch is not None
            and self.running_average_start_epoch < 0
        ):
            raise ValueError("running_average_start_epoch must be >= 0")

    @property
    def averaging_start(self) -> int:
        if self.running_average_start_epoch is None:
            return self.epochs // 2
        return self.running_average_start_epoch


@dataclass
class AdaptState:
    """Per-column accumulated squared gradient norms and the update counter."""

    sq_norms: np.ndarray  # (K,)
    steps: int = 0

    @classmethod
    def fresh(cls, num_topics: int) -> "AdaptState":
        return cls(np.zeros(num_topics))

    def accumulate(self, d_phi: np.ndarray) -> None:
        self.sq_norms += np.einsum("vk,vk->k", d_phi, d_phi)
        self.steps += 1


def adaptive_lr(state: AdaptState, column: int, mu0: float, eps: float, vocab_size: int) -> float:
    """mu0 / (sqrt(mean accumulated squared gradient per entry) + eps)."""
    if state.steps < 1:
        raise ValueError("accumulate the current gradient before querying the rate")
    rms = np.sqrt(state.sq_norms[column] / (state.steps * vocab_size))
    return mu0 / (rms + eps)


def smd_update_column(phi_col, d_phi_col, mu: float) -> np.ndarray:
    """Multiplicative column update phi * exp(-mu * grad), normalized.

    Exponents are max-shifted; a non-finite exponent raises NonFiniteError.
    Underflow to exact zero is NOT masked here — the trainer treats it as
    divergence.
    """
    phi_col = np.asarray(phi_col, dtype=np.float64)
    expo = -mu * np.asarray(d_phi_col, dtype=np.float64)
    if not np.all(np.isfinite(expo)):
        raise NonFiniteError("mirror-descent update exponent is not finite")
    prod = phi_col * np.exp(expo - expo.max())
    return prod / prod.sum()


def running_average(avg_prev, current, step: int):
    """avg_t = ((t-1)/t) avg_{t-1} + (1/t) current, entrywise."""
    if step < 1:
        raise ValueError("running average step count starts at 1")
    return ((step - 1) / step) * np.asarray(avg_prev) + (1.0 / step) * np.asarray(current)


def _init_phi(rng: np.random.Generator, vocab_size: int, num_topics: int) -> np.ndarray:
    """Columns drawn from a symmetric Dirichlet(1)."""
    draws = rng.gamma(1.0, size=(vocab_size, num_topics))
    # a literal 0.0 draw has measure zero but would poison the logs
    draws = np.maximum(draws, 1e-30)
    return np.asfortranarray(draws / draws.sum(axis=0))


def _batches(order: np.ndarray, size: int):
    for start in range(0, order.size, size):
        yield order[start : start + size]


class _DocMapper:
    """Applies a per-document function, optionally across a thread pool.

    Results are always reduced in submission order, so the gradient sum is
    deterministic for any worker count.
    """

    def __init__(self, threads: int):
        self._pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    def map(self, fn, items):
        if self._pool is None:
            return [fn(item) for item in items]
        return list(self._pool.map(fn, items))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()


def _check_finite_positive(phi: np.ndarray, batch_index: int) -> None:
    if not np.all(np.isfinite(phi)) or np.any(phi <= 0.0):
        raise NonFiniteError(
            f"topic matrix left the positive simplex at mini-batch {batch_index}",
            minibatch=batch_index,
        )


def _validate_labels(corpus, hyper: Hyperparams):
    task = hyper.task
    labels = []
    if task.kind == CLASSIFICATION:
        for doc in corpus:
            label = int(doc.label)
            if not 0 <= label < task.num_outputs:
                raise ValueError(f"class id {label} out of range")
            labels.append(label)
    elif task.kind == REGRESSION:
        for doc in corpus:
            vec = np.asarray(doc.label, dtype=np.float64).reshape(-1)
            if vec.shape[0] != task.num_outputs:
                raise ValueError("regression label dimension disagrees with the task")
            labels.append(vec)
    else:
        raise ValueError("supervised training needs a supervised task")
    return labels


def train_supervised(
    corpus: list[LabeledDoc],
    config: TrainConfig,
    hyper: Hyperparams,
    threads: int = 1,
    progress=None,
) -> Model:
    """Algorithm: seeded epoch shuffles, per-batch SGD on U and SMD on Phi,
    adaptive per-column rates, running averages. Returns the averaged model.

    ``progress``, when given, is called as progress(epoch, mean_loss) after
    every epoch with the mean per-document loss observed during it.
    """
    if not corpus:
        raise ValueError("empty corpus")
    labels = _validate_labels(corpus, hyper)
    bows = [doc.bow for doc in corpus]
    vocab_size = bows[0].vocab_size
    if any(b.vocab_size != vocab_size for b in bows):
        raise ValueError("documents disagree on vocabulary size")

    num_docs = len(corpus)
    k = hyper.num_topics
    c = hyper.task.num_outputs
    beta = hyper.dirichlet_beta
    if config.deterministic:
        threads = 1

    rng = np.random.default_rng(config.seed)
    phi = _init_phi(rng, vocab_size, k)
    u = np.zeros((c, k))
    adapt = AdaptState.fresh(k)
    phi_avg = np.zeros_like(phi)
    u_avg = np.zeros_like(u)
    averaging_steps = 0
    batch_index = 0
    d_phi = np.empty_like(phi)
    mapper = _DocMapper(threads)
    try:
        for epoch in range(config.epochs):
            order = rng.permutation(num_docs)
            epoch_loss = 0.0
            for batch in _batches(order, config.minibatch_size):
                batch_index += 1
                prior_share = prior_nll(phi, beta, num_docs)
                try:
                    results = mapper.map(
                        lambda i: supervised_doc_grads(
                            bows[i], labels[i], phi, u, hyper, config.mda
                        ),
                        batch,
                    )
                except NonFiniteError as exc:
                    raise NonFiniteError(
                        f"{exc} (mini-batch {batch_index})", minibatch=batch_index
                    ) from None

                d_u = np.zeros_like(u)
                d_phi[:] = 0.0
                exhausted = 0
                for i, (grad_u_d, block, loss_d, n_exhausted) in zip(batch, results):
                    d_u += grad_u_d
                    d_phi[bows[i].term_ids] += block
                    epoch_loss += loss_d + prior_share
                    exhausted += n_exhausted
                d_u /= batch.size
                d_phi /= batch.size
                if beta != 1.0:
                    d_phi -= (beta - 1.0) / (num_docs * phi)
                bundle = GradientBundle(
                    d_phi=d_phi,
                    d_u=d_u,
                    diagnostics={"backtrack_exhausted": exhausted},
                )
                if not (
                    np.all(np.isfinite(bundle.d_u)) and np.all(np.isfinite(bundle.d_phi))
                ):
                    raise NonFiniteError(
                        f"non-finite gradient at mini-batch {batch_index}",
                        minibatch=batch_index,
                    )

                u = u - config.mu_u * bundle.d_u
                adapt.accumulate(bundle.d_phi)
                for j in range(k):
                    mu_j = adaptive_lr(adapt, j, config.mu0, config.eps, vocab_size)
                    phi[:, j] = smd_update_column(phi[:, j], bundle.d_phi[:, j], mu_j)
                _check_finite_positive(phi, batch_index)

                if epoch >= config.averaging_start:
                    averaging_steps += 1
                    u_avg = running_average(u_avg, u, averaging_steps)
                    phi_avg = running_average(phi_avg, phi, averaging_steps)
                    phi_avg /= phi_avg.sum(axis=0)
            if progress is not None:
                progress(epoch, epoch_loss / num_docs)
    finally:
        mapper.close()

    if averaging_steps > 0:
        phi_out, u_out = phi_avg, u_avg
    else:
        phi_out, u_out = phi, u
    return Model(hyper, TopicMatrix(phi_out), OutputParams(u_out))


def train_unsupervised(
    corpus: list[SparseBow],
    config: TrainConfig,
    hyper: Hyperparams,
    threads: int = 1,
    progress=None,
) -> TopicMatrix:
    """Same loop as supervised training with the likelihood gradient and no U."""
    if not corpus:
        raise ValueError("empty corpus")
    vocab_size = corpus[0].vocab_size
    if any(b.vocab_size != vocab_size for b in corpus):
        raise ValueError("documents disagree on vocabulary size")

    num_docs = len(corpus)
    k = hyper.num_topics
    beta = hyper.dirichlet_beta
    if config.deterministic:
        threads = 1

    rng = np.random.default_rng(config.seed)
    phi = _init_phi(rng, vocab_size, k)
    adapt = AdaptState.fresh(k)
    phi_avg = np.zeros_like(phi)
    averaging_steps = 0
    batch_index = 0
    d_phi = np.empty_like(phi)
    mapper = _DocMapper(threads)
    try:
        for epoch in range(config.epochs):
            order = rng.permutation(num_docs)
            epoch_loss = 0.0
            for batch in _batches(order, config.minibatch_size):
                batch_index += 1
                prior_share = prior_nll(phi, beta, num_docs)
                try:
                    results = mapper.map(
                        lambda i: unsupervised_doc_grads(
                            corpus[i], phi, hyper, config.mda
                        ),
                        batch,
                    )
                except NonFiniteError as exc:
                    raise NonFiniteError(
                        f"{exc} (mini-batch {batch_index})", minibatch=batch_index
                    ) from None

                d_phi[:] = 0.0
                exhausted = 0
                for i, (block, loss_d, n_exhausted) in zip(batch, results):
                    d_phi[corpus[i].term_ids] += block
                    epoch_loss += loss_d + prior_share
                    exhausted += n_exhausted
                d_phi /= batch.size
                if beta != 1.0:
                    d_phi -= (beta - 1.0) / (num_docs * phi)
                bundle = GradientBundle(
                    d_phi=d_phi, diagnostics={"backtrack_exhausted": exhausted}
                )
                if not np.all(np.isfinite(bundle.d_phi)):
                    raise NonFiniteError(
                        f"non-finite gradient at mini-batch {batch_index}",
                        minibatch=batch_index,
                    )

                adapt.accumulate(bundle.d_phi)
                for j in range(k):
                    mu_j = adaptive_lr(adapt, j, config.mu0, config.eps, vocab_size)
                    phi[:, j] = smd_update_column(phi[:, j], bundle.d_phi[:, j], mu_j)
                _check_finite_positive(phi, batch_index)

                if epoch >= config.averaging_start:
                    averaging_steps += 1
                    phi_avg = running_average(phi_avg, phi, averaging_steps)
                    phi_avg /= phi_avg.sum(axis=0)
            if progress is not None:
                progress(epoch, epoch_loss / num_docs)
    finally:
        mapper.close()

    phi_out = phi_avg if averaging_steps > 0 else phi
    return TopicMatrix(phi_out)
