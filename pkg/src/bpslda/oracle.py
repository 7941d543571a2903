"""Independent verification tools.

Nothing here shares code with the paths it checks: finite differences
against closures over raw parameter arrays, an exhaustive simplex-grid
search for small topic counts, and a generative sampler that draws
documents (and per-word topic assignments) explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from . import kernels
from .corpus import SparseBow
from .errors import KTooLargeError, NonFiniteError
from .gradients import (
    backprop_phi,
    grad_phi_unsup,
    grad_u,
    label_nll,
    unsup_nll,
)
from .inference import MdaOptions, gather_support, infer_theta, predict
from .model import (
    CLASSIFICATION,
    Hyperparams,
    Model,
    OutputParams,
    REGRESSION,
    Task,
    TopicMatrix,
)

# Pinned by the verification contract: FD step, acceptance threshold, and
# the magnitude below which a coordinate is treated as numerically zero.
FD_STEP = 1e-6
GRAD_TOL = 1e-6
GRAD_FLOOR = 1e-8


def fd_gradient(f, point, h: float = FD_STEP) -> np.ndarray:
    """Central differences (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate."""
    # C-contiguous private copy so the flat view aliases the array f sees
    base = np.ascontiguousarray(point, dtype=np.float64).copy()
    flat = base.reshape(-1)
    assert flat.base is base
    grad = np.empty(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = f(base)
        flat[i] = orig - h
        f_minus = f(base)
        flat[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NonFiniteError("function not finite in the FD neighborhood")
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad.reshape(base.shape)


def rel_error(a, b) -> np.ndarray:
    """|a-b| / max(|a|, |b|, 1e-8), elementwise."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), GRAD_FLOOR)


def brute_map(x: SparseBow, phi: TopicMatrix, alpha: float, grid_resolution: float):
    """Exhaustive MAP objective minimization over the simplex grid.

    Grid points are blended with the uniform distribution by
    resolution/10 to keep every coordinate (and hence every log) finite;
    the returned point is the shifted argmin.
    """
    k = phi.num_topics
    if k > 3:
        raise KTooLargeError("grid search supports at most 3 topics")
    if not 0.0 < grid_resolution <= 1e-2:
        raise ValueError("grid_resolution must be in (0, 1e-2]")
    if k == 1:
        return np.array([1.0])
    phi_x = gather_support(phi.entries, x.term_ids)
    counts = x.counts.astype(np.float64)
    n = int(round(1.0 / grid_resolution))
    shift = grid_resolution / 10.0
    if k == 2:
        theta, _ = kernels.grid_min_k2(phi_x, counts, float(alpha), n, shift)
    else:
        theta, _ = kernels.grid_min_k3(phi_x, counts, float(alpha), n, shift)
    return theta


@dataclass(frozen=True)
class SynthSpec:
    """Sizes, hyperparameters, and seed of a synthetic corpus."""

    num_docs: int
    vocab_size: int
    words_per_doc: int
    hyper: Hyperparams
    seed: int
    phi_star: np.ndarray | None = None
    u_star: np.ndarray | None = None

    def __post_init__(self):
        if min(self.num_docs, self.vocab_size, self.words_per_doc) < 1:
            raise ValueError("all sizes must be positive")


@dataclass(frozen=True)
class SynthCorpus:
    docs: list
    labels: list | None
    theta_star: np.ndarray  # (D, K)
    phi_star: TopicMatrix
    u_star: OutputParams | None

    def ground_truth_model(self, hyper: Hyperparams) -> Model:
        return Model(hyper, self.phi_star, self.u_star)


def _stream(seed: int, substream: int) -> np.random.Generator:
    # counter-based Philox keyed by (seed, substream): per-document streams
    # are independent of sampling order
    key = ((seed & 0xFFFFFFFFFFFFFFFF) << 64) + substream
    return np.random.Generator(np.random.Philox(key=key))


def _dirichlet(rng: np.random.Generator, concentration: float, size: int) -> np.ndarray:
    draws = rng.gamma(concentration, size=size)
    draws = np.maximum(draws, 1e-300)
    return draws / draws.sum()


def sample_corpus(spec: SynthSpec) -> SynthCorpus:
    """Draw a corpus from the generative process.

    Per document: theta* ~ Dir(alpha); each word picks a topic from theta*
    then a word from that topic's column; the label is Gaussian around
    U theta* (regression) or a draw from Softmax(gamma U theta*)
    (classification). Deterministic given the seed.
    """
    hyper = spec.hyper
    k, v = hyper.num_topics, spec.vocab_size
    task = hyper.task
    model_rng = _stream(spec.seed, 0)

    if spec.phi_star is not None:
        phi = np.array(spec.phi_star, dtype=np.float64)
    else:
        phi = np.column_stack(
            [_dirichlet(model_rng, hyper.dirichlet_beta, v) for _ in range(k)]
        )
    phi_star = TopicMatrix(phi)
    phi = phi_star.entries

    u = None
    if task.supervised:
        if spec.u_star is not None:
            u_mat = np.array(spec.u_star, dtype=np.float64)
        else:
            u_mat = model_rng.standard_normal((task.num_outputs, k))
        u = OutputParams(u_mat)

    docs = []
    labels = [] if task.supervised else None
    thetas = np.empty((spec.num_docs, k))
    for d in range(spec.num_docs):
        rng = _stream(spec.seed, d + 1)
        theta = _dirichlet(rng, hyper.dirichlet_alpha, k)
        thetas[d] = theta
        topic_counts = rng.multinomial(spec.words_per_doc, theta)
        word_counts = np.zeros(v, dtype=np.int64)
        for j in range(k):
            if topic_counts[j] > 0:
                word_counts += rng.multinomial(topic_counts[j], phi[:, j])
        ids = np.flatnonzero(word_counts)
        docs.append(SparseBow(v, ids, word_counts[ids]))
        if task.supervised:
            mean = u.u @ theta
            if task.kind == REGRESSION:
                noise = rng.normal(0.0, 1.0 / np.sqrt(hyper.gamma), size=task.num_outputs)
                labels.append(mean + noise)
            else:
                logits = hyper.gamma * mean
                probs = np.exp(logits - logits.max())
                probs /= probs.sum()
                labels.append(int(rng.choice(task.num_outputs, p=probs)))
    return SynthCorpus(docs, labels, thetas, phi_star, u)


# ---------------------------------------------------------------------------
# Randomized finite-difference suite over the gradient operators


@dataclass
class GradCheckReport:
    num_instances: int
    max_rel_error: float
    worst_op: str
    worst_instance: str
    worst_coord: tuple
    worst_analytic: float
    worst_fd: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= GRAD_TOL

    def summary(self) -> str:
        return (
            f"instances={self.num_instances} max_rel_error={self.max_rel_error:.3e} "
            f"worst: op={self.worst_op} instance=({self.worst_instance}) "
            f"coord={self.worst_coord} analytic={self.worst_analytic:.9e} "
            f"fd={self.worst_fd:.9e}"
        )


def _random_instance(rng: np.random.Generator, k, v, kind):
    phi = np.column_stack([_dirichlet(rng, 1.0, v) for _ in range(k)])
    n_tok = int(rng.integers(2, min(v, 6) + 1))
    ids = np.sort(rng.choice(v, size=n_tok, replace=False))
    counts = rng.integers(1, 5, size=n_tok)
    bow = SparseBow(v, ids, counts)
    gamma = float(rng.uniform(0.5, 2.0))
    if kind == CLASSIFICATION:
        task = Task(CLASSIFICATION, 3)
        u = rng.standard_normal((3, k))
    else:
        task = Task(REGRESSION, 1)
        u = rng.standard_normal((1, k))
    return phi, bow, u, gamma, task


def _draw_label(rng, task):
    if task.kind == CLASSIFICATION:
        return int(rng.integers(task.num_outputs))
    return rng.normal(0.0, 1.0, size=task.num_outputs)


def gradient_check_suite(seed: int = 0, h: float = FD_STEP, sign_flip: bool = False) -> GradCheckReport:
    """FD-verify grad_u, backprop_phi, and grad_phi_unsup on randomized
    instances spanning both convexity regimes and both task heads.

    Inference runs with constant step sizes so perturbed forwards cannot
    change line-search branches. ``sign_flip`` negates the analytic side
    (mutation hook for exercising the failure path).
    """
    grid = list(
        product(
            (2, 3, 5), (5, 10), (1, 3, 5), (0.9, 1.001, 2.0),
            (REGRESSION, CLASSIFICATION),
        )
    )
    report = GradCheckReport(0, -1.0, "", "", (), np.nan, np.nan)
    flip = -1.0 if sign_flip else 1.0
    for index, (k, v, depth, alpha, kind) in enumerate(grid):
        rng = np.random.default_rng([seed, index])
        phi_mat, bow, u_mat, gamma, task = _random_instance(rng, k, v, kind)
        # constant steps scaled by document mass keep the unroll smooth;
        # oversized steps make it chaotic and FD meaningless
        step = 0.3 / bow.total_count
        opts = MdaOptions(unroll_depth=depth, initial_step=step, line_search=False)
        phi = TopicMatrix(phi_mat)
        traj = infer_theta(bow, phi, alpha, opts)
        theta_final = traj.theta_final
        y = _draw_label(rng, task)
        u = OutputParams(u_mat)
        y_hat = predict(theta_final, u, gamma, task)
        label = f"k={k} v={v} depth={depth} alpha={alpha} task={task.kind}"

        def _record(op, analytic, fd):
            err = rel_error(analytic, fd)
            err[np.abs(analytic) <= GRAD_FLOOR] = 0.0
            coord = np.unravel_index(int(np.argmax(err)), err.shape)
            if err[coord] > report.max_rel_error:
                report.max_rel_error = float(err[coord])
                report.worst_op = op
                report.worst_instance = label
                report.worst_coord = tuple(int(c) for c in coord)
                report.worst_analytic = float(np.asarray(analytic)[coord])
                report.worst_fd = float(np.asarray(fd)[coord])

        analytic_u = flip * grad_u(theta_final, y, y_hat, gamma, task)
        fd_u = fd_gradient(
            lambda m: label_nll(y, theta_final, m, gamma, task), u_mat, h
        )
        _record("grad_u", analytic_u, fd_u)

        analytic_phi = flip * backprop_phi(
            traj, bow, y, y_hat, u, phi, alpha, gamma, task
        )

        def loss_of_phi(entries):
            phi_x = gather_support(entries, bow.term_ids)
            thetas, _, _, _, ok = kernels.mda_unroll(
                phi_x,
                bow.counts.astype(np.float64),
                float(alpha),
                depth,
                step,
                opts.shrink,
                False,
                opts.max_backtracks,
                False,
            )
            if not ok:
                return np.nan
            return label_nll(y, thetas[-1], u_mat, gamma, task)

        fd_phi = fd_gradient(loss_of_phi, phi_mat, h)
        _record("backprop_phi", analytic_phi, fd_phi)

        analytic_unsup = flip * grad_phi_unsup(theta_final, bow, phi)
        fd_unsup = fd_gradient(
            lambda entries: unsup_nll(theta_final, bow, entries), phi_mat, h
        )
        _record("grad_phi_unsup", analytic_unsup, fd_unsup)

        report.num_instances += 1
    return report
