"""Exact per-document gradients of the training loss.

The loss at one document is

    Q_d = -(1/D) ln p(Phi | beta) - ln p(y_d | theta_L, U, gamma)

with theta_L produced by the unrolled mirror-descent forward pass. The
gradient w.r.t. Phi backpropagates an error signal xi through every
unroll layer (step sizes treated as constants); the xi reparameterization
replaces the raw (p, delta) recursion, which is numerically unstable
because p can grow huge while delta shrinks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .corpus import SparseBow
from .errors import TrajectoryMismatchError
from .inference import (
    MdaOptions,
    Prediction,
    ThetaTrajectory,
    _unroll_raw,
    gather_support,
    softmax,
)
from .model import CLASSIFICATION, Model, OutputParams, REGRESSION, Task, TopicMatrix


@dataclass
class GradientBundle:
    """Mini-batch gradients with the prior term folded in, plus diagnostics."""

    d_phi: np.ndarray  # (V, K)
    d_u: np.ndarray | None = None  # (C, K)
    diagnostics: dict = field(default_factory=dict)


def one_hot(label: int, num_classes: int) -> np.ndarray:
    if not 0 <= label < num_classes:
        raise ValueError(f"class id {label} out of range [0, {num_classes})")
    vec = np.zeros(num_classes)
    vec[label] = 1.0
    return vec


def _scaled_residual(y, y_hat: Prediction, gamma: float, task: Task) -> np.ndarray:
    """c * (y - y_hat) with c = gamma (classification) or 1/gamma (regression)."""
    if task.kind == CLASSIFICATION:
        resid = one_hot(int(y), task.num_outputs) - y_hat.values
        return gamma * resid
    resid = np.asarray(y, dtype=np.float64).reshape(-1) - y_hat.values
    return resid / gamma


def grad_u(theta_final, y, y_hat: Prediction, gamma: float, task: Task) -> np.ndarray:
    """Gradient of the label loss w.r.t. U: -c (y - y_hat) theta_L^T."""
    theta_final = np.asarray(theta_final, dtype=np.float64)
    return -np.outer(_scaled_residual(y, y_hat, gamma, task), theta_final)


def error_signal_top(theta_final, y, y_hat, u: OutputParams, gamma, task) -> np.ndarray:
    """Initial backward signal xi_L = -(I - 1 theta^T) U^T c (y - y_hat)."""
    w = u.u.T @ _scaled_residual(y, y_hat, gamma, task)
    theta_final = np.asarray(theta_final, dtype=np.float64)
    return float(theta_final @ w) - w


def _backward_block(traj: ThetaTrajectory, x: SparseBow, phi_entries, alpha, xi_last):
    """Support-restricted gradient block; returns (block, xis)."""
    phi_x = gather_support(phi_entries, x.term_ids)
    denoms = traj.cached_denominators
    if denoms is None:
        if traj.depth:
            denoms = np.ascontiguousarray((phi_x @ traj.iterates[:-1].T).T)
        else:
            denoms = np.empty((0, x.n_tokens))
    denoms = np.asarray(denoms, dtype=np.float64)
    if denoms.shape != (traj.depth, x.n_tokens):
        raise TrajectoryMismatchError("cached denominators disagree with the document")
    return kernels.backward_unroll(
        phi_x,
        x.counts.astype(np.float64),
        traj.iterates,
        traj.step_sizes,
        denoms,
        float(alpha),
        np.asarray(xi_last, dtype=np.float64),
    )


def backprop_phi(
    traj: ThetaTrajectory,
    x: SparseBow,
    y,
    y_hat: Prediction,
    u: OutputParams,
    phi: TopicMatrix,
    alpha: float,
    gamma: float,
    task: Task,
) -> np.ndarray:
    """Gradient of the label loss w.r.t. Phi through all unroll layers.

    Step sizes come from the trajectory and are treated as constants. Rows
    outside the document support are exactly zero.
    """
    if traj.iterates.shape[1] != phi.num_topics:
        raise TrajectoryMismatchError("trajectory K disagrees with the topic matrix")
    if x.vocab_size != phi.vocab_size:
        raise TrajectoryMismatchError("document vocabulary disagrees with the topic matrix")
    xi_last = error_signal_top(traj.theta_final, y, y_hat, u, gamma, task)
    block, _ = _backward_block(traj, x, phi.entries, alpha, xi_last)
    out = np.zeros((phi.vocab_size, phi.num_topics))
    out[x.term_ids] = block
    return out


def prior_grad_phi(phi: TopicMatrix, beta: float, num_docs: int) -> np.ndarray:
    """Per-document share of the negative log Dirichlet prior gradient."""
    if num_docs < 1:
        raise ValueError("num_docs must be >= 1")
    return -(beta - 1.0) / (num_docs * phi.entries)


def grad_phi_unsup(theta_final, x: SparseBow, phi_tilde: TopicMatrix) -> np.ndarray:
    """Negative gradient of the word log-likelihood at fixed theta_L.

    Entry (v, j) of the log-likelihood gradient is x_v theta_j / (Phi theta)_v,
    zero off the document support; this returns its negation.
    """
    theta_final = np.asarray(theta_final, dtype=np.float64)
    if theta_final.shape != (phi_tilde.num_topics,):
        raise ValueError("theta dimension disagrees with the topic matrix")
    if x.vocab_size != phi_tilde.vocab_size:
        raise ValueError("document vocabulary disagrees with the topic matrix")
    phi_x = gather_support(phi_tilde.entries, x.term_ids)
    denom = phi_x @ theta_final
    out = np.zeros((phi_tilde.vocab_size, phi_tilde.num_topics))
    out[x.term_ids] = -np.outer(x.counts / denom, theta_final)
    return out


def label_nll(y, theta_final, u_mat: np.ndarray, gamma: float, task: Task) -> float:
    """-ln p(y | theta_L, U, gamma) with constants dropped consistently.

    Classification uses the log1p form of the cross entropy, which is free
    of catastrophic cancellation when the true class dominates.
    """
    mean = u_mat @ np.asarray(theta_final, dtype=np.float64)
    if task.kind == CLASSIFICATION:
        logits = gamma * mean
        rel = logits - logits[int(y)]
        rel = np.delete(rel, int(y))
        top = max(rel.max(), 0.0) if rel.size else 0.0
        if top == 0.0:
            return float(np.log1p(np.exp(rel).sum()))
        return float(top + np.log(np.exp(-top) + np.exp(rel - top).sum()))
    resid = np.asarray(y, dtype=np.float64).reshape(-1) - mean
    return float(resid @ resid) / (2.0 * gamma)


def unsup_nll(theta_final, x: SparseBow, phi_entries: np.ndarray) -> float:
    """-ln p(x | theta_L, Phi) over the document support."""
    phi_x = gather_support(phi_entries, x.term_ids)
    denom = phi_x @ np.asarray(theta_final, dtype=np.float64)
    return -float(x.counts @ np.log(denom))


def prior_nll(phi_entries: np.ndarray, beta: float, num_docs: int) -> float:
    """Per-document share of -ln p(Phi | beta), constants dropped."""
    if beta == 1.0:
        return 0.0
    return -(beta - 1.0) * float(np.log(phi_entries).sum()) / num_docs


def _loss_raw(phi_entries, u_mat, term_ids, counts, y, alpha, beta, gamma, task, opts, num_docs):
    """Supervised loss on raw arrays; FD checks perturb entries through this."""
    _, thetas, _, _, _ = _unroll_raw(phi_entries, term_ids, counts, alpha, opts)
    return label_nll(y, thetas[-1], u_mat, gamma, task) + prior_nll(
        phi_entries, beta, num_docs
    )


def loss_supervised(x: SparseBow, y, model: Model, opts: MdaOptions, num_docs: int = 1) -> float:
    """Q_d = -(1/D) ln p(Phi|beta) - ln p(y | theta_L, U, gamma)."""
    if model.u is None:
        raise ValueError("supervised loss needs output parameters")
    hyper = model.hyper
    return _loss_raw(
        model.phi.entries,
        model.u.u,
        x.term_ids,
        x.counts,
        y,
        hyper.dirichlet_alpha,
        hyper.dirichlet_beta,
        hyper.gamma,
        hyper.task,
        opts,
        num_docs,
    )


def supervised_doc_grads(bow: SparseBow, y, phi_entries, u_mat, hyper, opts: MdaOptions):
    """Forward + backward for one document against raw parameter arrays.

    Returns (grad_u_d, block, loss_d, exhausted); ``block`` is the
    support-restricted Phi gradient, indexed by ``bow.term_ids``.
    """
    phi_x, thetas, steps, denoms, exhausted = _unroll_raw(
        phi_entries, bow.term_ids, bow.counts, hyper.dirichlet_alpha, opts
    )
    theta_final = thetas[-1]
    task, gamma = hyper.task, hyper.gamma
    mean = u_mat @ theta_final
    if task.kind == CLASSIFICATION:
        y_hat = Prediction(CLASSIFICATION, softmax(gamma * mean))
    else:
        y_hat = Prediction(REGRESSION, mean)
    scaled = _scaled_residual(y, y_hat, gamma, task)
    grad_u_d = -np.outer(scaled, theta_final)
    w = u_mat.T @ scaled
    xi_last = float(theta_final @ w) - w
    block, _ = kernels.backward_unroll(
        phi_x,
        bow.counts.astype(np.float64),
        thetas,
        steps,
        denoms,
        float(hyper.dirichlet_alpha),
        xi_last,
    )
    loss_d = label_nll(y, theta_final, u_mat, gamma, task)
    return grad_u_d, block, loss_d, exhausted


def unsupervised_doc_grads(bow: SparseBow, phi_entries, hyper, opts: MdaOptions):
    """Forward + likelihood gradient block for one document (no label head)."""
    phi_x, thetas, _, _, exhausted = _unroll_raw(
        phi_entries, bow.term_ids, bow.counts, hyper.dirichlet_alpha, opts
    )
    theta_final = thetas[-1]
    denom = phi_x @ theta_final
    counts = bow.counts.astype(np.float64)
    block = -np.outer(counts / denom, theta_final)
    loss_d = -float(counts @ np.log(denom))
    return block, loss_d, exhausted
