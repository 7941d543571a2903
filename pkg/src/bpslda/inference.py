"""MAP inference of topic proportions by mirror descent with line search.

The forward pass unrolls a fixed number of multiplicative updates

    theta_new  propto  theta * exp(T * [Phi_x^T (x / (Phi_x theta)) + (alpha-1)/theta])

restricted to the document's support, with the step size T ramped up each
layer and backtracked until a sufficient-decrease test passes. The full
iterate sequence and accepted step sizes are retained for the backward
pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .corpus import SparseBow
from .errors import DomainError, NonFiniteError
from .model import CLASSIFICATION, OutputParams, REGRESSION, Task, TopicMatrix

BREGMAN_KL = "bregman_kl"
SQUARED_ONE_NORM = "squared_one_norm"

_SUM_TOL = 1e-12


@dataclass(frozen=True)
class MdaOptions:
    unroll_depth: int = 10
    initial_step: float = 1.0
    shrink: float = 0.5
    line_search: bool = True
    max_backtracks: int = 30
    divergence_kind: str = BREGMAN_KL

    def __post_init__(self):
        if self.unroll_depth < 0:
            raise ValueError("unroll_depth must be >= 0")
        if not self.initial_step > 0:
            raise ValueError("initial_step must be > 0")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink must be in (0, 1)")
        if self.max_backtracks < 1:
            raise ValueError("max_backtracks must be >= 1")
        if self.divergence_kind not in (BREGMAN_KL, SQUARED_ONE_NORM):
            raise ValueError(f"unknown divergence {self.divergence_kind!r}")


@dataclass(frozen=True)
class ThetaTrajectory:
    """Iterates theta_0..theta_L, accepted step sizes, cached denominators."""

    iterates: np.ndarray  # (L+1, K)
    step_sizes: np.ndarray  # (L,)
    cached_denominators: np.ndarray | None = None  # (L, nTok)
    backtrack_exhausted: int = 0

    def __post_init__(self):
        it = np.asarray(self.iterates, dtype=np.float64)
        steps = np.asarray(self.step_sizes, dtype=np.float64)
        if it.ndim != 2 or steps.ndim != 1 or steps.shape[0] != it.shape[0] - 1:
            raise ValueError("need L+1 iterates and L step sizes")
        k = it.shape[1]
        if np.any(it[0] != 1.0 / k):
            raise ValueError("theta_0 must be exactly uniform")
        if np.any(it <= 0.0):
            raise ValueError("iterates must be strictly positive")
        if np.abs(it.sum(axis=1) - 1.0).max() > _SUM_TOL:
            raise ValueError("iterates must sum to 1")
        if np.any(steps <= 0.0):
            raise ValueError("step sizes must be positive")
        object.__setattr__(self, "iterates", it)
        object.__setattr__(self, "step_sizes", steps)

    @property
    def depth(self) -> int:
        return int(self.step_sizes.shape[0])

    @property
    def theta_final(self) -> np.ndarray:
        return self.iterates[-1]


@dataclass(frozen=True)
class Prediction:
    """Regression mean U theta_L, or class posterior Softmax(gamma U theta_L)."""

    kind: str
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if self.kind == CLASSIFICATION and abs(values.sum() - 1.0) > _SUM_TOL:
            raise ValueError("classification posterior must sum to 1")
        object.__setattr__(self, "values", values)


def gather_support(entries: np.ndarray, term_ids: np.ndarray) -> np.ndarray:
    """Support-restricted rows of the topic matrix as a C-contiguous block."""
    return np.ascontiguousarray(entries[term_ids, :], dtype=np.float64)


def map_objective(theta, x: SparseBow, phi: TopicMatrix, alpha: float) -> float:
    """Negative log posterior of theta (up to constants), support-only."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (phi.num_topics,):
        raise ValueError("theta dimension disagrees with the topic matrix")
    if x.vocab_size != phi.vocab_size:
        raise ValueError("document vocabulary disagrees with the topic matrix")
    if np.any(theta <= 0.0):
        raise DomainError("theta must be strictly positive")
    phi_x = gather_support(phi.entries, x.term_ids)
    denom = phi_x @ theta
    if np.any(denom <= 0.0):
        raise DomainError("mixture probability vanished on the document support")
    value = -float(x.counts @ np.log(denom))
    if alpha != 1.0:
        value -= (alpha - 1.0) * float(np.log(theta).sum())
    return value


def mda_step(theta_prev, x: SparseBow, phi: TopicMatrix, alpha: float, step: float):
    """One multiplicative update with max-shifted exponent."""
    theta_prev = np.asarray(theta_prev, dtype=np.float64)
    if np.any(theta_prev <= 0.0):
        raise DomainError("theta_prev must be strictly positive")
    phi_x = gather_support(phi.entries, x.term_ids)
    denom = phi_x @ theta_prev
    ratio = x.counts / denom
    grad_neg = phi_x.T @ ratio
    grad_neg += (alpha - 1.0) / np.maximum(theta_prev, kernels.THETA_FLOOR)
    expo = step * grad_neg
    if not np.all(np.isfinite(expo)):
        raise NonFiniteError("mirror-descent exponent is not finite")
    prod = np.maximum(theta_prev * np.exp(expo - expo.max()), kernels.PRODUCT_FLOOR)
    return prod / prod.sum()


def _unroll_raw(phi_entries, term_ids, counts, alpha, opts: MdaOptions):
    """Kernel call on raw arrays; FD checks use this to bypass validation."""
    phi_x = gather_support(phi_entries, term_ids)
    thetas, steps, denoms, exhausted, ok = kernels.mda_unroll(
        phi_x,
        np.asarray(counts, dtype=np.float64),
        float(alpha),
        int(opts.unroll_depth),
        float(opts.initial_step),
        float(opts.shrink),
        bool(opts.line_search),
        int(opts.max_backtracks),
        opts.divergence_kind == SQUARED_ONE_NORM,
    )
    if not ok:
        raise NonFiniteError("mirror-descent exponent overflowed during inference")
    return phi_x, thetas, steps, denoms, exhausted


def infer_theta(x: SparseBow, phi: TopicMatrix, alpha: float, opts: MdaOptions) -> ThetaTrajectory:
    """Unroll the mirror-descent iterations for one document."""
    if x.vocab_size != phi.vocab_size:
        raise ValueError("document vocabulary disagrees with the topic matrix")
    _, thetas, steps, denoms, exhausted = _unroll_raw(
        phi.entries, x.term_ids, x.counts, alpha, opts
    )
    return ThetaTrajectory(thetas, steps, denoms, exhausted)


def softmax(logits) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    shifted = np.exp(logits - logits.max())
    return shifted / shifted.sum()


def predict(theta_final, u: OutputParams, gamma: float, task: Task) -> Prediction:
    theta_final = np.asarray(theta_final, dtype=np.float64)
    if theta_final.shape != (u.num_topics,):
        raise ValueError("theta dimension disagrees with the output parameters")
    mean = u.u @ theta_final
    if task.kind == REGRESSION:
        return Prediction(REGRESSION, mean)
    if task.kind == CLASSIFICATION:
        return Prediction(CLASSIFICATION, softmax(gamma * mean))
    raise ValueError("prediction undefined for unsupervised models")
