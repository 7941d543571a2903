import numpy as np
import pytest

from bpslda.corpus import SparseBow
from bpslda.model import (
    Hyperparams,
    Model,
    OutputParams,
    REGRESSION,
    Task,
    TopicMatrix,
    UNSUPERVISED,
)


def random_phi(rng, vocab_size, num_topics):
    """Dirichlet(1) columns as a raw (V, K) array."""
    draws = rng.gamma(1.0, size=(vocab_size, num_topics))
    return draws / draws.sum(axis=0)


def random_bow(rng, vocab_size, max_terms=None, max_count=5):
    n = int(rng.integers(1, (max_terms or vocab_size) + 1))
    ids = np.sort(rng.choice(vocab_size, size=n, replace=False))
    counts = rng.integers(1, max_count + 1, size=n)
    return SparseBow(vocab_size, ids, counts)


def make_model(rng, vocab_size=6, num_topics=3, kind=REGRESSION, num_outputs=1, **hyper_kw):
    phi = TopicMatrix(random_phi(rng, vocab_size, num_topics))
    if kind == UNSUPERVISED:
        task = Task(UNSUPERVISED, 0)
        u = None
    else:
        task = Task(kind, num_outputs)
        u = OutputParams(rng.standard_normal((num_outputs, num_topics)))
    defaults = dict(dirichlet_alpha=1.5, dirichlet_beta=2.0, gamma=1.0, unroll_depth=4)
    defaults.update(hyper_kw)
    hyper = Hyperparams(num_topics=num_topics, task=task, **defaults)
    return Model(hyper, phi, u)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
