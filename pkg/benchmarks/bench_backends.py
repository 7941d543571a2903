#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the forward unroll and the backward recursion over a batch of
synthetic documents, per backend. Run from the repository root:

    python3 benchmarks/bench_backends.py [--docs N] [--num-topics K] [--vocab-size V]
"""

import argparse
import time

import numpy as np

from bpslda.inference import gather_support
from bpslda.kernels import _numba, _numpy
from bpslda.model import Hyperparams, Task, REGRESSION
from bpslda.oracle import SynthSpec, sample_corpus


def bench(impl, docs, phi, depth, repeats):
    counts = [d.counts.astype(np.float64) for d in docs]
    blocks = [gather_support(phi, d.term_ids) for d in docs]
    xi = np.zeros(phi.shape[1])
    xi[0] = 1.0
    xi -= xi.mean()
    best_fwd = best_bwd = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        trajs = [
            impl.mda_unroll(b, c, 1.001, depth, 1.0, 0.5, True, 30, False)
            for b, c in zip(blocks, counts)
        ]
        best_fwd = min(best_fwd, time.perf_counter() - start)
        start = time.perf_counter()
        for (thetas, steps, denoms, _, _), b, c in zip(trajs, blocks, counts):
            impl.backward_unroll(b, c, thetas, steps, denoms, 1.001, xi)
        best_bwd = min(best_bwd, time.perf_counter() - start)
    return best_fwd, best_bwd


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--docs", type=int, default=500)
    parser.add_argument("--num-topics", type=int, default=20)
    parser.add_argument("--vocab-size", type=int, default=2000)
    parser.add_argument("--words-per-doc", type=int, default=150)
    parser.add_argument("--depth", type=int, default=10)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    hyper = Hyperparams(
        num_topics=args.num_topics,
        dirichlet_alpha=1.001,
        task=Task(REGRESSION, 1),
    )
    spec = SynthSpec(
        num_docs=args.docs,
        vocab_size=args.vocab_size,
        words_per_doc=args.words_per_doc,
        hyper=hyper,
        seed=0,
    )
    docs = sample_corpus(spec).docs
    rng = np.random.default_rng(0)
    phi = rng.dirichlet(np.ones(args.vocab_size), size=args.num_topics).T.copy()

    # trigger JIT compilation outside the timed region
    bench(_numba, docs[:2], phi, args.depth, 1)

    print(f"{args.docs} docs, V={args.vocab_size}, K={args.num_topics}, L={args.depth}")
    print(f"{'backend':<8} {'forward':>12} {'backward':>12}")
    results = {}
    for name, impl in (("numba", _numba), ("numpy", _numpy)):
        fwd, bwd = bench(impl, docs, phi, args.depth, args.repeats)
        results[name] = (fwd, bwd)
        print(f"{name:<8} {fwd * 1e3:>10.1f}ms {bwd * 1e3:>10.1f}ms")
    fwd_ratio = results["numpy"][0] / results["numba"][0]
    bwd_ratio = results["numpy"][1] / results["numba"][1]
    print(f"speedup  {fwd_ratio:>11.1f}x {bwd_ratio:>11.1f}x")


if __name__ == "__main__":
    main()
