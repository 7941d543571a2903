"""Numba backend: same kernel contracts as ``_numpy``, loop-compiled.

Kernels release the GIL so per-document work can spread across a thread
pool, and are cached on disk to amortize compilation.
"""

from __future__ import annotations

import numpy as np
from numba import njit

THETA_FLOOR = 1e-12
PRODUCT_FLOOR = 1e-300
STEP_FLOOR = 1e-300


@njit(cache=True, nogil=True)
def _objective(counts, denom, theta, alpha):
    value = 0.0
    for v in range(counts.shape[0]):
        value -= counts[v] * np.log(denom[v])
    if alpha != 1.0:
        acc = 0.0
        for j in range(theta.shape[0]):
            acc += np.log(theta[j])
        value -= (alpha - 1.0) * acc
    return value


@njit(cache=True, nogil=True)
def _matvec(phi_x, theta, out):
    n_tok, k = phi_x.shape
    for v in range(n_tok):
        acc = 0.0
        for j in range(k):
            acc += phi_x[v, j] * theta[j]
        out[v] = acc


@njit(cache=True, nogil=True)
def mda_unroll(phi_x, counts, alpha, depth, t0, eta, line_search, max_backtracks, sq1norm):
    n_tok, k = phi_x.shape
    thetas = np.empty((depth + 1, k))
    steps = np.empty(depth)
    denoms = np.empty((depth, n_tok))
    exhausted = 0
    for j in range(k):
        thetas[0, j] = 1.0 / k
    denom = np.empty(n_tok)
    grad_neg = np.empty(k)
    expo = np.empty(k)
    theta_new = np.empty(k)
    denom_new = np.empty(n_tok)
    t_accept = t0
    for layer in range(1, depth + 1):
        theta = thetas[layer - 1]
        _matvec(phi_x, theta, denom)
        for v in range(n_tok):
            denoms[layer - 1, v] = denom[v]
        for j in range(k):
            acc = 0.0
            for v in range(n_tok):
                acc += phi_x[v, j] * (counts[v] / denom[v])
            tj = theta[j]
            if tj < THETA_FLOOR:
                tj = THETA_FLOOR
            grad_neg[j] = acc + (alpha - 1.0) / tj
        f_old = _objective(counts, denom, theta, alpha) if line_search else 0.0
        t = t_accept / eta if line_search else t0
        backtracks = 0
        while True:
            finite = True
            emax = -np.inf
            for j in range(k):
                expo[j] = t * grad_neg[j]
                if not np.isfinite(expo[j]):
                    finite = False
                if expo[j] > emax:
                    emax = expo[j]
            if not finite:
                return thetas, steps, denoms, exhausted, False
            total = 0.0
            for j in range(k):
                p = theta[j] * np.exp(expo[j] - emax)
                if p < PRODUCT_FLOOR:
                    p = PRODUCT_FLOOR
                theta_new[j] = p
                total += p
            for j in range(k):
                theta_new[j] /= total
            if not line_search:
                break
            _matvec(phi_x, theta_new, denom_new)
            f_new = _objective(counts, denom_new, theta_new, alpha)
            linear = 0.0
            for j in range(k):
                linear -= grad_neg[j] * (theta_new[j] - theta[j])
            if sq1norm:
                l1 = 0.0
                for j in range(k):
                    l1 += abs(theta_new[j] - theta[j])
                breg = 0.5 * l1 * l1
            else:
                breg = 0.0
                for j in range(k):
                    breg += theta_new[j] * np.log(theta_new[j] / theta[j])
                    breg += theta[j] - theta_new[j]
            if f_new <= f_old + linear + breg / t:
                break
            backtracks += 1
            if backtracks >= max_backtracks:
                exhausted += 1
                break
            t *= eta
            if t < STEP_FLOOR:
                t = STEP_FLOOR
        for j in range(k):
            thetas[layer, j] = theta_new[j]
        steps[layer - 1] = t
        t_accept = t
    return thetas, steps, denoms, exhausted, True


@njit(cache=True, nogil=True)
def backward_unroll(phi_x, counts, thetas, steps, denoms, alpha, xi_last):
    depth = steps.shape[0]
    n_tok, k = phi_x.shape
    block = np.zeros((n_tok, k))
    xis = np.empty((depth + 1, k))
    xi = np.empty(k)
    for j in range(k):
        xis[depth, j] = xi_last[j]
        xi[j] = xi_last[j]
    v_vec = np.empty(k)
    phi_v = np.empty(n_tok)
    inner = np.empty(k)
    for layer in range(depth, 0, -1):
        theta_prev = thetas[layer - 1]
        t = steps[layer - 1]
        for j in range(k):
            v_vec[j] = thetas[layer, j] * xi[j]
        _matvec(phi_x, v_vec, phi_v)
        for v in range(n_tok):
            ratio = counts[v] / denoms[layer - 1, v]
            w2 = ratio / denoms[layer - 1, v]
            scale = phi_v[v] * w2
            for j in range(k):
                block[v, j] += t * (ratio * v_vec[j] - scale * theta_prev[j])
        dot = 0.0
        for j in range(k):
            curv = 0.0
            for v in range(n_tok):
                ratio = counts[v] / denoms[layer - 1, v]
                curv += phi_x[v, j] * (ratio / denoms[layer - 1, v]) * phi_v[v]
            if theta_prev[j] > THETA_FLOOR:
                curv += (alpha - 1.0) / (theta_prev[j] * theta_prev[j]) * v_vec[j]
            inner[j] = v_vec[j] / theta_prev[j] - t * curv
            dot += theta_prev[j] * inner[j]
        for j in range(k):
            xi[j] = inner[j] - dot
            xis[layer - 1, j] = xi[j]
    return block, xis


@njit(cache=True, nogil=True)
def grid_min_k2(phi_x, counts, alpha, n, shift):
    n_tok = phi_x.shape[0]
    best_value = np.inf
    best_a = 0.0
    for i in range(n + 1):
        a = (1.0 - shift) * (i / n) + shift / 2.0
        b = 1.0 - a
        value = 0.0
        for v in range(n_tok):
            value -= counts[v] * np.log(phi_x[v, 0] * a + phi_x[v, 1] * b)
        if alpha != 1.0:
            value -= (alpha - 1.0) * (np.log(a) + np.log(b))
        if value < best_value:
            best_value = value
            best_a = a
    theta = np.empty(2)
    theta[0] = best_a
    theta[1] = 1.0 - best_a
    return theta, best_value


@njit(cache=True, nogil=True)
def grid_min_k3(phi_x, counts, alpha, n, shift):
    n_tok = phi_x.shape[0]
    best_value = np.inf
    best_a = 0.0
    best_b = 0.0
    scale = 1.0 - shift
    off = shift / 3.0
    for i in range(n + 1):
        a = scale * (i / n) + off
        log_a = np.log(a)
        for j in range(n - i + 1):
            b = scale * (j / n) + off
            c = 1.0 - a - b
            value = 0.0
            for v in range(n_tok):
                value -= counts[v] * np.log(
                    phi_x[v, 0] * a + phi_x[v, 1] * b + phi_x[v, 2] * c
                )
            if alpha != 1.0:
                value -= (alpha - 1.0) * (log_a + np.log(b) + np.log(c))
            if value < best_value:
                best_value = value
                best_a = a
                best_b = b
    theta = np.empty(3)
    theta[0] = best_a
    theta[1] = best_b
    theta[2] = 1.0 - best_a - best_b
    return theta, best_value
