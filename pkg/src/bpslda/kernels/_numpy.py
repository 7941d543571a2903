"""Pure-numpy kernels: reference implementation and fallback backend.

All functions operate on the support-restricted slice of the topic matrix
(``phi_x``, shape nTok x K) so a full unroll touches O(nTok * K) entries
per layer regardless of the vocabulary size.
"""

from __future__ import annotations

import numpy as np

# Floor used only inside (alpha - 1)/theta divisions; stored iterates are
# never floored at this scale.
THETA_FLOOR = 1e-12

# Underflow guard on the Hadamard product theta * exp(shifted exponent):
# exact arithmetic keeps iterates strictly positive, double precision does
# not. Activates ~700 ln-units below the iterate max, i.e. never at any
# tested tolerance.
PRODUCT_FLOOR = 1e-300

# Backtracking floor: at convergence rounding noise can reject every trial,
# and without a floor the step would shrink to literal zero. At 1e-300 the
# divergence term 1/T forces acceptance of the (numerically no-op) step.
STEP_FLOOR = 1e-300


def _objective(counts, denom, theta, alpha):
    value = -float(np.dot(counts, np.log(denom)))
    if alpha != 1.0:
        value -= (alpha - 1.0) * float(np.log(theta).sum())
    return value


def _bregman_kl(new, old):
    return float(np.dot(new, np.log(new / old)) - new.sum() + old.sum())


def mda_unroll(phi_x, counts, alpha, depth, t0, eta, line_search, max_backtracks, sq1norm):
    """Forward mirror-descent unroll over one document.

    Returns (thetas, steps, denoms, exhausted, ok): iterates of shape
    (depth+1, K), accepted step sizes, the per-layer support-restricted
    denominators phi_x @ theta_prev, the count of layers that exhausted the
    backtracking budget, and an overflow flag (ok=False signals a
    non-finite exponent).
    """
    n_tok, k = phi_x.shape
    thetas = np.empty((depth + 1, k))
    steps = np.empty(depth)
    denoms = np.empty((depth, n_tok))
    thetas[0] = 1.0 / k
    exhausted = 0
    t_accept = t0
    for layer in range(1, depth + 1):
        theta = thetas[layer - 1]
        denom = phi_x @ theta
        denoms[layer - 1] = denom
        ratio = counts / denom
        grad_neg = phi_x.T @ ratio + (alpha - 1.0) / np.maximum(theta, THETA_FLOOR)
        f_old = _objective(counts, denom, theta, alpha) if line_search else 0.0
        t = t_accept / eta if line_search else t0
        backtracks = 0
        while True:
            with np.errstate(over="ignore"):  # inf is caught right below
                expo = t * grad_neg
            if not np.all(np.isfinite(expo)):
                return thetas, steps, denoms, exhausted, False
            prod = np.maximum(theta * np.exp(expo - expo.max()), PRODUCT_FLOOR)
            theta_new = prod / prod.sum()
            if not line_search:
                break
            f_new = _objective(counts, phi_x @ theta_new, theta_new, alpha)
            delta = theta_new - theta
            linear = -float(np.dot(grad_neg, delta))
            if sq1norm:
                breg = 0.5 * float(np.abs(delta).sum()) ** 2
            else:
                breg = _bregman_kl(theta_new, theta)
            if f_new <= f_old + linear + breg / t:
                break
            backtracks += 1
            if backtracks >= max_backtracks:
                exhausted += 1
                break
            t = max(t * eta, STEP_FLOOR)
        thetas[layer] = theta_new
        steps[layer - 1] = t
        t_accept = t
    return thetas, steps, denoms, exhausted, True


def backward_unroll(phi_x, counts, thetas, steps, denoms, alpha, xi_last):
    """Backward recursion through the unroll; error signal xi_last at the top.

    Returns (block, xis): the support-restricted gradient block of shape
    (nTok, K) summed over layers, and every xi vector (depth+1, K).
    """
    depth = steps.shape[0]
    n_tok, k = phi_x.shape
    block = np.zeros((n_tok, k))
    xis = np.empty((depth + 1, k))
    xis[depth] = xi_last
    xi = xi_last
    for layer in range(depth, 0, -1):
        theta_prev = thetas[layer - 1]
        v = thetas[layer] * xi
        t = steps[layer - 1]
        denom = denoms[layer - 1]
        ratio = counts / denom
        w2 = ratio / denom
        phi_v = phi_x @ v
        block += t * (np.outer(ratio, v) - np.outer(phi_v * w2, theta_prev))
        floored = theta_prev <= THETA_FLOOR
        safe = np.where(floored, 1.0, theta_prev)
        curv = phi_x.T @ (w2 * phi_v)
        curv += np.where(floored, 0.0, (alpha - 1.0) / safe**2) * v
        inner = v / theta_prev - t * curv
        xi = inner - np.dot(theta_prev, inner)
        xis[layer - 1] = xi
    return block, xis


def _grid_objective_chunk(phi_x, counts, alpha, thetas):
    denom = phi_x @ thetas  # (nTok, m)
    values = -counts @ np.log(denom)
    if alpha != 1.0:
        values -= (alpha - 1.0) * np.log(thetas).sum(axis=0)
    return values


def grid_min_k2(phi_x, counts, alpha, n, shift):
    """Exhaustive objective minimum over the K=2 simplex grid with n+1 points."""
    a = np.arange(n + 1) / n
    thetas = np.vstack([a, 1.0 - a])
    thetas = (1.0 - shift) * thetas + shift / 2.0
    values = _grid_objective_chunk(phi_x, counts, alpha, thetas)
    best = int(np.argmin(values))
    return thetas[:, best].copy(), float(values[best])


def grid_min_k3(phi_x, counts, alpha, n, shift):
    """Exhaustive objective minimum over the K=3 simplex grid, chunked by row."""
    best_value = np.inf
    best_theta = np.empty(3)
    for i in range(n + 1):
        a = i / n
        b = np.arange(n - i + 1) / n
        thetas = np.vstack([np.full(b.shape, a), b, 1.0 - a - b])
        thetas = (1.0 - shift) * thetas + shift / 3.0
        values = _grid_objective_chunk(phi_x, counts, alpha, thetas)
        j = int(np.argmin(values))
        if values[j] < best_value:
            best_value = float(values[j])
            best_theta = thetas[:, j].copy()
    return best_theta, best_value
