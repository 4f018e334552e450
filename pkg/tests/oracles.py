"""Independent reference implementations used only by the tests.

Each oracle recomputes a quantity through a different route than the
library (finite differences, brute-force products, alternative algebra) so
agreement is meaningful.
"""

import numpy as np

from ledits.predictors import log_marginal_density


def finite_difference_score(x, t, gmm, schedule, step=1e-5):
    """Central-difference estimate of ∇_x log p_t(x)."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for j in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[j] += step
        lo[j] -= step
        grad[j] = (
            log_marginal_density(hi, t, gmm, schedule)
            - log_marginal_density(lo, t, gmm, schedule)
        ) / (2.0 * step)
    return grad


def brute_force_alpha_bar(betas, t):
    """ᾱ_t as a plain Python product of (1 - β_s), s = 1..t."""
    out = 1.0
    for s in range(t):
        out *= 1.0 - float(betas[s])
    return out


def ddim_step(x, eps, t, schedule):
    """Deterministic reverse step in the one-expression form (the library
    goes through x̂_0 explicitly, so the rounding paths differ)."""
    ab_t = schedule.alpha_bar(t)
    ab_prev = schedule.alpha_bar(t - 1)
    return (
        np.sqrt(ab_prev) * (x - np.sqrt(1.0 - ab_t) * eps) / np.sqrt(ab_t)
        + np.sqrt(1.0 - ab_prev) * eps
    )


def ddim_trajectory(predictor, condition, schedule, x_T):
    """Full deterministic trajectory using :func:`ddim_step`."""
    x = np.asarray(x_T, dtype=float)
    traj = [x]
    for t in range(schedule.T, 0, -1):
        eps = predictor.predict(x, t, condition)
        x = ddim_step(x, eps, t, schedule)
        traj.append(x)
    return np.stack(traj)


def mu_hat_one_expression(x_t, eps, t, schedule):
    """Mean predictor evaluated in a single expression (the library first
    computes x̂_0 and recombines, so the rounding path differs)."""
    ab_t = schedule.alpha_bar(t)
    ab_prev = schedule.alpha_bar(t - 1)
    sigma = schedule.sigma(t)
    return (
        np.sqrt(ab_prev) * (x_t - np.sqrt(1.0 - ab_t) * eps) / np.sqrt(ab_t)
        + np.sqrt(1.0 - ab_prev - sigma * sigma) * eps
    )


def top_quantile_mask_bruteforce(diff, threshold):
    """Sort-based reference mask: keep the k = ceil((1-λ)·n) largest |d|,
    ties by lower index, via an explicit sorted list of (|d|, index)."""
    diff = np.asarray(diff, dtype=float)
    n = diff.size
    k = int(np.ceil((1.0 - threshold) * n - 1e-9))
    k = max(1, k)
    ranked = sorted(((abs(d), -i) for i, d in enumerate(diff)), reverse=True)
    mask = np.zeros(n)
    for absd, negi in ranked[:k]:
        mask[-negi] = 1.0
    return mask


def finite_difference_loss_grads(loss_fn, flat_params, step=1e-6):
    """Central differences of a scalar loss with respect to a flat vector."""
    grads = np.zeros_like(flat_params)
    for j in range(flat_params.size):
        hi = flat_params.copy()
        lo = flat_params.copy()
        hi[j] += step
        lo[j] -= step
        grads[j] = (loss_fn(hi) - loss_fn(lo)) / (2.0 * step)
    return grads


def no_sega_edit(x0, predictor, target, target_scale, schedule, seed, skip=0):
    """Separately coded editor without concept terms: invert, then a plain
    classifier-free reverse loop driven by the stored noise maps."""
    from ledits.guidance import cfg_combine
    from ledits.inversion import invert
    from ledits.predictors import UNCONDITIONAL
    from ledits.sampler import mu_hat

    inv = invert(x0, predictor, UNCONDITIONAL, schedule, seed)
    start_t = schedule.T - skip
    x = inv.x_at(start_t)
    for t in range(start_t, 0, -1):
        eps_u = predictor.predict(x, t, UNCONDITIONAL)
        if target.is_unconditional:
            eps = eps_u
        else:
            eps = cfg_combine(eps_u, predictor.predict(x, t, target), target_scale)
        x = mu_hat(x, eps, t, schedule) + schedule.sigma(t) * inv.z_at(t)
    return x
