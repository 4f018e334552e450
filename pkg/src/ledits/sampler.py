"""DDPM reverse process: mean predictor, single stochastic step, and the
full generation loop.

One reverse step maps x_t to

    x_{t-1} = μ̂_t(x_t) + σ_t·z_t,
    μ̂_t(x_t) = √ᾱ_{t-1}·x̂_0 + sqrt(1−ᾱ_{t-1}−σ_t²)·ε,
    x̂_0 = (x_t − √(1−ᾱ_t)·ε)/√ᾱ_t,

with ε the predictor output at (x_t, t). σ_1 = 0, so the final step is
deterministic and x̂_0-shaped. η=0 zeroes every σ_t and recovers DDIM.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ScheduleInconsistencyError
from .predictors import UNCONDITIONAL, Condition, NoisePredictor
from .schedule import NoiseSchedule


@dataclass
class ReverseStepInput:
    """One step's inputs; z_t absent means draw fresh (or zero when σ_t=0)."""

    x_t: np.ndarray
    eps: np.ndarray
    t: int
    z_t: np.ndarray | None = None


def predicted_x0(x_t: np.ndarray, eps: np.ndarray, t: int, schedule: NoiseSchedule) -> np.ndarray:
    """x̂_0 = (x_t − √(1−ᾱ_t)·ε)/√ᾱ_t."""
    abar_t = schedule.alpha_bar(t)
    return (x_t - np.sqrt(1.0 - abar_t) * eps) / np.sqrt(abar_t)


def mu_hat(x_t: np.ndarray, eps: np.ndarray, t: int, schedule: NoiseSchedule) -> np.ndarray:
    """Mean of the reverse transition at step t.

    Raises:
        ScheduleInconsistencyError: if σ_t² > 1 − ᾱ_{t−1} (negative radicand).
    """
    x_t = np.asarray(x_t, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if x_t.shape != eps.shape:
        raise ParameterError(f"shape mismatch: x_t {x_t.shape} vs eps {eps.shape}")
    abar_prev = schedule.alpha_bar(t - 1)
    sigma = schedule.sigma(t)
    radicand = 1.0 - abar_prev - sigma * sigma
    if radicand < 0.0:
        raise ScheduleInconsistencyError(
            f"sigma_{t}^2 = {sigma * sigma} exceeds 1 - alpha_bar_{t - 1} = {1.0 - abar_prev}"
        )
    return np.sqrt(abar_prev) * predicted_x0(x_t, eps, t, schedule) + np.sqrt(radicand) * eps


def reverse_step(
    step: ReverseStepInput,
    schedule: NoiseSchedule,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """x_{t-1} = μ̂_t(x_t) + σ_t·z_t.

    With ``z_t`` absent and σ_t > 0, z is drawn from ``rng`` (the run's
    seeded PRNG); with σ_t = 0 no noise is added.
    """
    mean = mu_hat(step.x_t, step.eps, step.t, schedule)
    sigma = schedule.sigma(step.t)
    if sigma == 0.0:
        return mean
    z = step.z_t
    if z is None:
        if rng is None:
            raise ParameterError("z_t absent and sigma_t > 0: a PRNG is required")
        z = rng.standard_normal(np.shape(step.x_t))
    else:
        z = np.asarray(z, dtype=float)
        if z.shape != np.shape(step.x_t):
            raise ParameterError(f"z_t shape {z.shape} does not match x_t {np.shape(step.x_t)}")
    return mean + sigma * z


def generate(
    predictor: NoisePredictor,
    condition: Condition = UNCONDITIONAL,
    schedule: NoiseSchedule | None = None,
    seed: int = 0,
    x_T: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Run the reverse loop from t=T down to 1.

    ``x_T`` defaults to a standard-normal draw from the seeded PRNG; pass a
    batch (B, d) to generate many samples in lockstep. Returns (x_0,
    trajectory) where trajectory has shape (T+1, ..., d) ordered x_T..x_0.
    """
    if schedule is None:
        raise ParameterError("generate requires a schedule")
    rng = np.random.default_rng(seed)
    if x_T is None:
        x = rng.standard_normal(predictor.dimension)
    else:
        x = np.asarray(x_T, dtype=float)
        if x.shape[-1] != predictor.dimension:
            raise ParameterError(
                f"x_T dimension {x.shape[-1]} != predictor dimension {predictor.dimension}"
            )
    trajectory = [x]
    for t in range(schedule.T, 0, -1):
        eps = predictor.predict(x, t, condition)
        x = reverse_step(ReverseStepInput(x_t=x, eps=eps, t=t), schedule, rng=rng)
        trajectory.append(x)
    return x, np.stack(trajectory)
