"""Noise predictors: the ε̂(x, t, condition) abstraction and its exact
analytic implementation for diagonal Gaussian-mixture data.

For a mixture with weights w_k, means μ_k and diagonal covariances Σ_k,
the forward marginal at step t is again a mixture, with component means
√ᾱ_t·μ_k and covariances ᾱ_t·Σ_k + (1−ᾱ_t)·I. The MMSE noise estimate is

    ε̂(x, t) = −√(1−ᾱ_t) · ∇_x log p_t(x),

which is what a perfectly trained denoiser would output. Conditioning is a
stand-in for text prompts: a Condition restricts the mixture to a subset of
components (renormalizing the weights), so "concepts" are literally regions
of the data distribution.

All responsibility computations run in log-space (densities underflow for
t near T).
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ParameterError
from .schedule import NoiseSchedule

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class Condition:
    """What a predictor is conditioned on: nothing, or a component subset."""

    kind: str = "unconditional"
    subset: frozenset = frozenset()

    def __post_init__(self):
        if self.kind not in ("unconditional", "subset"):
            raise ParameterError(f"unknown condition kind {self.kind!r}")
        object.__setattr__(self, "subset", frozenset(int(i) for i in self.subset))
        if self.kind == "subset" and not self.subset:
            raise ParameterError("subset condition requires at least one index")
        if self.kind == "unconditional" and self.subset:
            raise ParameterError("unconditional condition must have empty subset")

    @classmethod
    def unconditional(cls) -> "Condition":
        return cls()

    @classmethod
    def components(cls, *indices: int) -> "Condition":
        return cls(kind="subset", subset=frozenset(indices))

    @property
    def is_unconditional(self) -> bool:
        return self.kind == "unconditional"

    def to_dict(self) -> dict:
        if self.is_unconditional:
            return {"kind": "unconditional"}
        return {"kind": "subset", "subset": sorted(self.subset)}

    @classmethod
    def from_dict(cls, d: dict) -> "Condition":
        if d.get("kind") == "subset":
            return cls(kind="subset", subset=frozenset(d["subset"]))
        return cls()


UNCONDITIONAL = Condition.unconditional()


@dataclass(frozen=True)
class GaussianMixture:
    """Diagonal-covariance Gaussian mixture in d dimensions.

    weights: (K,), strictly positive, summing to 1 within 1e-12.
    means: (K, d).
    variances: (K, d), strictly positive diagonal covariances.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.atleast_2d(np.asarray(self.means, dtype=float))
        v = np.atleast_2d(np.asarray(self.variances, dtype=float))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)
        if w.ndim != 1 or m.shape != v.shape or m.shape[0] != w.size:
            raise ParameterError("inconsistent mixture shapes")
        if (w <= 0).any():
            raise ParameterError("mixture weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ParameterError(f"weights sum to {w.sum()!r}, expected 1")
        if (v <= 0).any():
            raise ParameterError("all diagonal covariance entries must be positive")

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dimension(self) -> int:
        return self.means.shape[1]

    def restrict(self, subset: frozenset) -> "GaussianMixture":
        """Sub-mixture on the given component indices, weights renormalized."""
        idx = sorted(subset)
        if not idx:
            raise ParameterError("cannot restrict to an empty subset")
        if min(idx) < 0 or max(idx) >= self.n_components:
            raise ParameterError(f"subset {idx} invalid for {self.n_components} components")
        w = self.weights[idx]
        return GaussianMixture(w / w.sum(), self.means[idx], self.variances[idx])

    def sample(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Draw n points; returns (points (n, d), component labels (n,))."""
        labels = rng.choice(self.n_components, size=n, p=self.weights)
        noise = rng.standard_normal((n, self.dimension))
        x = self.means[labels] + np.sqrt(self.variances[labels]) * noise
        return x, labels

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianMixture":
        return cls(
            np.asarray(d["weights"], dtype=float),
            np.asarray(d["means"], dtype=float),
            np.asarray(d["variances"], dtype=float),
        )


def _marginal_moments(gmm: GaussianMixture, abar: float) -> tuple[np.ndarray, np.ndarray]:
    """Component means and variances of the time-t marginal mixture."""
    means = np.sqrt(abar) * gmm.means
    variances = abar * gmm.variances + (1.0 - abar)
    return means, variances


def _check_t(schedule: NoiseSchedule, t: int, allow_zero: bool = False) -> None:
    lo = 0 if allow_zero else 1
    if not lo <= t <= schedule.T:
        raise IndexError(f"t={t} outside {lo}..{schedule.T}")


def _log_component_joint(x, means, variances, weights):
    """log(w_k) + log N(x; m_k, v_k) for each k; x has shape (..., d)."""
    diff = x[..., None, :] - means  # (..., K, d)
    quad = np.sum(diff * diff / variances + np.log(variances), axis=-1)
    d = means.shape[-1]
    return np.log(weights) - 0.5 * (quad + d * LOG_2PI)


def log_marginal_density(
    x: np.ndarray, t: int, gmm: GaussianMixture, schedule: NoiseSchedule
) -> np.ndarray:
    """log p_t(x) of the forward marginal. t=0 gives the data mixture."""
    _check_t(schedule, t, allow_zero=True)
    x = np.asarray(x, dtype=float)
    means, variances = _marginal_moments(gmm, schedule.alpha_bar(t))
    return logsumexp(_log_component_joint(x, means, variances, gmm.weights), axis=-1)


def marginal_score(
    x: np.ndarray, t: int, gmm: GaussianMixture, schedule: NoiseSchedule
) -> np.ndarray:
    """∇_x log p_t(x), exact, via max-shifted responsibilities."""
    _check_t(schedule, t, allow_zero=True)
    x = np.asarray(x, dtype=float)
    means, variances = _marginal_moments(gmm, schedule.alpha_bar(t))
    log_joint = _log_component_joint(x, means, variances, gmm.weights)
    resp = np.exp(log_joint - logsumexp(log_joint, axis=-1, keepdims=True))
    comp_scores = (means - x[..., None, :]) / variances  # (..., K, d)
    return np.sum(resp[..., None] * comp_scores, axis=-2)


def gmm_eps(
    x: np.ndarray, t: int, gmm: GaussianMixture, schedule: NoiseSchedule
) -> np.ndarray:
    """Exact MMSE noise estimate ε̂(x, t) = −√(1−ᾱ_t)·∇_x log p_t(x)."""
    _check_t(schedule, t)
    abar = schedule.alpha_bar(t)
    return -np.sqrt(1.0 - abar) * marginal_score(x, t, gmm, schedule)


def conditional_eps(
    x: np.ndarray,
    t: int,
    gmm: GaussianMixture,
    c: Condition,
    schedule: NoiseSchedule,
) -> np.ndarray:
    """ε̂ conditioned on a component subset (renormalized sub-mixture)."""
    if c.is_unconditional:
        return gmm_eps(x, t, gmm, schedule)
    return gmm_eps(x, t, gmm.restrict(c.subset), schedule)


def component_posterior(
    x: np.ndarray, t: int, gmm: GaussianMixture, schedule: NoiseSchedule
) -> np.ndarray:
    """Responsibilities of each component under the time-t marginal.

    Shape (..., K); rows sum to 1. t=0 gives responsibilities under the
    clean-data mixture, the measurement used to quantify edit effects.
    """
    _check_t(schedule, t, allow_zero=True)
    x = np.asarray(x, dtype=float)
    means, variances = _marginal_moments(gmm, schedule.alpha_bar(t))
    log_joint = _log_component_joint(x, means, variances, gmm.weights)
    return np.exp(log_joint - logsumexp(log_joint, axis=-1, keepdims=True))


class NoisePredictor(ABC):
    """ε̂(x, t, condition); deterministic given its arguments.

    ``x`` may be a single vector (d,) or a batch (..., d); predictions
    broadcast over leading axes.
    """

    @property
    @abstractmethod
    def dimension(self) -> int: ...

    @abstractmethod
    def predict(self, x: np.ndarray, t: int, c: Condition) -> np.ndarray: ...


class AnalyticGmmPredictor(NoisePredictor):
    """The exact mixture predictor; supports any valid subset condition."""

    def __init__(self, gmm: GaussianMixture, schedule: NoiseSchedule):
        self.gmm = gmm
        self.schedule = schedule

    @property
    def dimension(self) -> int:
        return self.gmm.dimension

    def predict(self, x: np.ndarray, t: int, c: Condition = UNCONDITIONAL) -> np.ndarray:
        return conditional_eps(x, t, self.gmm, c, self.schedule)
