"""Diffusion noise schedule: all per-step coefficients for one run.

Conventions (used throughout the package):
  steps are indexed t = 1..T,
  α_t = 1 − β_t,
  ᾱ_t = Π_{s≤t} α_s with ᾱ_0 = 1,
  σ_t = η·sqrt(β_t·(1−ᾱ_{t−1})/(1−ᾱ_t)).

ᾱ_0 = 1 forces σ_1 = 0, so the final denoising step t=1 is always
deterministic. η=0 gives the deterministic (DDIM) process, η=1 the fully
stochastic one.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

# Endpoints of the default linear β schedule, stated for 1000 steps and
# rescaled by 1000/T so shorter runs keep a comparable terminal ᾱ_T.
DEFAULT_BETA_START_1000 = 1e-4
DEFAULT_BETA_END_1000 = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    """Immutable container of per-step diffusion coefficients.

    Arrays have length T and are indexed ``[t-1]`` for step t; use
    :meth:`alpha_bar` for the ᾱ_{t-1} boundary lookups.
    """

    T: int
    eta: float
    betas: np.ndarray
    alphas: np.ndarray = field(repr=False)
    alpha_bars: np.ndarray = field(repr=False)
    sigmas: np.ndarray = field(repr=False)
    beta_start: float = 0.0
    beta_end: float = 0.0

    def alpha_bar(self, t: int) -> float:
        """ᾱ_t for t in 0..T (ᾱ_0 = 1 by convention)."""
        if not 0 <= t <= self.T:
            raise IndexError(f"t={t} outside 0..{self.T}")
        return 1.0 if t == 0 else float(self.alpha_bars[t - 1])

    def sigma(self, t: int) -> float:
        """σ_t for t in 1..T."""
        if not 1 <= t <= self.T:
            raise IndexError(f"t={t} outside 1..{self.T}")
        return float(self.sigmas[t - 1])

    def fingerprint(self) -> str:
        """Hash of the defining parameters, used to tag artifacts."""
        key = f"T={self.T};beta_start={self.beta_start!r};beta_end={self.beta_end!r};eta={self.eta!r}"
        return hashlib.sha256(key.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "beta_start": self.beta_start,
            "beta_end": self.beta_end,
            "eta": self.eta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSchedule":
        return build_schedule(
            d["T"], d.get("beta_start"), d.get("beta_end"), d.get("eta", 1.0)
        )


def default_beta_range(T: int) -> tuple[float, float]:
    """Linear-schedule endpoints rescaled so T steps approximate the
    usual 1000-step schedule."""
    scale = 1000.0 / T
    return DEFAULT_BETA_START_1000 * scale, DEFAULT_BETA_END_1000 * scale


def build_schedule(
    T: int,
    beta_start: float | None = None,
    beta_end: float | None = None,
    eta: float = 1.0,
) -> NoiseSchedule:
    """Construct a :class:`NoiseSchedule` with linearly interpolated β_t.

    ``beta_start``/``beta_end`` default to the 1000-step endpoints rescaled
    by 1000/T. The build is a pure function of its four arguments.

    Raises:
        ParameterError: if T < 1, the β range leaves (0, 1), or η ∉ [0, 1].
    """
    if not isinstance(T, (int, np.integer)) or T < 1:
        raise ParameterError(f"T must be an integer >= 1, got {T!r}")
    if beta_start is None or beta_end is None:
        d_start, d_end = default_beta_range(T)
        beta_start = d_start if beta_start is None else beta_start
        beta_end = d_end if beta_end is None else beta_end
    beta_start = float(beta_start)
    beta_end = float(beta_end)
    eta = float(eta)
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ParameterError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    if not 0.0 <= eta <= 1.0:
        raise ParameterError(f"eta must lie in [0, 1], got {eta}")

    betas = np.linspace(beta_start, beta_end, T)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    # ᾱ_{t-1} with the ᾱ_0 = 1 convention; σ_1 = 0 follows exactly.
    alpha_bars_prev = np.concatenate(([1.0], alpha_bars[:-1]))
    sigmas = eta * np.sqrt(betas * (1.0 - alpha_bars_prev) / (1.0 - alpha_bars))

    if not (alpha_bars > 0.0).all() or not (np.diff(alpha_bars) < 0.0).all():
        raise ParameterError("alpha_bar sequence is not strictly decreasing in (0, 1]")
    # Real radicand in the mean predictor: σ_t² ≤ 1 − ᾱ_{t−1}, strict for t ≥ 2.
    assert (sigmas[1:] < np.sqrt(1.0 - alpha_bars_prev[1:])).all()
    assert sigmas[0] == 0.0

    return NoiseSchedule(
        T=T,
        eta=eta,
        betas=betas,
        alphas=alphas,
        alpha_bars=alpha_bars,
        sigmas=sigmas,
        beta_start=beta_start,
        beta_end=beta_end,
    )


def sigma_at(schedule: NoiseSchedule, t: int) -> float:
    """σ_t from the stored sequence (t in 1..T)."""
    return schedule.sigma(t)
