"""Guided noise estimates: classifier-free target guidance plus additive
per-concept semantic terms.

The combined estimate at reverse step ``step_index`` (0 at the first
executed step) is

    ε̂ = ε_u + s·(ε_target − ε_u) + Σ_i term_i,
    term_i = ±scale_i · (m_i ⊙ (ε_concept_i − ε_base)),

where m_i keeps only the coordinates whose |difference| lies in the top
(1−λ_i) quantile and zeroes the rest, and term_i is zero while
step_index < warmup_i. ``+`` adds the concept, ``−`` removes it. The mask
depends only on the difference, never on the scale, so each term is exactly
homogeneous in its scale.

By default the concept difference is taken against the unconditional
estimate ε_u; set ``concept_baseline="target"`` to take it against the
target-conditioned one instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .predictors import UNCONDITIONAL, Condition, NoisePredictor


def cfg_combine(eps_uncond: np.ndarray, eps_target: np.ndarray, target_scale: float) -> np.ndarray:
    """Classifier-free combination ε_u + s·(ε_c − ε_u)."""
    eps_uncond = np.asarray(eps_uncond, dtype=float)
    eps_target = np.asarray(eps_target, dtype=float)
    if eps_uncond.shape != eps_target.shape:
        raise ParameterError(
            f"shape mismatch: {eps_uncond.shape} vs {eps_target.shape}"
        )
    return eps_uncond + target_scale * (eps_target - eps_uncond)


def quantile_keep_count(threshold: float, n: int) -> int:
    """Number of coordinates kept by a quantile threshold: ceil((1−λ)·n).

    The 1e-9 backoff keeps float dirt in (1−λ)·n from bumping the count to
    the next integer (0.05·100 evaluates to 5.000000000000004).
    """
    if not 0.0 <= threshold < 1.0:
        raise ParameterError(f"threshold must lie in [0, 1), got {threshold}")
    return max(1, math.ceil((1.0 - threshold) * n - 1e-9))


def quantile_mask(diff: np.ndarray, threshold: float) -> np.ndarray:
    """0/1 mask keeping the top-(1−λ) coordinates of |diff|.

    The quantile is taken per sample, over the last axis only. Ties in
    |diff| are broken toward the lower coordinate index (stable sort).
    """
    diff = np.asarray(diff, dtype=float)
    keep = quantile_keep_count(threshold, diff.shape[-1])
    order = np.argsort(-np.abs(diff), axis=-1, kind="stable")
    mask = np.zeros_like(diff)
    np.put_along_axis(mask, order[..., :keep], 1.0, axis=-1)
    return mask


@dataclass(frozen=True)
class ConceptEdit:
    """One semantic edit term.

    direction: "add" pushes toward the concept, "remove" away from it.
    scale: guidance scale of this term (≥ 0).
    warmup: executed reverse steps before the term activates.
    threshold: λ ∈ [0, 1); quantile of |difference| below which
        coordinates are zeroed.
    """

    condition: Condition
    direction: str = "add"
    scale: float = 1.0
    warmup: int = 0
    threshold: float = 0.0

    def __post_init__(self):
        if self.direction not in ("add", "remove"):
            raise ParameterError(f"direction must be add|remove, got {self.direction!r}")
        if not self.scale >= 0.0:
            raise ParameterError(f"scale must be >= 0, got {self.scale}")
        if not (isinstance(self.warmup, (int, np.integer)) and self.warmup >= 0):
            raise ParameterError(f"warmup must be an integer >= 0, got {self.warmup!r}")
        if not 0.0 <= self.threshold < 1.0:
            raise ParameterError(f"threshold must lie in [0, 1), got {self.threshold}")

    def to_dict(self) -> dict:
        return {
            "condition": self.condition.to_dict(),
            "direction": self.direction,
            "scale": self.scale,
            "warmup": self.warmup,
            "threshold": self.threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConceptEdit":
        return cls(
            condition=Condition.from_dict(d["condition"]),
            direction=d.get("direction", "add"),
            scale=float(d.get("scale", 1.0)),
            warmup=int(d.get("warmup", 0)),
            threshold=float(d.get("threshold", 0.0)),
        )


@dataclass(frozen=True)
class GuidanceConfig:
    """Target classifier-free scale plus the list of concept edits."""

    target_scale: float = 1.0
    concepts: tuple = ()
    concept_baseline: str = "unconditional"

    def __post_init__(self):
        object.__setattr__(self, "concepts", tuple(self.concepts))
        if not np.isfinite(self.target_scale):
            raise ParameterError("target_scale must be finite")
        if self.concept_baseline not in ("unconditional", "target"):
            raise ParameterError(
                f"concept_baseline must be unconditional|target, got {self.concept_baseline!r}"
            )

    def to_dict(self) -> dict:
        return {
            "target_scale": self.target_scale,
            "concepts": [c.to_dict() for c in self.concepts],
            "concept_baseline": self.concept_baseline,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GuidanceConfig":
        return cls(
            target_scale=float(d.get("target_scale", 1.0)),
            concepts=tuple(ConceptEdit.from_dict(c) for c in d.get("concepts", [])),
            concept_baseline=d.get("concept_baseline", "unconditional"),
        )


def concept_term(
    eps_base: np.ndarray,
    eps_concept: np.ndarray,
    edit: ConceptEdit,
    step_index: int,
) -> np.ndarray:
    """One concept's additive contribution at the given executed step."""
    eps_base = np.asarray(eps_base, dtype=float)
    eps_concept = np.asarray(eps_concept, dtype=float)
    if eps_base.shape != eps_concept.shape:
        raise ParameterError(f"shape mismatch: {eps_base.shape} vs {eps_concept.shape}")
    if step_index < edit.warmup:
        return np.zeros_like(eps_base)
    diff = eps_concept - eps_base
    sign = 1.0 if edit.direction == "add" else -1.0
    return sign * edit.scale * (quantile_mask(diff, edit.threshold) * diff)


def guided_eps(
    x_t: np.ndarray,
    t: int,
    step_index: int,
    predictor: NoisePredictor,
    target: Condition,
    config: GuidanceConfig,
) -> np.ndarray:
    """Full guided noise estimate for one reverse step."""
    eps_u = predictor.predict(x_t, t, UNCONDITIONAL)
    if target.is_unconditional:
        eps = eps_u.copy()
    else:
        eps_target = predictor.predict(x_t, t, target)
        eps = cfg_combine(eps_u, eps_target, config.target_scale)
    if not config.concepts:
        return eps
    if config.concept_baseline == "target" and not target.is_unconditional:
        eps_base = eps_target
    else:
        eps_base = eps_u
    for edit in config.concepts:
        eps_c = predictor.predict(x_t, t, edit.condition)
        eps = eps + concept_term(eps_base, eps_c, edit, step_index)
    return eps
