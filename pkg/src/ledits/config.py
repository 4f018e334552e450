"""Run-config files: JSON, UTF-8, versioned, strictly validated.

Unknown keys are rejected at every level so an experiment file cannot
silently carry typos. The "version" field is required.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, LeditsError
from .guidance import ConceptEdit, GuidanceConfig
from .pipeline import EditParams
from .predictors import UNCONDITIONAL, Condition, GaussianMixture

CONFIG_VERSION = 1


def _check_keys(section: dict, allowed: set, context: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"{context}: expected an object, got {type(section).__name__}")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{context}: unknown keys {sorted(unknown)}")


def _require(section: dict, key: str, context: str):
    if key not in section:
        raise ConfigError(f"{context}: missing required key {key!r}")
    return section[key]


def _parse_condition(d: dict, context: str) -> Condition:
    _check_keys(d, {"kind", "subset"}, context)
    kind = d.get("kind", "unconditional")
    try:
        if kind == "subset":
            return Condition(kind="subset", subset=frozenset(d.get("subset", [])))
        if kind == "unconditional":
            return UNCONDITIONAL
    except LeditsError as exc:
        raise ConfigError(f"{context}: {exc}") from exc
    raise ConfigError(f"{context}: unknown condition kind {kind!r}")


def _parse_concept(d: dict, context: str) -> ConceptEdit:
    _check_keys(d, {"condition", "direction", "scale", "warmup", "threshold"}, context)
    cond = _parse_condition(_require(d, "condition", context), f"{context}.condition")
    try:
        return ConceptEdit(
            condition=cond,
            direction=d.get("direction", "add"),
            scale=float(d.get("scale", 1.0)),
            warmup=int(d.get("warmup", 0)),
            threshold=float(d.get("threshold", 0.0)),
        )
    except LeditsError as exc:
        raise ConfigError(f"{context}: {exc}") from exc


def _parse_guidance(d: dict, context: str) -> GuidanceConfig:
    _check_keys(d, {"target_scale", "concepts", "concept_baseline"}, context)
    concepts = d.get("concepts", [])
    if not isinstance(concepts, list):
        raise ConfigError(f"{context}.concepts: expected a list")
    try:
        return GuidanceConfig(
            target_scale=float(d.get("target_scale", 1.0)),
            concepts=tuple(
                _parse_concept(c, f"{context}.concepts[{i}]") for i, c in enumerate(concepts)
            ),
            concept_baseline=d.get("concept_baseline", "unconditional"),
        )
    except LeditsError as exc:
        raise ConfigError(f"{context}: {exc}") from exc


@dataclass
class TrainSection:
    domain: str = "mixture"
    epochs: int = 30
    batch_size: int = 128
    batches_per_epoch: int = 50
    learning_rate: float = 1e-3
    final_lr_scale: float = 0.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    cond_dropout: float = 0.1
    hidden: int = 128
    cond_width: int = 8


@dataclass
class SweepSection:
    skips: list = field(default_factory=list)
    target_scales: list = field(default_factory=list)
    concept_scales: list = field(default_factory=list)


@dataclass
class RunConfig:
    """Parsed and validated run configuration."""

    schedule_params: dict
    seed: int = 0
    out_dir: str = "out"
    mixture: GaussianMixture | None = None
    checkpoint: str | None = None
    skip: int = 0
    target: Condition = UNCONDITIONAL
    invert_condition: Condition = UNCONDITIONAL
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    train: TrainSection | None = None
    sweep: SweepSection | None = None
    stats_runs: int | None = None

    def edit_params(self, seed: int | None = None, **overrides) -> EditParams:
        """EditParams for this config; keyword overrides replace fields."""
        kwargs = {
            "T": int(self.schedule_params["T"]),
            "skip": self.skip,
            "eta": float(self.schedule_params.get("eta", 1.0)),
            "seed": self.seed if seed is None else seed,
            "target": self.target,
            "guidance": self.guidance,
            "invert_condition": self.invert_condition,
            "beta_start": self.schedule_params.get("beta_start"),
            "beta_end": self.schedule_params.get("beta_end"),
        }
        kwargs.update(overrides)
        try:
            return EditParams(**kwargs)
        except LeditsError as exc:
            raise ConfigError(f"edit parameters: {exc}") from exc


TOP_KEYS = {
    "version",
    "seed",
    "out_dir",
    "schedule",
    "mixture",
    "checkpoint",
    "edit",
    "train",
    "sweep",
    "stats",
}


def parse_config(raw: dict, base_dir: str = ".") -> RunConfig:
    """Validate a decoded JSON object into a RunConfig.

    ``base_dir`` anchors relative checkpoint paths (usually the config
    file's directory).
    """
    _check_keys(raw, TOP_KEYS, "config")
    version = _require(raw, "version", "config")
    if version != CONFIG_VERSION:
        raise ConfigError(f"config: unsupported version {version!r} (expected {CONFIG_VERSION})")

    sched = _require(raw, "schedule", "config")
    _check_keys(sched, {"T", "beta_start", "beta_end", "eta"}, "config.schedule")
    if "T" not in sched:
        raise ConfigError("config.schedule: missing required key 'T'")

    cfg = RunConfig(schedule_params=dict(sched))
    cfg.seed = int(raw.get("seed", 0))
    cfg.out_dir = raw.get("out_dir", "out")

    if "mixture" in raw:
        mix = raw["mixture"]
        _check_keys(mix, {"weights", "means", "variances"}, "config.mixture")
        try:
            cfg.mixture = GaussianMixture.from_dict(
                {
                    "weights": _require(mix, "weights", "config.mixture"),
                    "means": _require(mix, "means", "config.mixture"),
                    "variances": _require(mix, "variances", "config.mixture"),
                }
            )
        except LeditsError as exc:
            raise ConfigError(f"config.mixture: {exc}") from exc

    if "checkpoint" in raw:
        path = raw["checkpoint"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        if not os.path.exists(path):
            raise ConfigError(f"config.checkpoint: file does not exist: {path}")
        cfg.checkpoint = path

    if "edit" in raw:
        edit = raw["edit"]
        _check_keys(edit, {"skip", "target", "invert_condition", "guidance"}, "config.edit")
        cfg.skip = int(edit.get("skip", 0))
        if "target" in edit:
            cfg.target = _parse_condition(edit["target"], "config.edit.target")
        if "invert_condition" in edit:
            cfg.invert_condition = _parse_condition(
                edit["invert_condition"], "config.edit.invert_condition"
            )
        if "guidance" in edit:
            cfg.guidance = _parse_guidance(edit["guidance"], "config.edit.guidance")

    if "train" in raw:
        tr = raw["train"]
        fields = {
            "domain",
            "epochs",
            "batch_size",
            "batches_per_epoch",
            "learning_rate",
            "final_lr_scale",
            "adam_beta1",
            "adam_beta2",
            "adam_eps",
            "cond_dropout",
            "hidden",
            "cond_width",
        }
        _check_keys(tr, fields, "config.train")
        section = TrainSection(**tr)
        if section.domain not in ("mixture", "images"):
            raise ConfigError(
                f"config.train.domain: expected mixture|images, got {section.domain!r}"
            )
        cfg.train = section

    if "sweep" in raw:
        sw = raw["sweep"]
        _check_keys(sw, {"skips", "target_scales", "concept_scales"}, "config.sweep")
        section = SweepSection(**sw)
        for name in ("skips", "target_scales", "concept_scales"):
            axis = getattr(section, name)
            if not isinstance(axis, list):
                raise ConfigError(f"config.sweep.{name}: expected a list")
            if name in sw and not axis:
                raise ConfigError(f"config.sweep.{name}: axis must be nonempty when given")
        cfg.sweep = section

    if "stats" in raw:
        st = raw["stats"]
        _check_keys(st, {"runs"}, "config.stats")
        runs = int(_require(st, "runs", "config.stats"))
        if runs < 1:
            raise ConfigError("config.stats.runs: must be >= 1")
        cfg.stats_runs = runs

    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return parse_config(raw, base_dir=os.path.dirname(os.path.abspath(path)))
