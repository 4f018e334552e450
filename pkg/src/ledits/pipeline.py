"""The combined editor: invert, then run a semantically guided reverse loop
driven by the precomputed noise maps.

Given x_0, the loop

  1. inverts x_0 into (x_T, z_1..z_T) and the auxiliary states x_1..x_T,
  2. starts from the auxiliary state x_{T-skip},
  3. for t = T-skip .. 1 computes the guided estimate ε̂ and updates
     x_{t-1} = μ̂_t(x_t; ε̂) + σ_t·z_t with the *stored* z_t,
  4. returns the resulting x_0-level output.

With an unconditional target and no concepts the guided ε̂ equals the
inversion's ε, so the loop reproduces x_0 exactly (up to round-off) for any
predictor — the edit effect comes entirely from changing the conditioning,
never from new randomness. Larger ``skip`` executes fewer guided steps and
so preserves more of the source.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import CompatibilityError, ParameterError
from .guidance import GuidanceConfig, guided_eps
from .inversion import InversionResult, invert
from .mlp import MlpDenoiser, MlpPredictor
from .predictors import UNCONDITIONAL, Condition, NoisePredictor
from .sampler import mu_hat
from .schedule import NoiseSchedule, build_schedule
from . import datasets, pgm


@dataclass(frozen=True)
class EditParams:
    """Everything that governs one edit run end to end.

    skip: initial reverse steps omitted; the loop starts at t = T - skip
        from the auxiliary inverted state.
    invert_condition: conditioning used when computing the inversion's μ̂
        (unconditional by default; pass the source condition to imprint it).
    """

    T: int = 100
    skip: int = 0
    eta: float = 1.0
    seed: int = 0
    target: Condition = UNCONDITIONAL
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    invert_condition: Condition = UNCONDITIONAL
    beta_start: float | None = None
    beta_end: float | None = None

    def __post_init__(self):
        if not isinstance(self.skip, (int, np.integer)) or not 0 <= self.skip < self.T:
            raise ParameterError(f"skip must lie in [0, T), got {self.skip!r}")
        if not self.eta > 0.0:
            raise ParameterError("eta must be > 0 (inversion requirement)")

    def build_noise_schedule(self) -> NoiseSchedule:
        return build_schedule(self.T, self.beta_start, self.beta_end, self.eta)


def ledits_edit(
    x_0: np.ndarray,
    predictor: NoisePredictor,
    params: EditParams,
    schedule: NoiseSchedule | None = None,
    inversion: InversionResult | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Edit x_0; returns (x_edited, trajectory x_{T-skip}..x_0).

    ``inversion`` may carry a precomputed artifact; otherwise the inversion
    runs inline with ``params.seed`` (both paths give identical output).
    """
    if schedule is None:
        schedule = params.build_noise_schedule()
    if inversion is None:
        inversion = invert(x_0, predictor, params.invert_condition, schedule, params.seed)
    else:
        if inversion.schedule_fingerprint != schedule.fingerprint():
            raise CompatibilityError(
                "inversion artifact was built against a different schedule"
            )
        if inversion.condition != params.invert_condition:
            warnings.warn(
                f"inversion artifact was conditioned on "
                f"{inversion.condition.to_dict()}, params ask for "
                f"{params.invert_condition.to_dict()}; using the artifact as is",
                stacklevel=2,
            )

    start_t = params.T - params.skip
    x = inversion.x_at(start_t)
    trajectory = [x]
    for step_index, t in enumerate(range(start_t, 0, -1)):
        eps = guided_eps(x, t, step_index, predictor, params.target, params.guidance)
        x = mu_hat(x, eps, t, schedule) + schedule.sigma(t) * inversion.z_at(t)
        trajectory.append(x)
    return x, np.stack(trajectory)


def edit_image(
    image: np.ndarray,
    model: MlpDenoiser,
    params: EditParams,
    schedule: NoiseSchedule | None = None,
    inversion: InversionResult | None = None,
    out_path=None,
) -> np.ndarray:
    """Edit a 16x16 image ([0, 1] pixels) with a trained denoiser.

    Returns the edited image, unclamped; clamping to [0, 1] happens only
    when writing ``out_path`` (binary PGM).

    Raises:
        CompatibilityError: if the checkpoint was trained against a
            different schedule than the run requests.
    """
    if schedule is None:
        schedule = params.build_noise_schedule()
    if model.schedule_fingerprint != schedule.fingerprint():
        raise CompatibilityError(
            f"checkpoint schedule fingerprint {model.schedule_fingerprint!r} "
            f"does not match the run's schedule {schedule.fingerprint()!r}"
        )
    image = np.asarray(image, dtype=float)
    if image.shape != (datasets.IMAGE_SIZE, datasets.IMAGE_SIZE):
        raise ParameterError(f"expected a 16x16 image, got shape {image.shape}")
    x_0 = datasets.to_model_space(image)
    x_edited, _ = ledits_edit(x_0, MlpPredictor(model), params, schedule, inversion)
    edited = datasets.from_model_space(x_edited)
    if out_path is not None:
        pgm.write_pgm(out_path, edited)
    return edited
