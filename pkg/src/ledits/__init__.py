"""Edit-friendly DDPM inversion combined with semantic guidance, on toy
domains where the noise predictor can be exact.

Layers, bottom up: noise schedule -> noise predictors (analytic mixture,
trained MLP) -> DDPM/DDIM sampler -> edit-friendly inversion -> guided
noise composition -> the end-to-end editing pipeline and its CLI.
"""

from .schedule import NoiseSchedule, build_schedule, sigma_at
from .predictors import (
    UNCONDITIONAL,
    AnalyticGmmPredictor,
    Condition,
    GaussianMixture,
    NoisePredictor,
    component_posterior,
    conditional_eps,
    gmm_eps,
    log_marginal_density,
    marginal_score,
)
from .sampler import ReverseStepInput, generate, mu_hat, predicted_x0, reverse_step
from .inversion import InversionResult, invert, replay
from .guidance import (
    ConceptEdit,
    GuidanceConfig,
    cfg_combine,
    concept_term,
    guided_eps,
    quantile_keep_count,
    quantile_mask,
)
from .mlp import (
    Adam,
    MlpDenoiser,
    MlpPredictor,
    TrainConfig,
    load_checkpoint,
    loss_and_grads,
    save_checkpoint,
    train,
)
from .pipeline import EditParams, edit_image, ledits_edit
from .errors import (
    CompatibilityError,
    ConfigError,
    InversionUndefinedError,
    LeditsError,
    NumericError,
    ParameterError,
    ScheduleInconsistencyError,
    TrainingDivergedError,
)

__version__ = "0.1.0"
