import numpy as np
import pytest

from ledits import (
    AnalyticGmmPredictor,
    GaussianMixture,
    TrainConfig,
    build_schedule,
    train,
)
from ledits.datasets import make_gmm_sampler, make_shapes_sampler


@pytest.fixture(scope="session")
def schedule100():
    return build_schedule(100, eta=1.0)


@pytest.fixture(scope="session")
def schedule100_ddim():
    return build_schedule(100, eta=0.0)


@pytest.fixture(scope="session")
def gmm1():
    return GaussianMixture([1.0], [[0.0, 0.0]], [[1.0, 1.0]])


@pytest.fixture(scope="session")
def gmm2():
    return GaussianMixture(
        [0.5, 0.5], [[-3.0, 0.0], [3.0, 0.0]], [[1.0, 1.0], [1.0, 1.0]]
    )


@pytest.fixture(scope="session")
def gmm2_wide():
    return GaussianMixture(
        [0.5, 0.5], [[-3.0, 0.0], [3.0, 0.0]], [[4.0, 4.0], [4.0, 4.0]]
    )


@pytest.fixture(scope="session")
def gmm3():
    return GaussianMixture(
        [0.3, 0.4, 0.3],
        [[-4.0, 0.0], [0.0, 3.0], [4.0, -1.0]],
        [[1.0, 0.5], [0.8, 0.8], [0.6, 1.2]],
    )


@pytest.fixture(scope="session")
def predictor2(gmm2, schedule100):
    return AnalyticGmmPredictor(gmm2, schedule100)


@pytest.fixture(scope="session")
def trained_single(gmm1, schedule100):
    """Denoiser trained on the single unit Gaussian (unconditional focus)."""
    cfg = TrainConfig(epochs=60, batch_size=192, batches_per_epoch=50, seed=0)
    model, history = train(
        make_gmm_sampler(gmm1), schedule100, cfg, dim=2, n_condition_ids=2
    )
    return model, history


@pytest.fixture(scope="session")
def trained_cond3(gmm3, schedule100):
    """Conditional denoiser on the 3-component 2-D task."""
    cfg = TrainConfig(epochs=50, batch_size=192, batches_per_epoch=50, seed=1)
    model, history = train(
        make_gmm_sampler(gmm3), schedule100, cfg, dim=2, n_condition_ids=4
    )
    return model, history


@pytest.fixture(scope="session")
def trained_image(schedule100):
    """Denoiser trained on the 16x16 shapes domain (two style conditions)."""
    cfg = TrainConfig(epochs=30, batch_size=128, batches_per_epoch=40, seed=2)
    model, history = train(
        make_shapes_sampler(), schedule100, cfg, dim=256, n_condition_ids=3
    )
    return model, history


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
