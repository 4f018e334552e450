import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ledits import (
    AnalyticGmmPredictor,
    Condition,
    GaussianMixture,
    ParameterError,
    component_posterior,
    conditional_eps,
    gmm_eps,
    marginal_score,
)

from oracles import finite_difference_score


class TestGaussianMixtureValidation:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ParameterError):
            GaussianMixture([0.5, 0.6], [[0.0], [1.0]], [[1.0], [1.0]])

    def test_weights_must_be_positive(self):
        with pytest.raises(ParameterError):
            GaussianMixture([1.2, -0.2], [[0.0], [1.0]], [[1.0], [1.0]])

    def test_variances_must_be_positive(self):
        with pytest.raises(ParameterError):
            GaussianMixture([1.0], [[0.0, 0.0]], [[1.0, 0.0]])

    def test_shape_mismatch(self):
        with pytest.raises(ParameterError):
            GaussianMixture([0.5, 0.5], [[0.0], [1.0]], [[1.0, 1.0], [1.0, 1.0]])

    def test_restrict_validates_subset(self, gmm2):
        with pytest.raises(ParameterError):
            gmm2.restrict(frozenset({5}))
        with pytest.raises(ParameterError):
            gmm2.restrict(frozenset())

    def test_condition_validation(self):
        with pytest.raises(ParameterError):
            Condition(kind="subset", subset=frozenset())
        with pytest.raises(ParameterError):
            Condition(kind="weird")
        assert Condition.components(2, 0).subset == frozenset({0, 2})


class TestGmmEps:
    def test_single_unit_gaussian_closed_form(self, gmm1, schedule100):
        rng = np.random.default_rng(0)
        for t in (1, 17, 50, 100):
            x = rng.standard_normal(2)
            abar = schedule100.alpha_bar(t)
            # marginal variance is 1, so eps-hat = sqrt(1-abar) * x
            expected = np.sqrt(1.0 - abar) * x
            np.testing.assert_allclose(gmm_eps(x, t, gmm1, schedule100), expected, atol=1e-12)

    def test_symmetric_pair_cancels_at_origin(self, schedule100):
        gmm = GaussianMixture([0.5, 0.5], [[-2.0, 1.0], [2.0, -1.0]], [[1.0, 1.0], [1.0, 1.0]])
        out = gmm_eps(np.zeros(2), 50, gmm, schedule100)
        np.testing.assert_allclose(out, 0.0, atol=1e-14)

    def test_matches_finite_difference_score(self, gmm3, schedule100):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(2) * 2.0
        t = 50
        abar = schedule100.alpha_bar(t)
        fd = finite_difference_score(x, t, gmm3, schedule100)
        np.testing.assert_allclose(
            gmm_eps(x, t, gmm3, schedule100), -np.sqrt(1.0 - abar) * fd, atol=1e-4
        )

    def test_score_consistency_many_points(self, gmm3, schedule100):
        """eps-hat + sqrt(1-abar)*score == 0 within 1e-4 under central
        finite differences, over 100+ random (x, t)."""
        rng = np.random.default_rng(2)
        checked = 0
        for _ in range(110):
            t = int(rng.integers(1, 101))
            x = rng.standard_normal(2) * rng.uniform(0.5, 3.0)
            fd = finite_difference_score(x, t, gmm3, schedule100)
            eps = gmm_eps(x, t, gmm3, schedule100)
            resid = eps + np.sqrt(1.0 - schedule100.alpha_bar(t)) * fd
            assert np.max(np.abs(resid)) < 1e-4
            checked += 1
        assert checked >= 100

    def test_t_out_of_range(self, gmm1, schedule100):
        with pytest.raises(IndexError):
            gmm_eps(np.zeros(2), 0, gmm1, schedule100)
        with pytest.raises(IndexError):
            gmm_eps(np.zeros(2), 101, gmm1, schedule100)

    def test_deterministic(self, gmm3, schedule100):
        x = np.array([0.3, -1.2])
        a = gmm_eps(x, 33, gmm3, schedule100)
        b = gmm_eps(x, 33, gmm3, schedule100)
        assert np.array_equal(a, b)


class TestConditionalEps:
    def test_unconditional_is_identity(self, gmm3, schedule100):
        x = np.array([0.5, 0.5])
        a = conditional_eps(x, 40, gmm3, Condition.unconditional(), schedule100)
        b = gmm_eps(x, 40, gmm3, schedule100)
        assert np.array_equal(a, b)

    def test_singleton_matches_single_gaussian_form(self, gmm3, schedule100):
        x = np.array([1.0, -0.5])
        t = 30
        abar = schedule100.alpha_bar(t)
        k = 1
        mean = np.sqrt(abar) * gmm3.means[k]
        var = abar * gmm3.variances[k] + (1.0 - abar)
        expected = np.sqrt(1.0 - abar) * (x - mean) / var
        got = conditional_eps(x, t, gmm3, Condition.components(k), schedule100)
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_two_of_three_matches_fd_of_submixture(self, gmm3, schedule100):
        sub = gmm3.restrict(frozenset({0, 2}))
        x = np.array([-0.7, 1.3])
        t = 55
        fd = finite_difference_score(x, t, sub, schedule100)
        got = conditional_eps(x, t, gmm3, Condition.components(0, 2), schedule100)
        expected = -np.sqrt(1.0 - schedule100.alpha_bar(t)) * fd
        np.testing.assert_allclose(got, expected, atol=1e-4)

    def test_predictor_rejects_bad_subset(self, gmm2, schedule100):
        pred = AnalyticGmmPredictor(gmm2, schedule100)
        with pytest.raises(ParameterError):
            pred.predict(np.zeros(2), 10, Condition.components(7))


class TestComponentPosterior:
    def test_mass_concentrates_at_separated_mean(self, schedule100):
        # means 20 apart with unit variances: separation >= 10 std
        gmm = GaussianMixture(
            [0.5, 0.5], [[-10.0, 0.0], [10.0, 0.0]], [[1.0, 1.0], [1.0, 1.0]]
        )
        for t in (1, 40, 80):
            abar = schedule100.alpha_bar(t)
            for k in (0, 1):
                post = component_posterior(np.sqrt(abar) * gmm.means[k], t, gmm, schedule100)
                assert post[k] > 0.99

    def test_symmetric_pair_is_half_half(self, gmm2, schedule100):
        post = component_posterior(np.zeros(2), 25, gmm2, schedule100)
        np.testing.assert_allclose(post, [0.5, 0.5], atol=1e-12)

    def test_normalization(self, gmm3, schedule100, rng):
        x = rng.standard_normal((64, 2)) * 3.0
        post = component_posterior(x, 60, gmm3, schedule100)
        assert np.all(post >= 0)
        np.testing.assert_allclose(post.sum(axis=-1), 1.0, atol=1e-10)

    def test_t_zero_gives_data_responsibilities(self, gmm2, schedule100):
        post = component_posterior(np.array([-3.0, 0.0]), 0, gmm2, schedule100)
        assert post[0] > 0.99


def test_conditioning_coherence(gmm3, schedule100, rng):
    """Mixing singleton-conditional scores with posterior weights recovers
    the unconditional score (log-derivative mixture identity)."""
    for _ in range(20):
        x = rng.standard_normal(2) * 2.5
        t = int(rng.integers(1, 101))
        post = component_posterior(x, t, gmm3, schedule100)
        mixed = np.zeros(2)
        for k in range(gmm3.n_components):
            sub = gmm3.restrict(frozenset({k}))
            mixed += post[k] * marginal_score(x, t, sub, schedule100)
        np.testing.assert_allclose(
            mixed, marginal_score(x, t, gmm3, schedule100), atol=1e-6
        )


def test_batched_matches_single(gmm3, schedule100, rng):
    xs = rng.standard_normal((8, 2))
    batched = gmm_eps(xs, 42, gmm3, schedule100)
    for i in range(8):
        np.testing.assert_allclose(batched[i], gmm_eps(xs[i], 42, gmm3, schedule100), atol=1e-15)


@given(
    seed=st.integers(0, 2**31 - 1),
    t=st.integers(0, 100),
    scale=st.floats(0.1, 5.0),
)
@settings(max_examples=40, deadline=None)
def test_posterior_normalized_for_any_input(seed, t, scale):
    gmm = GaussianMixture(
        [0.2, 0.3, 0.5],
        [[-4.0, 0.0], [0.0, 3.0], [4.0, -1.0]],
        [[1.0, 0.5], [0.8, 0.8], [0.6, 1.2]],
    )
    schedule = _SCHEDULE
    x = np.random.default_rng(seed).standard_normal(2) * scale
    post = component_posterior(x, t, gmm, schedule)
    assert np.all(post >= 0)
    assert abs(post.sum() - 1.0) < 1e-10


from ledits import build_schedule  # noqa: E402

_SCHEDULE = build_schedule(100, eta=1.0)
