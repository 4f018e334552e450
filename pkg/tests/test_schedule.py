import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ledits import NoiseSchedule, ParameterError, build_schedule, sigma_at
from ledits.schedule import default_beta_range

from oracles import brute_force_alpha_bar


class TestBuild:
    def test_default_t100(self):
        sch = build_schedule(100, eta=1.0)
        assert sch.T == 100
        assert len(sch.sigmas) == 100
        assert sch.alpha_bar(100) < sch.alpha_bar(1) < 1.0
        assert np.all(np.diff(sch.alpha_bars) < 0)

    def test_default_betas_rescaled_by_t(self):
        b100 = default_beta_range(100)
        b200 = default_beta_range(200)
        assert b200[0] == pytest.approx(b100[0] / 2)
        assert b200[1] == pytest.approx(b100[1] / 2)
        # no automatic rescaling when endpoints are given explicitly
        sch_a = build_schedule(200, *b100)
        sch_b = build_schedule(200)
        assert not np.allclose(sch_a.betas, sch_b.betas)

    def test_pure_function_of_arguments(self):
        a = build_schedule(77, 1e-3, 0.15, 0.7)
        b = build_schedule(77, 1e-3, 0.15, 0.7)
        assert np.array_equal(a.betas, b.betas)
        assert np.array_equal(a.alpha_bars, b.alpha_bars)
        assert np.array_equal(a.sigmas, b.sigmas)
        assert a.fingerprint() == b.fingerprint()

    def test_eta_zero_sigmas_exactly_zero(self):
        sch = build_schedule(50, eta=0.0)
        assert np.all(sch.sigmas == 0.0)

    def test_sigma_matches_bruteforce_product_oracle(self):
        sch = build_schedule(100, eta=1.0)
        for t in range(1, 101):
            abar_t = brute_force_alpha_bar(sch.betas, t)
            abar_prev = brute_force_alpha_bar(sch.betas, t - 1)
            sigma_sq = sch.betas[t - 1] * (1.0 - abar_prev) / (1.0 - abar_t)
            assert sch.sigma(t) == pytest.approx(np.sqrt(sigma_sq), rel=1e-12)
            assert sch.alpha_bar(t) == pytest.approx(abar_t, rel=1e-12)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(T=0),
            dict(T=-3),
            dict(T=10, beta_start=0.0),
            dict(T=10, beta_start=-0.1),
            dict(T=10, beta_end=1.0),
            dict(T=10, beta_start=0.5, beta_end=0.1),
            dict(T=10, eta=-0.2),
            dict(T=10, eta=1.5),
        ],
    )
    def test_invalid_parameters_rejected(self, kwargs):
        with pytest.raises(ParameterError):
            build_schedule(**kwargs)


class TestSigmaAt:
    def test_sigma_1_is_zero(self):
        sch = build_schedule(100, eta=1.0)
        assert sigma_at(sch, 1) == 0.0

    def test_eta_zero_every_t(self):
        sch = build_schedule(20, eta=0.0)
        assert all(sigma_at(sch, t) == 0.0 for t in range(1, 21))

    def test_linear_in_eta(self):
        full = build_schedule(40, eta=1.0)
        half = build_schedule(40, eta=0.5)
        for t in (1, 7, 23, 40):
            assert sigma_at(half, t) == 0.5 * sigma_at(full, t)

    def test_out_of_range(self):
        sch = build_schedule(10)
        with pytest.raises(IndexError):
            sigma_at(sch, 0)
        with pytest.raises(IndexError):
            sigma_at(sch, 11)
        with pytest.raises(IndexError):
            sch.alpha_bar(-1)


@given(
    T=st.integers(1, 200),
    beta_lo=st.floats(1e-6, 0.4),
    beta_span=st.floats(0.0, 0.5),
    eta=st.floats(0.0, 1.0),
)
@settings(max_examples=60, deadline=None)
def test_invariants_hold_for_any_valid_build(T, beta_lo, beta_span, eta):
    sch = build_schedule(T, beta_lo, min(beta_lo + beta_span, 0.99), eta)
    assert sch.alpha_bar(0) == 1.0
    bars = sch.alpha_bars
    assert np.all((bars > 0) & (bars <= 1.0))
    assert np.all(np.diff(bars) < 0) or T == 1
    assert np.all(sch.sigmas >= 0)
    # real radicand for the mean predictor, strict above t=1
    prev = np.concatenate(([1.0], bars[:-1]))
    assert np.all(sch.sigmas[1:] ** 2 < 1.0 - prev[1:])
    assert sch.sigmas[0] == 0.0
    # direct-product recomputation agrees to 1e-12 relative
    for t in (1, T // 2, T):
        if t >= 1:
            assert sch.alpha_bar(t) == pytest.approx(
                brute_force_alpha_bar(sch.betas, t), rel=1e-12
            )


def test_serialization_round_trip():
    sch = build_schedule(64, eta=0.25)
    again = NoiseSchedule.from_dict(sch.to_dict())
    assert again.fingerprint() == sch.fingerprint()
    assert np.array_equal(again.sigmas, sch.sigmas)


def test_fingerprint_distinguishes_parameters():
    base = build_schedule(100, eta=1.0)
    assert build_schedule(100, eta=0.5).fingerprint() != base.fingerprint()
    assert build_schedule(99, eta=1.0).fingerprint() != base.fingerprint()
    assert build_schedule(100, 2e-3, None, 1.0).fingerprint() != base.fingerprint()
