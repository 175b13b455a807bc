import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spqkd.errors import InvalidStatistics
from spqkd.photonics import (
    ChannelParams,
    PolAngle,
    SaturationModel,
    SourceParams,
    efficiency_budget,
    emission_delay_cdf,
    malus_prob,
    multiphoton_prob,
    photon_number_dist,
    sample_emission_delays,
    saturation_rate,
)


def source(mu, g2, **kw):
    base = dict(lifetime_ns=3.45, rep_rate_hz=1e6, sync_delay_ns=148.0)
    base.update(kw)
    return SourceParams(mu=mu, g2_zero=g2, **base)


class TestPhotonNumberDist:
    def test_paper_source_values(self):
        # independently: p2 = 0.046 * 0.0117^2 / 2 = 3.14847e-6
        dist = photon_number_dist(source(0.0117, 0.046))
        assert dist.p2 == pytest.approx(3.14847e-6, rel=1e-6)
        assert dist.p1 == pytest.approx(0.01169370306, rel=1e-9)
        assert dist.p0 == pytest.approx(0.98830314847, rel=1e-9)

    def test_pure_single_photon(self):
        dist = photon_number_dist(source(0.5, 0.0))
        assert (dist.p0, dist.p1, dist.p2) == (0.5, 0.5, 0.0)

    def test_vacuum(self):
        dist = photon_number_dist(source(0.0, 0.7))
        assert dist.p0 == 1.0
        assert dist.p1 == dist.p2 == 0.0

    def test_no_truncated_distribution_exists(self):
        # mu > 1 with no two-photon weight needs p1 > 1
        with pytest.raises(InvalidStatistics):
            photon_number_dist(source(1.2, 0.0))

    def test_two_photon_weight_cap_at_source(self):
        with pytest.raises(InvalidStatistics):
            source(1.0, 2.5)

    @given(
        mu=st.floats(min_value=0.0, max_value=0.5),
        g2=st.floats(min_value=0.0, max_value=1.0),
    )
    def test_invariants_on_grid(self, mu, g2):
        dist = photon_number_dist(source(mu, g2))
        assert abs(dist.p0 + dist.p1 + dist.p2 - 1.0) < 1e-12
        assert abs(dist.p1 + 2 * dist.p2 - mu) < 1e-12
        if mu > 0 and mu**2 > 0:  # mu^2 underflows for subnormal mu
            assert abs(2 * dist.p2 / mu**2 - g2) < 1e-12


class TestMultiphotonProb:
    def test_values(self):
        assert multiphoton_prob(source(0.0117, 0.046)) == pytest.approx(3.14847e-6, rel=1e-6)
        assert multiphoton_prob(source(0.046, 0.08)) == pytest.approx(8.464e-5, rel=1e-6)
        assert multiphoton_prob(source(0.3, 0.0)) == 0.0


class TestMalus:
    def test_aligned(self):
        assert malus_prob(PolAngle(0), PolAngle(0)) == pytest.approx(1.0)

    def test_crossed(self):
        assert malus_prob(PolAngle(0), PolAngle(90)) == pytest.approx(0.0, abs=1e-15)

    def test_diagonal(self):
        assert malus_prob(PolAngle(45), PolAngle(0)) == pytest.approx(0.5)

    @given(
        a=st.floats(min_value=-720, max_value=720),
        b=st.floats(min_value=-720, max_value=720),
    )
    def test_range_symmetry_period(self, a, b):
        p = malus_prob(a, b)
        assert 0.0 <= p <= 1.0
        assert p == pytest.approx(malus_prob(b, a), abs=1e-12)
        assert p == pytest.approx(malus_prob(a + 180.0, b), abs=1e-9)


class TestEmissionDelay:
    def test_zero(self):
        assert emission_delay_cdf(0.0, 3.45) == 0.0

    def test_one_lifetime(self):
        assert emission_delay_cdf(3.45, 3.45) == pytest.approx(1 - 1 / math.e, rel=1e-12)

    def test_paper_window(self):
        # 1 - exp(-3/3.45) evaluated independently
        assert emission_delay_cdf(3.0, 3.45) == pytest.approx(0.5808662583007, rel=1e-10)

    @given(
        t1=st.floats(min_value=0, max_value=1e3),
        t2=st.floats(min_value=0, max_value=1e3),
        tau=st.floats(min_value=1e-3, max_value=1e3),
    )
    def test_monotone_into_unit_interval(self, t1, t2, tau):
        lo, hi = sorted((t1, t2))
        a, b = emission_delay_cdf(lo, tau), emission_delay_cdf(hi, tau)
        assert 0.0 <= a <= b <= 1.0
        if hi / tau < 36:  # below the point where 1-exp(-x) rounds to 1.0
            assert b < 1.0

    def test_sampling_counterpart(self):
        rng = np.random.default_rng(42)
        draws = sample_emission_delays(rng, 3.45, 200_000)
        assert draws.min() >= 0
        assert np.mean(draws) == pytest.approx(3.45, rel=0.02)
        # empirical CDF at one lifetime
        assert np.mean(draws < 3.45) == pytest.approx(1 - 1 / math.e, abs=0.01)

    def test_sampling_deterministic(self):
        a = sample_emission_delays(np.random.default_rng(5), 2.0, 100)
        b = sample_emission_delays(np.random.default_rng(5), 2.0, 100)
        assert np.array_equal(a, b)


class TestSaturation:
    def test_half_saturation(self):
        model = SaturationModel(r_inf_hz=495e3, p_sat=1.3)
        assert saturation_rate(1.3, model) == pytest.approx(495e3 / 2)

    def test_asymptote(self):
        model = SaturationModel(r_inf_hz=495e3, p_sat=1.3)
        assert saturation_rate(1e9, model) == pytest.approx(495e3, rel=1e-6)
        assert saturation_rate(1e9, model) < 495e3

    def test_monotone_bounded(self):
        model = SaturationModel(r_inf_hz=1e5, p_sat=0.7)
        powers = np.linspace(0, 50, 200)
        rates = [saturation_rate(p, model) for p in powers]
        assert all(b > a for a, b in zip(rates, rates[1:]))
        assert all(r < model.r_inf_hz for r in rates)


class TestEfficiencyBudget:
    def test_empty_chain(self):
        assert efficiency_budget([]).total == 1.0

    def test_two_halves(self):
        assert efficiency_budget([0.5, 0.5]).total == pytest.approx(0.25)

    def test_demonstration_chain(self):
        # 30 kHz after the objective -> 7.8 kHz at Alice -> 800 Hz on the APDs
        budget = efficiency_budget(
            [
                ("objective_to_alice", 7.8 / 30.0),
                ("alice_to_apds", 0.8 / 7.8),
            ]
        )
        assert budget.total == pytest.approx(0.0267, abs=2e-4)
        assert 30e3 * budget.total == pytest.approx(800.0, rel=1e-9)
        assert len(budget.report_lines()) == 4

    def test_cumulative_column(self):
        budget = efficiency_budget([("a", 0.5), ("b", 0.4), ("c", 0.9)])
        assert budget.cumulative == pytest.approx((0.5, 0.2, 0.18))

    def test_stage_outside_unit_interval(self):
        with pytest.raises(ValueError):
            efficiency_budget([1.2])

    @given(st.lists(st.floats(min_value=0.0, max_value=1.0), max_size=8), st.randoms())
    @settings(max_examples=50)
    def test_order_independent(self, stages, rnd):
        shuffled = list(stages)
        rnd.shuffle(shuffled)
        assert efficiency_budget(shuffled).total == pytest.approx(
            efficiency_budget(stages).total, rel=1e-12, abs=1e-300
        )


class TestParamValidation:
    def test_pol_angle_reduced(self):
        assert PolAngle(270.0).degrees == 90.0
        assert PolAngle(-45.0).degrees == 135.0

    def test_channel_transmission(self):
        channel = ChannelParams(loss_db=10.0, setup_transmission=0.35)
        assert channel.transmission == pytest.approx(0.035)

    def test_channel_rejects_negative_loss(self):
        with pytest.raises(InvalidStatistics):
            ChannelParams(loss_db=-1.0)
