import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spqkd.errors import DomainError, OutOfTable, SecurityViolation
from spqkd.photonics import DetectorParams, SourceParams
from spqkd.security import (
    SecurityInputs,
    SweepParams,
    beta_factor,
    binary_entropy,
    click_probability_oracle,
    compression_tau,
    ec_factor,
    expected_qber,
    positive_rate_cutoff_db,
    skr_from_observed,
    skr_per_pulse,
    sweep_loss,
    write_sweep_csv,
)
from spqkd.timetag import FilterWindow


def inputs(p_click=4.74e-4, p_signal=4.65e-4, p_dc=9e-6, q=0.0815,
           mu=0.0117, g2=0.046, rep=1e6, dt=3.0):
    return SecurityInputs(
        p_click=p_click, p_signal=p_signal, p_dc=p_dc, q=q,
        mu=mu, g2_zero=g2, rep_rate_hz=rep, delta_t_ns=dt,
    )


class TestBinaryEntropy:
    def test_half(self):
        assert binary_entropy(0.5) == 1.0

    def test_edges(self):
        assert binary_entropy(0.0) == 0.0
        assert binary_entropy(1.0) == 0.0

    def test_paper_qber_value(self):
        # high-precision reference 0.434798676644525 (recomputed independently)
        assert binary_entropy(0.0895) == pytest.approx(0.434798676644525, abs=1e-12)

    def test_domain(self):
        with pytest.raises(DomainError):
            binary_entropy(-0.1)
        with pytest.raises(DomainError):
            binary_entropy(1.1)

    @given(st.floats(min_value=0.0, max_value=1.0))
    def test_symmetric_and_bounded(self, e):
        h = binary_entropy(e)
        assert 0.0 <= h <= 1.0
        assert h == pytest.approx(binary_entropy(1.0 - e), abs=1e-9)

    def test_maximum_at_half(self):
        grid = np.linspace(0.0, 1.0, 101)
        values = [binary_entropy(float(e)) for e in grid]
        assert max(values) == values[50] == 1.0


class TestCompressionTau:
    def test_no_disturbance(self):
        assert compression_tau(0.0) == 1.0

    def test_half(self):
        assert compression_tau(0.5) == pytest.approx(0.0, abs=1e-15)

    def test_quarter(self):
        assert compression_tau(0.25) == pytest.approx(0.192645077942396, abs=1e-12)

    def test_domain(self):
        with pytest.raises(DomainError):
            compression_tau(0.51)
        with pytest.raises(DomainError):
            compression_tau(-0.01)

    def test_monotone_decreasing(self):
        grid = np.linspace(0.0, 0.5, 200)
        values = [compression_tau(float(e)) for e in grid]
        assert all(b < a for a, b in zip(values, values[1:]))


class TestEcFactor:
    def test_anchors(self):
        assert ec_factor(0.01) == pytest.approx(1.16)
        assert ec_factor(0.05) == pytest.approx(1.16)
        assert ec_factor(0.10) == pytest.approx(1.22)
        assert ec_factor(0.15) == pytest.approx(1.35)

    def test_segment_midpoint(self):
        assert ec_factor(0.075) == pytest.approx(1.19)

    def test_clamped_below(self):
        assert ec_factor(0.001) == pytest.approx(1.16)
        assert ec_factor(0.0) == pytest.approx(1.16)

    def test_out_of_table(self):
        with pytest.raises(OutOfTable):
            ec_factor(0.151)


class TestBetaFactor:
    def test_no_multiphoton(self):
        assert beta_factor(0.5, 0.0) == 1.0

    def test_all_multiphoton(self):
        assert beta_factor(0.5, 0.5) == 0.0

    def test_paper_scale(self):
        assert beta_factor(4.74e-4, 3.148e-6) == pytest.approx(0.993358649789, abs=1e-10)

    def test_violation(self):
        with pytest.raises(SecurityViolation):
            beta_factor(1e-5, 2e-5)

    def test_requires_positive_click(self):
        with pytest.raises(DomainError):
            beta_factor(0.0, 0.0)


class TestExpectedQber:
    def test_dark_free_reduces_to_q(self):
        v = expected_qber(inputs(p_click=4.65e-4, p_signal=4.65e-4, p_dc=0.0, q=0.0815))
        assert v == pytest.approx(0.0815)

    def test_dark_only_is_half(self):
        v = expected_qber(inputs(p_click=9e-6, p_signal=0.0, p_dc=9e-6, q=0.3))
        assert v == pytest.approx(0.5)

    def test_paper_window(self):
        # 800 Hz signal in a 1 MHz clock, 3 ns window, q calibrated to 8.95%
        w3 = 1 - math.exp(-3 / 3.45)
        p_signal = 8e-4 * w3
        p_dc = 2 * 1500 * 3e-9
        q = 0.08154959
        v = expected_qber(inputs(p_click=p_signal + p_dc, p_signal=p_signal, p_dc=p_dc, q=q))
        assert v == pytest.approx(0.0895, abs=1e-6)


class TestSkrPerPulse:
    def test_perfect_conditions(self):
        report = skr_per_pulse(
            inputs(p_click=4e-4, p_signal=4e-4, p_dc=0.0, q=0.0, mu=0.1, g2=0.0)
        )
        assert report.skr_per_pulse == pytest.approx(2e-4)
        assert report.beta == 1.0 and report.h_value == 0.0 and report.tau_value == 1.0
        assert report.secure

    def test_dark_dominated_is_insecure(self):
        report = skr_per_pulse(
            inputs(p_click=9e-6, p_signal=0.0, p_dc=9e-6, q=0.1, mu=0.01, g2=0.05)
        )
        assert report.qber_expected == pytest.approx(0.5)
        assert report.skr_per_pulse < 0
        assert not report.secure

    def test_report_consistency(self):
        report = skr_per_pulse(inputs())
        assert report.skr_bps == pytest.approx(report.skr_per_pulse * 1e6)
        assert report.p_m == pytest.approx(0.5 * 0.0117**2 * 0.046)
        lhs = 0.5 * 4.74e-4 * (report.beta * report.tau_value - report.f_value * report.h_value)
        assert report.skr_per_pulse == pytest.approx(lhs)

    def test_multiphoton_dominated_clamps_beta(self):
        report = skr_per_pulse(
            inputs(p_click=1e-5, p_signal=9e-6, p_dc=1e-6, q=0.05, mu=0.1, g2=0.5)
        )
        assert report.beta == 0.0 and report.tau_value == 0.0
        assert report.skr_per_pulse < 0 and not report.secure

    def test_decreasing_in_dark_g2_and_loss(self):
        base = SweepParams(
            mu=0.0117, g2_zero=0.046, setup_transmission=0.35, det_efficiency=0.70,
            dark_rate_hz=1500.0, q=0.0815, delta_t_ns=3.0, lifetime_ns=3.45, rep_rate_hz=1e6,
        )
        for darks in ([500.0, 1500.0, 3000.0],):
            rates = [skr_per_pulse(replace(base, dark_rate_hz=d).inputs_at(0.0)).skr_per_pulse for d in darks]
            assert all(b < a for a, b in zip(rates, rates[1:]))
        g2s = [0.0, 0.046, 0.2]
        rates = [skr_per_pulse(replace(base, g2_zero=g).inputs_at(0.0)).skr_per_pulse for g in g2s]
        assert all(b < a for a, b in zip(rates, rates[1:]))
        losses = [0.0, 2.0, 4.0, 6.0]
        rates = [skr_per_pulse(base.inputs_at(l)).skr_per_pulse for l in losses]
        assert all(b < a for a, b in zip(rates, rates[1:]))

    def test_from_observed_matches_model_form(self):
        report = skr_from_observed(p_click=4.74e-4, qber=0.0895, p_m=3.148e-6, rep_rate_hz=1e6)
        assert report.qber_expected == 0.0895
        assert report.skr_bps > 0


class TestSweepLoss:
    def make_params(self, **kw):
        base = dict(
            mu=0.0117, g2_zero=0.046, setup_transmission=0.35, det_efficiency=0.70,
            dark_rate_hz=1500.0, q=0.08154959, delta_t_ns=3.0, lifetime_ns=3.45,
            rep_rate_hz=1e6,
        )
        base.update(kw)
        return SweepParams(**base)

    def test_signal_model(self):
        params = self.make_params()
        si = params.inputs_at(10.0)
        w3 = 1 - math.exp(-3 / 3.45)
        assert si.p_signal == pytest.approx(0.0117 * 0.035 * 0.70 * w3)
        assert si.p_dc == pytest.approx(9e-6)
        assert si.p_click == pytest.approx(si.p_signal + si.p_dc)

    def test_dark_dominated_limit_negative(self):
        rows = sweep_loss(self.make_params(), [50.0, 60.0])
        assert all(r.skr_per_pulse < 0 for _, r in rows)

    def test_cutoff_exists(self):
        rows = sweep_loss(self.make_params(), list(np.arange(0.0, 40.0, 0.5)))
        cutoff = positive_rate_cutoff_db(rows)
        assert cutoff is not None and 0.0 < cutoff < 40.0

    def test_wider_window_has_higher_click_probability(self):
        p3 = self.make_params().inputs_at(0.0)
        p9 = self.make_params(mu=0.0234, g2_zero=0.08, delta_t_ns=9.0).inputs_at(0.0)
        assert p9.p_click > p3.p_click

    def test_dashed_dominates_solid(self):
        losses = list(np.arange(0.0, 30.0, 1.0))
        solid = sweep_loss(self.make_params(), losses)
        dashed = sweep_loss(
            self.make_params(mu=0.023, setup_transmission=0.70, dark_rate_hz=100.0), losses
        )
        assert all(d.skr_per_pulse >= s.skr_per_pulse for (_, s), (_, d) in zip(solid, dashed))

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            sweep_loss(self.make_params(), [10.0, 5.0])

    def test_csv_clamps_and_flags(self, tmp_path):
        rows = sweep_loss(self.make_params(), [0.0, 50.0])
        path = tmp_path / "sweep.csv"
        write_sweep_csv(rows, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "loss_db,qber,skr_per_pulse,skr_bps,secure_flag"
        first = lines[1].split(",")
        last = lines[2].split(",")
        assert first[4] == "1" and float(first[2]) > 0
        assert last[4] == "0" and float(last[2]) == 0.0


class TestOracle:
    def test_vacuum_source(self, paper_cfg):
        cfg = replace(
            paper_cfg,
            source=replace(paper_cfg.source, mu=0.0),
        )
        rep = click_probability_oracle(cfg, FilterWindow(148.0, 3.0))
        assert rep.p_signal == 0.0
        d = 1 - math.exp(-1500 * 3e-9)
        assert rep.p_click_apd1 == pytest.approx(d, rel=1e-9)
        assert rep.p_click_any == pytest.approx(1 - (1 - d) ** 2, rel=1e-9)
        assert rep.qber_exact == pytest.approx(0.5)

    def test_single_photon_lossless_quarter(self):
        from conftest import ideal_scenario

        cfg = ideal_scenario(duration_s=0.001, seed=1)
        rep = click_probability_oracle(cfg, FilterWindow(0.0, 1000.0))
        assert rep.p_sifted == pytest.approx(0.25, rel=1e-9)
        assert rep.p_double == 0.0
        # cos^2(90 deg) in floats is ~4e-33 rather than exactly zero
        assert rep.p_error == pytest.approx(0.0, abs=1e-30)

    def test_paper_signal_probability(self, paper_cfg):
        rep = click_probability_oracle(paper_cfg, FilterWindow(148.0, 3.0))
        assert rep.p_signal == pytest.approx(4.65e-4, rel=5e-3)
        assert rep.qber_exact == pytest.approx(0.0895, abs=1e-6)

    def test_closed_form_consistency(self, paper_cfg):
        rep = click_probability_oracle(paper_cfg, FilterWindow(148.0, 3.0))
        si = SecurityInputs(
            p_click=rep.p_signal + rep.p_dc_first_order,
            p_signal=rep.p_signal,
            p_dc=rep.p_dc_first_order,
            q=rep.q_effective,
            mu=paper_cfg.source.mu,
            g2_zero=paper_cfg.source.g2_zero,
            rep_rate_hz=1e6,
            delta_t_ns=3.0,
        )
        assert abs(expected_qber(si) - rep.expected_qber) < 1e-12
        # the first-order closed form tracks the exact enumeration closely
        assert rep.expected_qber == pytest.approx(rep.qber_exact, rel=0.02)

    def test_dark_conventions(self, paper_cfg):
        rep = click_probability_oracle(paper_cfg, FilterWindow(148.0, 3.0))
        assert rep.p_dc_first_order == pytest.approx(2 * 1500 * 3e-9)
        assert rep.p_dc_exact == pytest.approx(rep.p_dc_first_order, rel=1e-4)
        assert rep.p_dc_exact < rep.p_dc_first_order

    def test_rejects_jitter(self, paper_cfg):
        cfg = replace(paper_cfg, source=replace(paper_cfg.source, jitter_ns=1.0))
        with pytest.raises(ValueError):
            click_probability_oracle(cfg, FilterWindow(148.0, 3.0))


class TestSecurityInputsValidation:
    def test_rejects_click_below_signal(self):
        with pytest.raises(DomainError):
            inputs(p_click=1e-5, p_signal=2e-5)

    def test_rejects_bad_probability(self):
        with pytest.raises(DomainError):
            inputs(q=1.5)


class TestKeyrateReportJson:
    def test_carries_all_terms_and_is_stable(self):
        import json

        from spqkd.security import keyrate_report_json

        report = skr_per_pulse(inputs())
        text = keyrate_report_json(report)
        assert text == keyrate_report_json(report)
        payload = json.loads(text)
        assert set(payload) == {
            "qber_expected", "beta", "p_m", "tau_value", "f_value", "h_value",
            "skr_per_pulse", "skr_bps", "secure",
        }
        assert payload["skr_bps"] == pytest.approx(report.skr_bps)
