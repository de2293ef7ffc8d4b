import math

import numpy as np
import pytest
from scipy.stats import linregress

from tfqkd.bounds import srb_bound
from tfqkd.core import ChannelParams
from tfqkd.rates import (
    DetectionStats,
    ProtocolConfig,
    ProtocolVariant,
    click_probabilities,
    generate_rate_curve,
    model_detection_stats,
    optimize_intensity,
    optimized_rate,
    pm_rate,
    pmmdi_rate,
    tf_gllp_rate,
    tfstar_rate,
)

FIG2_CHANNEL = dict(
    loss_db_per_km=0.2,
    detector_efficiency=0.4,
    dark_count_prob=1e-7,
    misalignment=0.015,
)


def fig2_channel(length_km):
    return ChannelParams(length_km=length_km, **FIG2_CHANNEL)


class TestProtocolConfig:
    def test_intensity_ordering_enforced(self):
        with pytest.raises(ValueError):
            ProtocolConfig(signal_intensity=0.1, decoy_intensities=(0.5, 0.0))
        with pytest.raises(ValueError):
            ProtocolConfig(signal_intensity=0.5, decoy_intensities=(0.5, 0.0))

    def test_slice_count_even(self):
        with pytest.raises(ValueError):
            ProtocolConfig(slice_count=15)

    def test_with_intensity_scales_decoys(self):
        cfg = ProtocolConfig(signal_intensity=0.5, decoy_intensities=(0.1, 0.0))
        scaled = cfg.with_intensity(1.0)
        assert scaled.intensity_levels == (1.0, 0.2, 0.0)


class TestClickProbabilities:
    def test_vacuum(self):
        p0, p1 = click_probabilities(0.0, 0.0, 0.3, 0.0)
        assert p0 == 0.0 and p1 == 0.0

    def test_dark_only(self):
        p0, p1 = click_probabilities(0.0, 0.0, 0.0, 1e-3)
        assert p0 == pytest.approx(1e-3, rel=1e-9)
        assert p1 == pytest.approx(1e-3, rel=1e-9)

    def test_perfect_interference_dark_port(self):
        # aligned equal arms: all 0.5 mean photons exit port 0
        p0, p1 = click_probabilities(0.25, 0.25, 0.0, 0.0)
        assert p1 == 0.0
        assert p0 == pytest.approx(-math.expm1(-0.5), rel=1e-12)


class TestModelDetectionStats:
    def test_ideal_limit(self):
        # perfect devices, aligned phases: all light exits one port
        ch = ChannelParams(length_km=100, detector_efficiency=1.0)
        cfg = ProtocolConfig(variant=ProtocolVariant.NPP)
        stats = model_detection_stats(ch, cfg, delta_phi=0.0)
        expected = -math.expm1(-math.sqrt(ch.eta) * cfg.signal_intensity)
        assert stats.qber_z == 0.0
        assert stats.gain == pytest.approx(expected, rel=1e-12)

    def test_vacuum_limit(self):
        ch = ChannelParams(length_km=100, detector_efficiency=1.0)
        cfg = ProtocolConfig(signal_intensity=1e-9, decoy_intensities=())
        stats = model_detection_stats(ch, cfg)
        assert stats.gain < 2e-10

    def test_single_photon_yield_ideal(self):
        ch = ChannelParams(length_km=100, detector_efficiency=1.0)
        stats = model_detection_stats(ch, ProtocolConfig())
        assert stats.single_photon_yield == pytest.approx(math.sqrt(ch.eta), rel=1e-12)
        assert stats.single_photon_qber == 0.0

    def test_sns_rejected(self):
        with pytest.raises(ValueError):
            model_detection_stats(
                fig2_channel(100), ProtocolConfig(variant=ProtocolVariant.SNS)
            )

    def test_gain_dominates_single_photon_gain(self):
        for km in (10, 100, 300):
            stats = model_detection_stats(fig2_channel(km), ProtocolConfig())
            assert stats.single_photon_gain <= stats.gain


class TestTfGllpRate:
    def test_ideal_reduces_to_poisson_single_photon(self):
        eta = 0.01
        mu = 0.3
        stats = DetectionStats(
            gain=1.0 - math.exp(-math.sqrt(eta) * mu),
            qber_z=0.0,
            phase_error_x=0.0,
            single_photon_gain=mu * math.exp(-mu) * math.sqrt(eta),
            single_photon_qber=0.0,
            single_photon_yield=math.sqrt(eta),
        )
        cfg = ProtocolConfig(sifting_factor=1.0)
        assert tf_gllp_rate(stats, cfg) == pytest.approx(
            mu * math.exp(-mu) * math.sqrt(eta), rel=1e-12
        )

    def test_mu_one_gives_inverse_e(self):
        eta = 0.01
        stats = DetectionStats(
            gain=1.0,
            qber_z=0.0,
            phase_error_x=0.0,
            single_photon_gain=math.exp(-1.0) * math.sqrt(eta),
            single_photon_qber=0.0,
            single_photon_yield=math.sqrt(eta),
        )
        assert tf_gllp_rate(stats, ProtocolConfig()) == pytest.approx(
            math.exp(-1.0) * math.sqrt(eta), rel=1e-12
        )

    def test_fig2_300km_regression(self):
        opt = optimized_rate(ProtocolVariant.TF_GLLP, fig2_channel(300), ProtocolConfig())
        assert opt.rate > 0
        assert opt.rate < srb_bound(fig2_channel(300).eta)
        # recorded from this implementation; guards against silent drift
        assert opt.rate == pytest.approx(7.544085408e-05, rel=1e-6)
        assert opt.mu == pytest.approx(0.6369, rel=1e-3)


class TestTfstarRate:
    def test_no_errors(self):
        assert tfstar_rate(0.01, 0.0, 0.0, 1.15) == pytest.approx(0.01, rel=1e-12)

    def test_half_phase_error_kills_rate(self):
        assert tfstar_rate(0.01, 0.5, 0.01, 1.15) == 0.0

    def test_worked_example(self):
        # frozen mpmath evaluation of 0.01 (1 - H2(0.03) - 1.15 H2(0.01))
        assert tfstar_rate(0.01, 0.03, 0.01, 1.15) == pytest.approx(
            0.00712696035888, rel=1e-9
        )


class TestPmRate:
    def test_error_free(self):
        stats = DetectionStats(gain=0.2, qber_z=0.0, phase_error_x=0.0)
        cfg = ProtocolConfig(slice_count=16)
        assert pm_rate(stats, cfg) == pytest.approx(0.2 * 2 / 16, rel=1e-12)

    def test_clamped_at_max_qber(self):
        stats = DetectionStats(gain=0.2, qber_z=0.5, phase_error_x=0.0)
        assert pm_rate(stats, ProtocolConfig()) == 0.0


class TestPmmdiRate:
    def test_lossless(self):
        for mu in (0.1, 0.5, 2.0):
            assert pmmdi_rate(mu, 1.0) == pytest.approx(-math.expm1(-2 * mu), rel=1e-12)

    def test_asymptote(self):
        for eta in (1e-6, 1e-7, 1e-8):
            opt = optimize_intensity(pmmdi_rate, eta)
            assert opt.rate / math.sqrt(eta) == pytest.approx(0.0714, abs=0.002)

    def test_regression_point(self):
        # frozen mpmath evaluation of the closed form at mu=0.1, eta=0.01
        assert pmmdi_rate(0.1, 0.01) == pytest.approx(0.00779196956456, rel=1e-9)

    def test_domain(self):
        with pytest.raises(ValueError):
            pmmdi_rate(0.0, 0.5)
        with pytest.raises(ValueError):
            pmmdi_rate(0.1, 0.0)


class TestOptimizeIntensity:
    def test_poisson_single_photon_weight(self):
        opt = optimize_intensity(lambda mu, _eta: mu * math.exp(-mu), 0.5)
        assert opt.mu == pytest.approx(1.0, abs=1e-3)
        assert not opt.degenerate

    def test_against_dense_grid_oracle(self):
        eta = 1e-4
        grid = np.geomspace(1e-4, 10, 10_000)
        dense_best = max(pmmdi_rate(m, eta) for m in grid)
        opt = optimize_intensity(pmmdi_rate, eta)
        assert opt.rate == pytest.approx(dense_best, rel=1e-3)

    def test_degenerate_zero_rate(self):
        opt = optimize_intensity(lambda mu, _eta: 0.0, 0.5)
        assert opt.degenerate
        assert opt.rate == 0.0
        assert opt.mu == pytest.approx(math.sqrt(1e-4 * 10.0), rel=1e-9)


class TestCurveProperties:
    def test_empty_protocols_bounds_only(self):
        pts = generate_rate_curve(fig2_channel(0), [0.0, 100.0], protocols=[])
        assert pts[0].rates == {}
        assert set(pts[0].bounds) == {"plob", "srb", "tgw"}

    def test_zero_length_sentinels(self):
        pts = generate_rate_curve(fig2_channel(0), [0.0], protocols=[])
        assert pts[0].eta == 1.0
        assert pts[0].bounds["plob"] == math.inf

    def test_distances_must_be_sorted(self):
        with pytest.raises(ValueError):
            generate_rate_curve(fig2_channel(0), [100.0, 0.0], protocols=[])

    def test_starved_monte_carlo_point_reports_zero_rate(self):
        # at long distance a small simulation sees no estimation events;
        # the curve must carry a zero rate there rather than abort
        pts = generate_rate_curve(
            fig2_channel(0),
            [500.0],
            protocols=[ProtocolVariant.NPP],
            mc_pulses=2000,
            seed=1,
        )
        assert pts[0].rates["npp_mc"] == 0.0

    def test_optimized_rates_monotone_in_length(self):
        cfg = ProtocolConfig()
        dists = [50.0, 150.0, 250.0, 350.0, 450.0]
        pts = generate_rate_curve(
            fig2_channel(0),
            dists,
            protocols=[ProtocolVariant.PM, ProtocolVariant.PM_MDI, ProtocolVariant.TF_GLLP],
            config=cfg,
        )
        for name in ("pm", "pmmdi", "tf_gllp"):
            vals = [p.rates[name] for p in pts]
            assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_pmmdi_below_single_repeater_bound(self):
        # holds over the long-haul regime the rate curve covers; at
        # moderate eta the loss-only formula with mu near the search cap
        # can exceed the repeater bound (e.g. eta=0.058, mu=10)
        for eta in np.geomspace(1e-8, 1e-2, 40):
            for mu in np.geomspace(1e-3, 10, 20):
                assert pmmdi_rate(mu, eta) <= srb_bound(eta) + 1e-12

    def test_tf_gllp_ideal_device_slope(self):
        # with perfect devices Y1 = sqrt(eta) and the rate tracks it
        channel = ChannelParams(length_km=0, loss_db_per_km=0.2)
        cfg = ProtocolConfig()
        dists = np.arange(300.0, 501.0, 50.0)
        rates = [
            optimized_rate(ProtocolVariant.TF_GLLP, channel.at_length(d), cfg).rate
            for d in dists
        ]
        slope = linregress(dists, np.log10(rates)).slope
        assert slope == pytest.approx(-0.01, rel=0.1)


class TestDetectionStatsValidation:
    def test_single_photon_gain_cannot_exceed_gain(self):
        with pytest.raises(ValueError):
            DetectionStats(gain=0.1, qber_z=0.0, phase_error_x=0.0, single_photon_gain=0.2)

    def test_qber_range(self):
        with pytest.raises(ValueError):
            DetectionStats(gain=0.1, qber_z=0.7, phase_error_x=0.0)
