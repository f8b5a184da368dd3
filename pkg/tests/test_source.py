"""Squeezed-vacuum sampler: photon statistics, loss, joint-spectral draws."""

import math

import numpy as np
import pytest

from etpakit import source
from etpakit.model import PhaseMatching, bandwidth_from_wavelength
from etpakit.source import (
    FWHM_TO_SIGMA,
    JsaModel,
    apply_loss,
    apply_loss_batch,
    correlated_fraction,
    g2_from_counts,
    sample_pair_frequencies,
    sample_pulse,
    sample_pulse_batch,
    sample_total_photons,
    schmidt_mode_estimate,
    squeezed_pair_pmf,
    substream,
)

T0 = PhaseMatching.TYPE_0_OR_I
T2 = PhaseMatching.TYPE_II


class TestPairPmf:
    @pytest.mark.parametrize("n", [0.05, 0.5, 5.0, 50.0])
    def test_moments_match_squeezed_vacuum(self, n):
        # oracle: direct moment sums of the truncated series
        pmf = squeezed_pair_pmf(n)
        m = np.arange(len(pmf))
        photons = 2 * m
        mean = float(np.sum(pmf * photons))
        var = float(np.sum(pmf * photons**2)) - mean**2
        assert pmf.sum() == pytest.approx(1.0, abs=1e-11)
        assert mean == pytest.approx(n, rel=1e-9)
        assert var == pytest.approx(2.0 * n * (n + 1.0), rel=1e-8)

    def test_zero_gain_is_vacuum(self):
        pmf = squeezed_pair_pmf(0.0)
        assert pmf.tolist() == [1.0]


class TestSamplerStatistics:
    def test_g2_low_gain_example(self):
        batch = sample_pulse_batch(0.1, 1, T0, 1_000_000, seed=101)
        g2, _ = g2_from_counts(batch.total_photons())
        assert g2 == pytest.approx(13.0, rel=3e-2)

    def test_g2_high_gain_example(self):
        batch = sample_pulse_batch(50.0, 1, T0, 1_000_000, seed=102)
        g2, _ = g2_from_counts(batch.total_photons())
        assert g2 == pytest.approx(3.02, rel=2e-2)

    @pytest.mark.parametrize("pm,offset", [(T0, 3.0), (T2, 2.0)])
    @pytest.mark.parametrize("n", [0.05, 0.5, 5.0, 50.0])
    def test_faithful_to_closed_form(self, pm, offset, n):
        batch = sample_pulse_batch(n, 1, pm, 300_000, seed=7)
        g2, se = g2_from_counts(batch.total_photons())
        assert abs(g2 - (1.0 / n + offset)) < 3.0 * se

    def test_zero_gain_all_zero(self):
        s = sample_pulse(0.0, 4, T0, seed=1)
        assert s.total_photons == 0
        assert s.total_pairs == 0

    def test_type0_photon_counts_even(self):
        batch = sample_pulse_batch(1.5, 3, T0, 10_000, seed=3)
        assert np.all(batch.photons % 2 == 0)
        assert np.array_equal(batch.photons, 2 * batch.pairs)

    def test_multimode_dilution(self):
        # g2 of the summed photon number over M modes: 1 + (g2_single - 1)/M
        m = 100
        totals = sample_total_photons(0.5, m, T0, 100_000, seed=5)
        g2, se = g2_from_counts(totals)
        expected = 1.0 + (5.0 - 1.0) / m
        assert abs(g2 - expected) < 3.0 * se

    def test_mean_photons_per_mode(self):
        batch = sample_pulse_batch(5.0, 2, T2, 200_000, seed=9)
        assert batch.photons.mean() == pytest.approx(5.0, rel=1e-2)

    def test_deterministic_under_seed(self):
        a = sample_pulse_batch(0.8, 4, T0, 1000, seed=42)
        b = sample_pulse_batch(0.8, 4, T0, 1000, seed=42)
        assert np.array_equal(a.photons, b.photons)
        s1 = sample_pulse(0.8, 4, T0, seed=42)
        assert np.array_equal(s1.per_mode_photons, a.photons[0])

    def test_substreams_differ_and_repeat(self):
        x = substream(1, 0).random(10)
        y = substream(1, 1).random(10)
        assert not np.allclose(x, y)
        assert np.array_equal(x, substream(1, 0).random(10))
        with pytest.raises(ValueError):
            substream(-1, 0)


class TestLoss:
    def test_unit_transmission_is_identity(self):
        s = sample_pulse(2.0, 5, T0, seed=11)
        out = apply_loss(s, 1.0, seed=12)
        assert np.array_equal(out.per_mode_photons, s.per_mode_photons)
        assert np.array_equal(out.per_mode_pairs, s.per_mode_pairs)

    def test_zero_transmission_empties(self):
        s = sample_pulse(2.0, 5, T0, seed=11)
        out = apply_loss(s, 0.0, seed=12)
        assert out.total_photons == 0
        assert out.total_pairs == 0

    def test_eta_out_of_range_raises(self):
        s = sample_pulse(1.0, 1, T0, seed=11)
        with pytest.raises(ValueError):
            apply_loss(s, 1.5, seed=0)
        with pytest.raises(ValueError):
            apply_loss(s, -0.1, seed=0)

    def test_intact_pairs_thin_quadratically(self):
        # oracle: both photons survive independently -> eta^2 per pair
        batch = sample_pulse_batch(4.0, 1, T0, 1_000_000, seed=21)
        lost = apply_loss_batch(batch, 0.5, seed=22)
        ratio = lost.pairs.sum() / batch.pairs.sum()
        assert ratio == pytest.approx(0.25, rel=2e-2)

    def test_photons_thin_linearly(self):
        batch = sample_pulse_batch(4.0, 1, T0, 500_000, seed=23)
        lost = apply_loss_batch(batch, 0.3, seed=24)
        assert lost.photons.sum() / batch.photons.sum() == pytest.approx(
            0.3, rel=2e-2)

    def test_scaling_exponents(self):
        etas = np.array([0.1, 0.2, 0.4, 0.7, 1.0])
        singles, pairs = [], []
        batch = sample_pulse_batch(2.0, 1, T0, 200_000, seed=31)
        for i, eta in enumerate(etas):
            lost = apply_loss_batch(batch, float(eta), seed=100 + i)
            singles.append(lost.photons.mean())
            pairs.append(lost.pairs.mean())
        slope_singles = np.polyfit(np.log(etas), np.log(singles), 1)[0]
        slope_pairs = np.polyfit(np.log(etas), np.log(pairs), 1)[0]
        assert slope_singles == pytest.approx(1.0, abs=0.05)
        assert slope_pairs == pytest.approx(2.0, abs=0.05)

    def test_losses_compose(self):
        # thinning by 0.6 then 0.5 matches thinning by 0.3 in distribution
        batch = sample_pulse_batch(3.0, 1, T0, 400_000, seed=41)
        two_step = apply_loss_batch(apply_loss_batch(batch, 0.6, seed=42),
                                    0.5, seed=43)
        one_step = apply_loss_batch(batch, 0.3, seed=44)
        assert two_step.photons.mean() == pytest.approx(
            one_step.photons.mean(), rel=2e-2)
        assert two_step.pairs.mean() == pytest.approx(
            one_step.pairs.mean(), rel=3e-2)

    def test_lone_photons_not_counted_as_pairs(self):
        batch = sample_pulse_batch(3.0, 2, T0, 50_000, seed=51)
        lost = apply_loss_batch(batch, 0.5, seed=52)
        assert np.all(lost.photons >= 2 * lost.pairs)
        assert lost.photons.sum() > 2 * lost.pairs.sum()


class TestG2Estimator:
    def test_rejects_degenerate_input(self):
        with pytest.raises(ValueError):
            g2_from_counts([3])
        with pytest.raises(ValueError):
            g2_from_counts([0, 0, 0])

    def test_poisson_counts_give_unity(self):
        rng = np.random.default_rng(3)
        counts = rng.poisson(5.0, 500_000)
        g2, se = g2_from_counts(counts)
        assert abs(g2 - 1.0) < 3.0 * se
        assert g2 == pytest.approx(1.0, abs=1e-2)


class TestJointSpectrum:
    def make_jsa(self, pump_hz=5e9):
        return JsaModel.degenerate(1064e-9, 30e-9, pump_fwhm_hz=pump_hz)

    def test_degenerate_marginal_construction(self):
        jsa = self.make_jsa()
        marg = bandwidth_from_wavelength(1064e-9, 30e-9)
        assert jsa.marginal_fwhm_hz == pytest.approx(marg, rel=1e-9)

    def test_cw_limit_exact_anticorrelation(self):
        jsa = self.make_jsa(pump_hz=0.0)
        pairs = sample_pair_frequencies(jsa, 0.01, 20_000, seed=61)
        corr = pairs.correlated
        sums = pairs.signal_hz[corr] + pairs.idler_hz[corr]
        assert np.allclose(sums, 2.0 * jsa.center_signal_hz, rtol=1e-12)

    def test_correlated_fraction_tracks_gain(self):
        jsa = self.make_jsa()
        for n in (0.01, 1.0, 40.0):
            pairs = sample_pair_frequencies(jsa, n, 200_000, seed=62)
            frac = pairs.correlated.mean()
            assert frac == pytest.approx(correlated_fraction(n), abs=5e-3)

    def test_low_gain_sum_spread_is_pump_limited(self):
        jsa = self.make_jsa(pump_hz=5e9)
        pairs = sample_pair_frequencies(jsa, 0.01, 100_000, seed=63)
        corr = pairs.correlated
        sums = pairs.signal_hz[corr] + pairs.idler_hz[corr] \
            - 2.0 * jsa.center_signal_hz
        assert np.std(sums) == pytest.approx(FWHM_TO_SIGMA * 5e9, rel=2e-2)

    def test_marginal_independent_of_gain(self):
        # correlated and uncorrelated draws share the same marginal
        jsa = self.make_jsa()
        s_marg = FWHM_TO_SIGMA * jsa.marginal_fwhm_hz
        for n in (0.01, 100.0):
            pairs = sample_pair_frequencies(jsa, n, 200_000, seed=64)
            assert np.std(pairs.signal_hz) == pytest.approx(s_marg, rel=1e-2)
            assert np.std(pairs.idler_hz) == pytest.approx(s_marg, rel=1e-2)

    def test_wavelength_view(self):
        jsa = self.make_jsa()
        pairs = sample_pair_frequencies(jsa, 0.1, 1000, seed=65)
        assert np.median(pairs.signal_wavelength_m) == pytest.approx(
            1064e-9, rel=1e-2)

    def test_validation(self):
        with pytest.raises(ValueError):
            JsaModel(center_signal_hz=0.0, center_idler_hz=1e14,
                     pump_fwhm_hz=1e9, phasematch_fwhm_hz=1e12)
        with pytest.raises(ValueError):
            JsaModel(center_signal_hz=1e14, center_idler_hz=1e14,
                     pump_fwhm_hz=1e9, phasematch_fwhm_hz=0.0)
        with pytest.raises(ValueError):
            # pump wider than twice the marginal is unrealizable
            JsaModel.degenerate(1064e-9, 1e-12, pump_fwhm_hz=1e15)


def schmidt_number_svd(pump_fwhm, phasematch_fwhm, grid=600):
    """Numerical Schmidt mode count via SVD of the discretized amplitude."""
    s_sum = FWHM_TO_SIGMA * pump_fwhm
    s_diff = FWHM_TO_SIGMA * phasematch_fwhm
    half = 4.0 * max(s_sum, s_diff)
    ax = np.linspace(-half, half, grid)
    x, y = np.meshgrid(ax, ax, indexing="ij")
    s, d = x + y, x - y
    # intensity std s  ->  amplitude std sqrt(2) s
    amp = np.exp(-(s**2) / (8.0 * s_sum**2) - (d**2) / (8.0 * s_diff**2))
    sv = np.linalg.svd(amp, compute_uv=False)
    lam = sv**2 / np.sum(sv**2)
    return 1.0 / np.sum(lam**2)


class TestSchmidtModes:
    def test_separable_limit(self):
        jsa = JsaModel(center_signal_hz=2.8e14, center_idler_hz=2.8e14,
                       pump_fwhm_hz=1e12, phasematch_fwhm_hz=1e12)
        assert schmidt_mode_estimate(jsa) == pytest.approx(1.0, rel=1e-12)

    def test_scale_invariance(self):
        a = JsaModel(2.8e14, 2.8e14, 1e11, 8e11)
        b = JsaModel(2.8e14, 2.8e14, 3e11, 24e11)
        assert schmidt_mode_estimate(a) == pytest.approx(
            schmidt_mode_estimate(b), rel=1e-12)

    @pytest.mark.parametrize("ratio", [1.0, 2.5, 8.0])
    def test_against_svd_oracle(self, ratio):
        pump = 1e11
        jsa = JsaModel(2.8e14, 2.8e14, pump, ratio * pump)
        analytic = schmidt_mode_estimate(jsa)
        numeric = schmidt_number_svd(pump, ratio * pump)
        assert analytic == pytest.approx(numeric, rel=2e-2)

    def test_pulsed_source_mode_count(self):
        # width ratio of ~200 models the pulse-pumped source
        marginal = bandwidth_from_wavelength(1064e-9, 30e-9)
        pump = 2.0 * marginal / 200.0
        jsa = JsaModel.degenerate(1064e-9, 30e-9, pump_fwhm_hz=pump)
        m = schmidt_mode_estimate(jsa)
        assert m == pytest.approx(100.0, rel=0.2)

    def test_cw_limit_undefined(self):
        jsa = JsaModel.degenerate(1064e-9, 30e-9, pump_fwhm_hz=0.0)
        with pytest.raises(ValueError):
            schmidt_mode_estimate(jsa)
