"""TOF spectrometer: dispersion, calibration, spectra, JSI reconstruction."""

import numpy as np
import pytest

from etpakit.detection import read_timetags, write_timetags
from etpakit.model import C_LIGHT, bandwidth_from_wavelength
from etpakit.source import FrequencyPairSample, JsaModel, sample_pair_frequencies
from etpakit.spectrometry import (
    Calibration,
    DispersiveFiber,
    JsiHistogram,
    TofSpectrometer,
    _histogram_fwhm,
    calibrate,
    delays_from_timetags,
    detect_edges,
    disperse,
    jsi_histogram,
    marginal_spectrum,
    spectrum_from_timetags,
    timetags_from_pairs,
)


def make_fiber():
    return DispersiveFiber.from_ps_nm_km(1000.0, 40.0, 1064e-9)


def make_spectrometer(jitter=50e-12, timing="pulsed-clock"):
    return TofSpectrometer(fiber=make_fiber(), jitter_sigma_s=jitter,
                           timing=timing)


def make_pairs(n_per_mode=0.01, samples=50_000, seed=1, pump_hz=5e9):
    jsa = JsaModel.degenerate(1064e-9, 30e-9, pump_fwhm_hz=pump_hz)
    return sample_pair_frequencies(jsa, n_per_mode, samples, seed)


class TestDispersion:
    def test_reference_wavelength_has_zero_delay(self):
        assert disperse(1064e-9, make_fiber()) == 0.0

    def test_thirty_nm_offset_delay(self):
        # 40 ps/(nm km) * 1 km * 30 nm = 1.2 ns
        delay = disperse(1064e-9 + 30e-9, make_fiber())
        assert delay == pytest.approx(1.2e-9, rel=1e-9)

    def test_affine(self):
        fiber = make_fiber()
        d1 = disperse(1064e-9 + 5e-9, fiber)
        d2 = disperse(1064e-9 + 12e-9, fiber)
        d3 = disperse(1064e-9 + 17e-9, fiber)
        assert d1 + d2 == pytest.approx(d3, rel=1e-12)

    def test_fiber_validation(self):
        with pytest.raises(ValueError):
            DispersiveFiber(length_m=0.0, dispersion=4e-5,
                            reference_wavelength_m=1064e-9)
        with pytest.raises(ValueError):
            TofSpectrometer(fiber=make_fiber(), timing="bogus")

    def test_cw_relative_jitter_is_sqrt2(self):
        spec = make_spectrometer(jitter=50e-12, timing="cw-relative")
        assert spec.effective_jitter_s == pytest.approx(50e-12 * np.sqrt(2))


class TestCalibration:
    def flat_delay_histogram(self, lo_nm=1030.0, hi_nm=1100.0, bins=400,
                             samples=300_000, seed=3):
        rng = np.random.default_rng(seed)
        wl = rng.uniform(lo_nm * 1e-9, hi_nm * 1e-9, samples)
        delays = disperse(wl, make_fiber())
        pad = disperse(np.array([1020e-9, 1110e-9]), make_fiber())
        counts, edges = np.histogram(delays, bins=bins,
                                     range=(pad[0], pad[1]))
        return counts, edges

    def test_recovers_fiber_slope(self):
        counts, edges = self.flat_delay_histogram()
        cal = calibrate(counts, edges, [1030e-9, 1100e-9])
        expected = 1.0 / make_fiber().delay_per_wavelength
        assert cal.slope_m_per_s == pytest.approx(expected, rel=1e-2)

    def test_two_edges_interpolate_exactly(self):
        counts, edges = self.flat_delay_histogram()
        cal = calibrate(counts, edges, [1030e-9, 1100e-9])
        assert all(abs(r) < 1e-15 for r in cal.residuals_m)

    def test_edge_order_irrelevant(self):
        counts, edges = self.flat_delay_histogram()
        a = calibrate(counts, edges, [1030e-9, 1100e-9])
        b = calibrate(counts, edges, [1100e-9, 1030e-9])
        assert a.slope_m_per_s == b.slope_m_per_s
        assert a.intercept_m == b.intercept_m

    def test_residuals_below_one_bin(self):
        counts, edges = self.flat_delay_histogram()
        cal = calibrate(counts, edges, [1030e-9, 1100e-9])
        bin_width_m = cal.slope_m_per_s * (edges[1] - edges[0])
        assert all(abs(r) < bin_width_m for r in cal.residuals_m)

    def test_requires_two_edges(self):
        counts, edges = self.flat_delay_histogram()
        with pytest.raises(ValueError):
            calibrate(counts, edges, [1030e-9])

    def test_undetectable_edges_raise(self):
        edges = np.linspace(0.0, 1.0, 51)
        with pytest.raises(ValueError):
            detect_edges(np.zeros(50), edges, 2)

    def test_from_fiber_inverts_disperse(self):
        fiber = make_fiber()
        cal = Calibration.from_fiber(fiber)
        wl = 1071.3e-9
        assert cal.wavelength_at(disperse(wl, fiber)) == pytest.approx(
            wl, rel=1e-12)


class TestMarginalSpectrum:
    def test_round_trip_fwhm(self):
        pairs = make_pairs(samples=60_000, seed=11)
        spec = marginal_spectrum(pairs, make_spectrometer(), bins=120, seed=12)
        assert spec.fwhm_m() == pytest.approx(30e-9, rel=5e-2)

    def test_sample_count_does_not_bias_fwhm(self):
        small = marginal_spectrum(make_pairs(samples=30_000, seed=13),
                                  make_spectrometer(), bins=120, seed=14)
        large = marginal_spectrum(make_pairs(samples=120_000, seed=15),
                                  make_spectrometer(), bins=120, seed=16)
        assert small.fwhm_m() == pytest.approx(large.fwhm_m(), rel=5e-2)

    def test_delta_input_single_bin(self):
        nu0 = C_LIGHT / 1064e-9
        pairs = FrequencyPairSample(signal_hz=np.full(1000, nu0),
                                    idler_hz=np.full(1000, nu0),
                                    correlated=np.ones(1000, dtype=bool))
        spec = marginal_spectrum(pairs, make_spectrometer(jitter=0.0),
                                 bins=15, seed=17)
        assert np.count_nonzero(spec.counts) == 1

    def test_empty_stream_raises(self):
        pairs = FrequencyPairSample(signal_hz=np.empty(0),
                                    idler_hz=np.empty(0),
                                    correlated=np.empty(0, dtype=bool))
        with pytest.raises(ValueError):
            marginal_spectrum(pairs, make_spectrometer(), bins=10, seed=0)

    def test_merge(self):
        pairs = make_pairs(samples=5000, seed=18)
        spec = marginal_spectrum(pairs, make_spectrometer(), bins=40, seed=19)
        merged = spec + spec
        assert merged.counts.sum() == 2 * spec.counts.sum()
        with pytest.raises(ValueError):
            other = marginal_spectrum(pairs, make_spectrometer(), bins=39,
                                      seed=19)
            _ = spec + other

    def test_csv_shape(self):
        pairs = make_pairs(samples=2000, seed=20)
        spec = marginal_spectrum(pairs, make_spectrometer(), bins=10, seed=21)
        lines = spec.to_csv().strip().splitlines()
        assert lines[0] == "bin_center_m,count"
        assert len(lines) == 11


class TestJsi:
    def test_low_gain_ridge_dominates(self):
        pairs = make_pairs(n_per_mode=0.01, samples=200_000, seed=31)
        jsi = jsi_histogram(pairs, make_spectrometer(jitter=10e-12), bins=80,
                            seed=32)
        assert jsi.feature_peak_ratio() > 10.0

    def test_high_gain_features_equalize(self):
        pairs = make_pairs(n_per_mode=400.0, samples=1_000_000, seed=33)
        jsi = jsi_histogram(pairs, make_spectrometer(jitter=10e-12), bins=60,
                            seed=34)
        assert jsi.feature_peak_ratio() == pytest.approx(1.0, abs=0.1)

    def test_uncorrelated_input_is_product_form(self):
        pairs = make_pairs(n_per_mode=1e9, samples=400_000, seed=35)
        assert not pairs.correlated.any()
        jsi = jsi_histogram(pairs, make_spectrometer(jitter=0.0), bins=40,
                            seed=36)
        mx = jsi.counts.sum(axis=1).astype(float)
        my = jsi.counts.sum(axis=0).astype(float)
        expected = np.outer(mx, my) / jsi.counts.sum()
        # Poisson-consistent in every populated cell
        resid = np.abs(jsi.counts - expected) / np.sqrt(expected + 1.0)
        assert np.mean(resid < 4.0) > 0.99

    def test_ridge_width_tracks_pump(self):
        pump_hz = 2e12
        pairs = make_pairs(n_per_mode=0.01, samples=400_000, seed=37,
                           pump_hz=pump_hz)
        jsi = jsi_histogram(pairs, make_spectrometer(jitter=0.0), bins=150,
                            seed=38)
        profile = jsi.antidiagonal_profile()
        step = jsi.wavelength_edges_m[1] - jsi.wavelength_edges_m[0]
        axis = np.arange(profile.size) * step
        width = _histogram_fwhm(axis, profile)
        expected = (1064e-9) ** 2 / C_LIGHT * pump_hz
        assert width == pytest.approx(expected, rel=0.2)

    def test_marginals_match_marginal_spectrum(self):
        pairs = make_pairs(samples=100_000, seed=39)
        spectrometer = make_spectrometer()
        jsi = jsi_histogram(pairs, spectrometer, bins=100, seed=40)
        direct = marginal_spectrum(pairs, spectrometer, bins=100, seed=41)
        assert jsi.marginal(0).fwhm_m() == pytest.approx(direct.fwhm_m(),
                                                         rel=5e-2)
        assert jsi.marginal(1).fwhm_m() == pytest.approx(direct.fwhm_m(),
                                                         rel=5e-2)

    def test_profiles_conserve_counts(self):
        pairs = make_pairs(samples=5000, seed=42)
        jsi = jsi_histogram(pairs, make_spectrometer(), bins=30, seed=43)
        assert jsi.antidiagonal_profile().sum() == jsi.counts.sum()
        assert jsi.diagonal_profile().sum() == jsi.counts.sum()


class TestTimeTagBridge:
    def test_spectrum_survives_timetag_encoding(self, tmp_path):
        # file timestamps quantize to 1 ns, so the instrument needs enough
        # dispersion for the spectrum to span many nanoseconds
        pairs = make_pairs(samples=40_000, seed=51)
        fiber = DispersiveFiber.from_ps_nm_km(25_000.0, 40.0, 1064e-9)
        spectrometer = TofSpectrometer(fiber=fiber, jitter_sigma_s=50e-12)
        stream = timetags_from_pairs(pairs, spectrometer, rep_rate_hz=1e6,
                                     seed=52)
        path = str(tmp_path / "tof.timetags.csv")
        write_timetags(stream, path)
        back = read_timetags(path)
        spec = spectrum_from_timetags(back, spectrometer, bins=120)
        assert spec.fwhm_m() == pytest.approx(30e-9, rel=5e-2)

    def test_delays_reference_preceding_sync(self):
        pairs = make_pairs(samples=1000, seed=53)
        spectrometer = make_spectrometer(jitter=0.0)
        stream = timetags_from_pairs(pairs, spectrometer, rep_rate_hz=1e6,
                                     seed=54)
        delays = delays_from_timetags(stream)
        assert delays.size == 2000
        period = 1e-6
        assert np.all(delays >= 0.0)
        assert np.all(delays < period)

    def test_rep_rate_too_fast_raises(self):
        pairs = make_pairs(samples=1000, seed=55)
        with pytest.raises(ValueError):
            timetags_from_pairs(pairs, make_spectrometer(), rep_rate_hz=1e9,
                                seed=56)

    def test_missing_sync_raises(self):
        pairs = make_pairs(samples=100, seed=57)
        spectrometer = make_spectrometer()
        stream = timetags_from_pairs(pairs, spectrometer, rep_rate_hz=1e6,
                                     seed=58)
        stream.channels[:] = 0
        with pytest.raises(ValueError):
            delays_from_timetags(stream)
