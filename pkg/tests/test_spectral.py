import numpy as np
import pytest
import scipy.signal
from hypothesis import given
from hypothesis import strategies as st

from swaybench.errors import (
    BandCoverageError,
    ConfigError,
    DegenerateStimulusError,
)
from swaybench.prts import analysis_peaks
from swaybench.spectral import (
    BAND_CENTERS_HZ,
    BandSpec,
    PeakSpectrum,
    analysis_segment,
    band_average_complex,
    compute_frf,
    default_grid,
    estimate_frf,
    estimate_frf_banded,
    make_bands,
    peak_spectrum,
    single_bin_dft,
    spectral_weights,
    stimulus_weights,
)


class TestSingleBinDft:
    def test_unit_cosine_gives_one(self):
        n = 2000
        x = np.cos(2 * np.pi * 0.05 * np.arange(n) / 100.0)
        assert abs(single_bin_dft(x, 0.05, 100.0) - 1.0) <= 1e-9

    def test_zero_signal(self):
        assert single_bin_dft(np.zeros(2000), 0.05, 100.0) == 0.0

    def test_matches_dense_fft_oracle(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(2000)
        full = np.fft.fft(x)
        for k in (1, 7, 40):
            freq = k * 100.0 / 2000
            got = single_bin_dft(x, freq, 100.0)
            want = 2.0 * full[k] / 2000
            assert abs(got - want) <= 1e-9 * max(1.0, abs(want))

    def test_non_integer_cycles_rejected(self):
        with pytest.raises(ConfigError):
            single_bin_dft(np.zeros(2000), 0.0503, 100.0)

    def test_amplitude_and_phase_recovered(self):
        n = 4000
        t = np.arange(n) / 100.0
        x = 0.7 * np.cos(2 * np.pi * 0.25 * t + 0.4)
        got = single_bin_dft(x, 0.25, 100.0)
        assert abs(got - 0.7 * np.exp(0.4j)) <= 1e-9


class TestMakeBands:
    def test_centers_match_published_values(self, bands):
        np.testing.assert_allclose(bands.centers, BAND_CENTERS_HZ, atol=1e-12)

    def test_first_band_is_two_lowest_peaks(self, bands):
        np.testing.assert_allclose(
            bands.grid.f_peak[bands.bands[0]], [0.05, 0.15]
        )

    def test_third_band_membership(self, bands):
        np.testing.assert_allclose(
            bands.grid.f_peak[bands.bands[2]], [0.45, 0.55, 0.65, 0.75]
        )

    def test_each_center_is_mean_of_members(self, bands):
        for idx, center in zip(bands.bands, bands.centers):
            assert abs(bands.grid.f_peak[idx].mean() - center) <= 1e-12

    def test_adjacent_bands_share_boundary_peaks(self, bands):
        # overlap everywhere except the final pair, where the published
        # 4.4 Hz center only admits {4.35, 4.45} from a <=4.45 Hz grid
        for k in range(len(bands) - 2):
            assert set(bands.bands[k]) & set(bands.bands[k + 1])

    def test_short_grid_rejected(self):
        with pytest.raises(BandCoverageError):
            make_bands(analysis_peaks(0.05, 2.45))

    def test_centers_strictly_increasing(self, bands):
        assert np.all(np.diff(bands.centers) > 0)


class TestBandAverage:
    def test_constant_spectrum(self, bands):
        c = 0.3 - 0.7j
        spec = PeakSpectrum(np.full(len(bands.grid), c), bands.grid)
        np.testing.assert_allclose(band_average_complex(spec, bands), c)

    def test_two_value_mean(self, bands):
        vals = np.zeros(len(bands.grid), dtype=complex)
        vals[bands.bands[0]] = [1.0, 1.0j]
        spec = PeakSpectrum(vals, bands.grid)
        got = band_average_complex(spec, bands)
        assert got[0] == 0.5 + 0.5j

    def test_matches_bruteforce_mean(self, bands):
        rng = np.random.default_rng(3)
        vals = rng.standard_normal(len(bands.grid)) + 1j * rng.standard_normal(
            len(bands.grid)
        )
        spec = PeakSpectrum(vals, bands.grid)
        got = band_average_complex(spec, bands)
        for k, idx in enumerate(bands.bands):
            acc = 0.0 + 0.0j
            for i in idx:
                acc += vals[i]
            assert got[k] == acc / len(idx)

    def test_singleton_band_mean(self):
        grid = analysis_peaks(0.05, 0.05)
        band = BandSpec(
            bands=(np.array([0]),), centers=np.array([0.05]), grid=grid
        )
        spec = PeakSpectrum(np.array([2.0 + 1.0j]), grid)
        np.testing.assert_allclose(
            band_average_complex(spec, band), [2.0 + 1.0j]
        )

    @given(
        a=st.floats(-3, 3),
        b=st.floats(-3, 3),
        seed=st.integers(0, 1000),
    )
    def test_linearity(self, bands, a, b, seed):
        rng = np.random.default_rng(seed)
        n = len(bands.grid)
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        y = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        lhs = band_average_complex(PeakSpectrum(a * x + b * y, bands.grid), bands)
        rhs = a * band_average_complex(
            PeakSpectrum(x, bands.grid), bands
        ) + b * band_average_complex(PeakSpectrum(y, bands.grid), bands)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_grid_mismatch_rejected(self, bands):
        other = analysis_peaks(0.05, 2.45)
        spec = PeakSpectrum(np.zeros(len(other), dtype=complex), other)
        with pytest.raises(ConfigError):
            band_average_complex(spec, bands)


class TestEstimateFrf:
    def test_identity_system(self, bands):
        u = np.full(11, 0.3 + 0.1j)
        frf = estimate_frf(u, u.copy(), bands.centers)
        np.testing.assert_allclose(frf.values, np.ones(11), atol=1e-12)

    def test_zero_component_raises_degenerate(self, bands):
        u = np.ones(11, dtype=complex)
        u[4] = 0.0
        with pytest.raises(DegenerateStimulusError) as err:
            estimate_frf(u, u, bands.centers)
        assert "band 5" in str(err.value)

    @given(c=st.floats(-5, 5).filter(lambda v: abs(v) > 1e-3))
    def test_scale_equivariance(self, bands, c):
        rng = np.random.default_rng(11)
        u = rng.standard_normal(11) + 1j * rng.standard_normal(11)
        y = rng.standard_normal(11) + 1j * rng.standard_normal(11)
        base = estimate_frf(u, y, bands.centers).values
        scaled_y = estimate_frf(u, c * y, bands.centers).values
        scaled_u = estimate_frf(c * u, y, bands.centers).values
        np.testing.assert_allclose(scaled_y, c * base, rtol=1e-12)
        np.testing.assert_allclose(scaled_u, base / c, rtol=1e-12)

    def test_length_mismatch_rejected(self, bands):
        with pytest.raises(ConfigError):
            estimate_frf(np.ones(11), np.ones(10), bands.centers)


class TestPipeline:
    def test_identity_response(self, stimulus, bands):
        frf = compute_frf(stimulus, stimulus.samples.copy(), bands)
        np.testing.assert_allclose(frf.values, np.ones(11), atol=1e-12)

    def test_first_order_lowpass_matches_banded_oracle(self, stimulus, bands):
        # tau = 0.5 s varies noticeably across low bands, so the analytic
        # oracle is the input-power-weighted band average of H
        tau = 0.5
        sys = scipy.signal.lti([1.0], [tau, 1.0])
        _, y, _ = scipy.signal.lsim(sys, stimulus.samples, stimulus.t)
        frf = compute_frf(stimulus, y, bands, discard_periods=1)

        tilt_seg, _ = analysis_segment(stimulus, stimulus.samples, 1)
        u = peak_spectrum(tilt_seg, bands.grid, stimulus.sample_rate)
        for k, idx in enumerate(bands.bands):
            if bands.centers[k] > 1.55:
                break
            p = np.abs(u.values[idx]) ** 2
            h = 1.0 / (tau * 2j * np.pi * bands.grid.f_peak[idx] + 1.0)
            oracle = np.sum(p * h) / p.sum()
            assert abs(abs(frf.values[k]) / abs(oracle) - 1.0) <= 0.02
            assert abs(np.degrees(np.angle(frf.values[k] / oracle))) <= 2.0

    def test_smooth_lowpass_matches_center_frequencies(self, stimulus, bands):
        tau = 0.05
        sys = scipy.signal.lti([1.0], [tau, 1.0])
        _, y, _ = scipy.signal.lsim(sys, stimulus.samples, stimulus.t)
        frf = compute_frf(stimulus, y, bands, discard_periods=1)
        mask = bands.centers <= 1.55
        h = 1.0 / (tau * 2j * np.pi * bands.centers[mask] + 1.0)
        assert np.abs(np.abs(frf.values[mask]) / np.abs(h) - 1.0).max() <= 0.02
        assert np.abs(np.degrees(np.angle(frf.values[mask] / h))).max() <= 2.0

    def test_trace_length_mismatch_rejected(self, stimulus, bands):
        with pytest.raises(ConfigError):
            compute_frf(stimulus, stimulus.samples[:-1], bands)

    def test_degenerate_stimulus_rejected(self, stimulus, bands):
        from dataclasses import replace

        silent = replace(stimulus, samples=np.zeros_like(stimulus.samples))
        with pytest.raises(DegenerateStimulusError):
            compute_frf(silent, np.zeros_like(stimulus.samples), bands)


class TestSpectralWeights:
    def test_unit_spectrum_band_sizes(self, bands):
        spec = PeakSpectrum(np.ones(len(bands.grid), dtype=complex), bands.grid)
        w = spectral_weights(spec, bands).w
        sizes = np.array([len(idx) for idx in bands.bands])
        # pre-normalization value is sqrt(band size): a 4-peak band gives 2
        np.testing.assert_allclose(
            w * np.sqrt(sizes.max()), np.sqrt(sizes), rtol=1e-12
        )

    def test_prts_profile_decreasing_and_tiny_at_top(self, stimulus, bands):
        w = stimulus_weights(stimulus, bands).w
        assert w[0] == 1.0
        assert np.all(np.diff(w) <= 1e-12)
        assert np.all(w[-2:] < 0.05)

    def test_matches_bruteforce_sum(self, bands):
        rng = np.random.default_rng(7)
        n = len(bands.grid)
        vals = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        w = spectral_weights(PeakSpectrum(vals, bands.grid), bands).w
        raw = []
        for idx in bands.bands:
            acc = 0.0
            for i in idx:
                acc += abs(vals[i]) ** 2
            raw.append(np.sqrt(acc))
        raw = np.array(raw)
        np.testing.assert_allclose(w, raw / raw.max(), rtol=1e-12)

    def test_all_zero_spectrum_rejected(self, bands):
        spec = PeakSpectrum(np.zeros(len(bands.grid), dtype=complex), bands.grid)
        with pytest.raises(ConfigError):
            spectral_weights(spec, bands)


class TestAnalysisSegment:
    def test_discards_leading_periods(self, stimulus):
        tilt, sway = analysis_segment(stimulus, stimulus.samples, 2)
        n = stimulus.samples_per_period
        assert len(tilt) == (stimulus.n_periods - 2) * n
        assert np.array_equal(tilt, sway)

    def test_invalid_discard_rejected(self, stimulus):
        with pytest.raises(ConfigError):
            analysis_segment(stimulus, stimulus.samples, stimulus.n_periods)
