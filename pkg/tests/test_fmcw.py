import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from fmcw_height.errors import InfeasibleSceneError
from fmcw_height.fmcw import (
    RadarConfig,
    TargetSpec,
    WindowKind,
    fast_time,
    next_pow2,
    range_doppler_map,
    range_profile,
    synthesize_cpi,
    tone_rows,
    window_coefficients,
)
from fmcw_height.geometry import (
    SPEED_OF_LIGHT,
    GroundModel,
    ScatteringModel,
    SceneGeometry,
    min_distance_bound,
    propagation_factor,
)

SMALL = RadarConfig(ramps_per_cpi=3, samples_per_ramp=24, ramp_duration=20e-6,
                    ramp_repetition_interval=25e-6, measurement_cycle=1e-3)
SHORT = RadarConfig(ramps_per_cpi=16, samples_per_ramp=512, ramp_duration=40e-6,
                    ramp_repetition_interval=50e-6, measurement_cycle=10e-3)


def peak_magnitude(cpi, window=WindowKind.RECTANGULAR):
    rd = range_doppler_map(cpi, window)
    i, j = np.unravel_index(np.argmax(rd.magnitude), rd.shape)
    return rd, rd.refine_peak(j, i)


class TestRadarConfig:
    def test_derived_quantities(self):
        cfg = RadarConfig()
        assert cfg.wavelength == pytest.approx(SPEED_OF_LIGHT / 76.5e9)
        assert cfg.range_resolution == pytest.approx(0.149896229, rel=1e-9)
        assert cfg.cpi_duration == pytest.approx(64 * 100e-6)
        assert cfg.max_range == pytest.approx(2048 * cfg.range_resolution)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(ramp_repetition_interval=50e-6, ramp_duration=80e-6),
            dict(measurement_cycle=1e-3),
            dict(samples_per_ramp=1),
            dict(noise_power=-1.0),
            dict(bandwidth=0.0),
        ],
    )
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            RadarConfig(**kwargs)

    def test_target_spec_validation(self):
        with pytest.raises(ValueError):
            TargetSpec(-1.0, 10.0)
        with pytest.raises(ValueError):
            TargetSpec(1.0, 0.0)
        with pytest.raises(ValueError):
            TargetSpec(1.0, 10.0, amplitude=0.0)
        assert TargetSpec(1.0, 10.0, 2.0).distance_at(1.5) == pytest.approx(13.0)


class TestHelpers:
    @pytest.mark.parametrize("n, expected", [(1, 1), (2, 2), (3, 4), (512, 512), (513, 1024), (1200, 2048)])
    def test_next_pow2(self, n, expected):
        assert next_pow2(n) == expected

    def test_windows(self):
        assert np.all(window_coefficients(WindowKind.RECTANGULAR, 8) == 1)
        w = window_coefficients(WindowKind.HANN, 9)
        assert np.allclose(w, w[::-1])
        assert w.max() == pytest.approx(1.0)
        assert np.all(w > 0)

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=5), st.integers(1, 2048))
    def test_tone_rows_match_exponential(self, starts, length):
        starts = np.array(starts)
        steps = starts[::-1] / 7.0
        got = tone_rows(starts, steps, length)
        ref = np.exp(1j * (starts[:, None] + steps[:, None] * np.arange(length)))
        assert np.max(np.abs(got - ref)) < 1e-12 * length + 1e-13


class TestSynthesis:
    def test_matches_per_sample_oracle(self):
        target = TargetSpec(1.2, 8.0, 3.0)
        cpi = synthesize_cpi(SMALL, [target], GroundModel(-1), 1.3, start_time=0.01)
        d = target.distance_at(0.01 + np.arange(3) * SMALL.ramp_repetition_interval)
        ref = oracles.beat_samples(SMALL, 1.3, 1.2, d)
        assert np.allclose(cpi.beat_samples, ref, rtol=0, atol=1e-9 * np.abs(ref).max())
        assert np.allclose(cpi.target_distances[0], d)

    def test_retroreflector_matches_oracle(self):
        target = TargetSpec(0.7, 9.0, -2.0, amplitude=3.0, scattering=ScatteringModel.RETROREFLECTOR)
        cpi = synthesize_cpi(SMALL, [target], GroundModel(-0.8), 1.3)
        d = target.distance_at(np.arange(3) * SMALL.ramp_repetition_interval)
        ref = oracles.beat_samples(SMALL, 1.3, 0.7, d, gamma=-0.8, cross_paths=False, amplitude=3.0)
        assert np.allclose(cpi.beat_samples, ref, rtol=0, atol=1e-9 * np.abs(ref).max())

    def test_linearity(self):
        a = TargetSpec(1.0, 20.0, 2.0)
        b = TargetSpec(0.4, 31.0, -4.0, amplitude=2.5, scattering=ScatteringModel.RETROREFLECTOR)
        g = GroundModel(-0.9)
        both = synthesize_cpi(SHORT, [a, b], g, 1.3, 0.2).beat_samples
        summed = synthesize_cpi(SHORT, [a], g, 1.3, 0.2).beat_samples + synthesize_cpi(SHORT, [b], g, 1.3, 0.2).beat_samples
        assert np.max(np.abs(both - summed)) <= 1e-12 * np.max(np.abs(both))

    def test_immutable(self):
        cpi = synthesize_cpi(SMALL, [TargetSpec(1.0, 5.0)], GroundModel(), 1.0)
        with pytest.raises(ValueError):
            cpi.beat_samples[0, 0] = 0
        assert cpi.beat_samples.shape == (3, 24)

    def test_rejects_target_at_zero_distance(self):
        with pytest.raises(InfeasibleSceneError):
            synthesize_cpi(SHORT, [TargetSpec(1.0, 0.01, -50.0)], GroundModel(), 1.0)

    def test_noise_power_and_reproducibility(self):
        cfg = RadarConfig(ramps_per_cpi=64, samples_per_ramp=512, ramp_duration=40e-6,
                          ramp_repetition_interval=50e-6, measurement_cycle=10e-3, noise_power=2e-3)
        a = synthesize_cpi(cfg, [], GroundModel(), 1.0, rng=np.random.default_rng(7)).beat_samples
        b = synthesize_cpi(cfg, [], GroundModel(), 1.0, rng=np.random.default_rng(7)).beat_samples
        assert np.array_equal(a, b)
        assert np.mean(np.abs(a) ** 2) == pytest.approx(2e-3, rel=0.02)
        assert abs(np.mean(a.real**2) - np.mean(a.imag**2)) < 0.05 * 2e-3

    def test_no_ground_peak_follows_inverse_square(self):
        for d in (10.0, 20.0, 35.0, 60.0):
            cpi = synthesize_cpi(SHORT, [TargetSpec(1.0, d, amplitude=2.0)], GroundModel(0.0), 1.3)
            _, (r_bin, _, mag) = peak_magnitude(cpi)
            assert mag * d * d == pytest.approx(2.0, rel=1e-6)

    def test_two_separated_targets(self):
        g = GroundModel(-1)
        a = TargetSpec(1.0, 30.0, amplitude=1.0)
        b = TargetSpec(0.5, 30.0 + 5 * SHORT.range_resolution, amplitude=2.0)
        both = range_doppler_map(synthesize_cpi(SHORT, [a, b], g, 1.3), WindowKind.HANN)
        for tg in (a, b):
            single = range_doppler_map(synthesize_cpi(SHORT, [tg], g, 1.3), WindowKind.HANN)
            i, j = np.unravel_index(np.argmax(single.magnitude), single.shape)
            _, _, ref = single.refine_peak(j, i)
            _, _, got = both.refine_peak(j, i)
            assert got == pytest.approx(ref, rel=0.05)
        profile = both.magnitude[both.zero_doppler_row]
        peaks = [k for k in range(1, profile.size - 1)
                 if profile[k] > profile[k - 1] and profile[k] > profile[k + 1] and profile[k] > 0.1 * profile.max()]
        assert len(peaks) == 2


class TestBridge:
    cfg = RadarConfig(ramps_per_cpi=2, samples_per_ramp=4096, ramp_duration=40e-6,
                      ramp_repetition_interval=40e-6, measurement_cycle=1e-3)

    def gate_magnitude(self, hs, ht, d):
        cpi = synthesize_cpi(self.cfg, [TargetSpec(ht, d)], GroundModel(-1), hs)
        _, (_, _, mag) = peak_magnitude(cpi)
        return mag * d * d

    def test_follows_propagation_factor_above_bound(self):
        hs, ht = 1.3, 1.0
        bound = min_distance_bound(SceneGeometry(hs, ht, 1.0), self.cfg.range_resolution)
        for d in np.linspace(bound * 1.5, 200.0, 40):
            ref = abs(propagation_factor(SceneGeometry(hs, ht, d), self.cfg.center_frequency))
            assert abs(self.gate_magnitude(hs, ht, d) - ref) / 4.0 < 0.02

    def test_breaks_down_below_bound(self):
        hs, ht = 1.3, 2.0
        bound = min_distance_bound(SceneGeometry(hs, ht, 1.0), self.cfg.range_resolution)
        devs = []
        for d in np.linspace(3.0, 0.5 * bound, 60):
            ref = abs(propagation_factor(SceneGeometry(hs, ht, d), self.cfg.center_frequency))
            devs.append(abs(self.gate_magnitude(hs, ht, d) - ref) / max(ref, 1e-3))
        assert max(devs) > 0.10


class TestRangeProfile:
    def test_tone_on_bin(self):
        n = 64
        x = np.exp(2j * np.pi * 13 * np.arange(n) / n)
        p = range_profile(x)
        assert p.size == 64
        assert int(np.argmax(np.abs(p))) == 13
        assert abs(p[13]) == pytest.approx(1.0)

    def test_zero_input(self):
        assert np.all(range_profile(np.zeros(40)) == 0)
        assert range_profile(np.zeros(40)).size == 64

    def _peaks(self, spacing):
        n = 64
        # phases aligned at the window centre, the usual resolution setting
        m = np.arange(n) - 0.5 * (n - 1)
        x = np.exp(2j * np.pi * 20 * m / n) + np.exp(2j * np.pi * (20 + spacing) * m / n)
        mag = np.abs(range_profile(x, fft_size=16 * n))
        return [k for k in range(1, mag.size - 1)
                if mag[k] > mag[k - 1] and mag[k] > mag[k + 1] and mag[k] > 0.5 * mag.max()]

    def test_resolution(self):
        assert len(self._peaks(1)) == 1
        assert len(self._peaks(4)) == 2

    def test_rejects_short_input(self):
        with pytest.raises(ValueError):
            range_profile(np.zeros(1))


class TestRangeDoppler:
    cfg = RadarConfig(ramps_per_cpi=32, samples_per_ramp=256, ramp_duration=40e-6,
                      ramp_repetition_interval=100e-6, measurement_cycle=10e-3)

    def _peak(self, v):
        cpi = synthesize_cpi(self.cfg, [TargetSpec(1.0, 20.0, v)], GroundModel(0.0), 1.3)
        rd = range_doppler_map(cpi)
        i, j = np.unravel_index(np.argmax(rd.magnitude), rd.shape)
        return rd, i, j

    def test_stationary_in_zero_doppler(self):
        rd, i, j = self._peak(0.0)
        assert i == rd.zero_doppler_row
        assert rd.bin_to_range(j) == pytest.approx(20.0, abs=rd.range_per_bin)

    def test_doppler_bin(self):
        rd, i, _ = self._peak(2.8)
        expected = 2 * 2.8 / self.cfg.wavelength * self.cfg.ramp_repetition_interval * rd.shape[0]
        assert i - rd.zero_doppler_row == round(expected)
        assert rd.bin_to_velocity(i) == pytest.approx(2.8, abs=rd.velocity_per_bin)

    def test_receding_and_approaching_mirror(self):
        rd, i_rec, _ = self._peak(2.8)
        _, i_app, _ = self._peak(-2.8)
        assert i_rec - rd.zero_doppler_row == rd.zero_doppler_row - i_app

    @settings(max_examples=15, deadline=None)
    @given(window=st.sampled_from(list(WindowKind)), pad_r=st.integers(0, 2), pad_d=st.integers(0, 2))
    def test_parseval(self, window, pad_r, pad_d):
        cfg = RadarConfig(ramps_per_cpi=12, samples_per_ramp=100, ramp_duration=40e-6,
                          ramp_repetition_interval=50e-6, measurement_cycle=10e-3, noise_power=1e-4)
        cpi = synthesize_cpi(cfg, [TargetSpec(1.0, 7.0, -3.0)], GroundModel(-1), 1.3, rng=np.random.default_rng(3))
        n_r, n_d = 128 << pad_r, 16 << pad_d
        rd = range_doppler_map(cpi, window, n_r, n_d)
        w_r = window_coefficients(window, 100)
        w_d = window_coefficients(window, 12)
        gain = (w_d[:, None] * w_r[None, :]) ** 2 / (w_r.sum() * w_d.sum()) ** 2
        beat_energy_weighted = np.sum(np.abs(cpi.beat_samples) ** 2 * gain)
        assert np.sum(np.abs(rd.data) ** 2) == pytest.approx(n_r * n_d * beat_energy_weighted, rel=1e-9)

    def test_evaluate_matches_grid(self):
        rd, i, j = self._peak(2.8)
        assert rd.evaluate(j, i) == pytest.approx(rd.data[i, j], rel=1e-10)

    def test_detected_amplitude_independent_of_padding(self):
        cpi = synthesize_cpi(self.cfg, [TargetSpec(1.0, 20.3, 1.7)], GroundModel(-1), 1.3)
        mags = []
        for n_r, n_d in [(256, 32), (1024, 64), (4096, 128)]:
            rd = range_doppler_map(cpi, WindowKind.HANN, n_r, n_d)
            i, j = np.unravel_index(np.argmax(rd.magnitude), rd.shape)
            mags.append(rd.refine_peak(j, i)[2])
        assert max(mags) / min(mags) - 1 < 0.01

    def test_fast_time_centred(self):
        t = fast_time(self.cfg)
        assert t.mean() == pytest.approx(0.0, abs=1e-18)
        assert t[1] - t[0] == pytest.approx(1 / self.cfg.sample_rate)
