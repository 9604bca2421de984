import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from doha.errors import DataError, ParameterError
from doha.signal import (
    Signal,
    SynthSpec,
    bandpass,
    detect_peaks,
    fft_hr_oracle,
    read_signal,
    resample_linear,
    synth_ppg,
    write_signal,
)


def sine(f_hz, fs=30.0, n=300, amp=1.0):
    return Signal(amp * np.sin(2 * np.pi * f_hz * np.arange(n) / fs), fs)


def rms(x):
    return float(np.sqrt(np.mean(np.square(x))))


class TestSignal:
    def test_rejects_non_finite(self):
        with pytest.raises(DataError):
            Signal([0.0, np.nan], 30)

    def test_rejects_bad_rate(self):
        with pytest.raises(ParameterError):
            Signal([0.0, 1.0], 0)

    def test_samples_are_read_only(self):
        s = Signal([1.0, 2.0], 10)
        with pytest.raises(ValueError):
            s.samples[0] = 5


class TestBandpass:
    def test_in_band_sinusoid_passes(self):
        x = sine(1.2)
        y = bandpass(x, 0.7, 3.5)
        core = slice(30, 270)
        # amplitude of the analytically known sinusoid is 1
        assert np.max(np.abs(y.samples[core] - x.samples[core])) < 0.02

    def test_out_of_band_sinusoid_removed(self):
        x = sine(0.2)
        assert rms(bandpass(x, 0.7, 3.5).samples) < 0.05 * rms(x.samples)

    def test_zero_signal(self):
        y = bandpass(Signal(np.zeros(64), 30), 0.7, 3.5)
        assert np.all(y.samples == 0)

    def test_output_mean_is_zero(self):
        rng = np.random.default_rng(1)
        y = bandpass(Signal(rng.normal(5, 1, 200), 30), 0.7, 3.5)
        assert abs(y.samples.mean()) < 1e-9
        assert len(y) == 200 and y.fs == 30

    @pytest.mark.parametrize("lo,hi", [(3.5, 0.7), (0.7, 15.0), (0.0, 3.5), (1.0, 1.0)])
    def test_invalid_band(self, lo, hi):
        with pytest.raises(ParameterError):
            bandpass(sine(1.0), lo, hi)

    def test_too_short(self):
        with pytest.raises(ParameterError):
            bandpass(Signal(np.ones(7), 30))

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        once = bandpass(Signal(rng.normal(size=301), 30))
        twice = bandpass(once)
        assert rms(once.samples - twice.samples) < 1e-6

    def test_linear(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=(2, 150))
        lhs = bandpass(Signal(a + b, 30)).samples
        rhs = bandpass(Signal(a, 30)).samples + bandpass(Signal(b, 30)).samples
        assert np.max(np.abs(lhs - rhs)) < 1e-9


class TestDetectPeaks:
    def test_all_local_maxima(self):
        assert detect_peaks([0, 1, 0, 1, 0], 1).tolist() == [1, 3]

    def test_tie_goes_to_smaller_index(self):
        assert detect_peaks([0, 1, 0, 1, 0], 3).tolist() == [1]

    def test_monotone_ramp(self):
        assert detect_peaks(np.arange(20.0), 1).tolist() == []

    def test_larger_peak_wins(self):
        assert detect_peaks([0, 1, 0, 3, 0], 3).tolist() == [3]

    def test_plateau_is_not_a_strict_maximum(self):
        assert detect_peaks([0, 2, 2, 0], 1).tolist() == []

    def test_bad_distance(self):
        with pytest.raises(ParameterError):
            detect_peaks([0, 1, 0], 0)

    @settings(max_examples=1000, deadline=None)
    @given(
        st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=0, max_size=60),
        st.integers(1, 12),
    )
    def test_spacing_property(self, values, dist):
        x = np.array(values, dtype=float)
        peaks = detect_peaks(x, dist)
        assert np.all(np.diff(peaks) >= dist)
        for i in peaks:
            assert x[i] > x[i - 1] and x[i] > x[i + 1]


class TestSynth:
    def test_exact_period(self):
        x = synth_ppg(SynthSpec(72, 30, 300)).samples
        assert np.allclose(x[25:], x[:-25], atol=1e-12)
        assert np.allclose(x, np.sin(2 * np.pi * 1.2 * np.arange(300) / 30), atol=1e-12)

    def test_delay_is_circular_shift(self):
        base = synth_ppg(SynthSpec(72, 30, 300)).samples
        delayed = synth_ppg(SynthSpec(72, 30, 300, delay_samples=7)).samples
        assert np.allclose(delayed, np.roll(base, 7), atol=1e-12)

    def test_deterministic(self):
        spec = SynthSpec(80, 30, 200, (0.3,), noise_sigma=0.4, trend_slope=0.01, seed=9)
        assert np.array_equal(synth_ppg(spec).samples, synth_ppg(spec).samples)

    def test_seed_changes_noise(self):
        a = synth_ppg(SynthSpec(80, 30, 200, noise_sigma=0.4, seed=1)).samples
        b = synth_ppg(SynthSpec(80, 30, 200, noise_sigma=0.4, seed=2)).samples
        assert not np.array_equal(a, b)

    def test_trend_and_harmonics(self):
        x = synth_ppg(SynthSpec(60, 30, 90, (0.5,), trend_slope=0.1)).samples
        t = np.arange(90)
        ph = 2 * np.pi * 1.0 * t / 30
        assert np.allclose(x, np.sin(ph) + 0.5 * np.sin(2 * ph) + 0.1 * t, atol=1e-12)

    @pytest.mark.parametrize("hr", [41.9, 210.1, 300])
    def test_hr_bounds(self, hr):
        with pytest.raises(ParameterError, match="42"):
            synth_ppg(SynthSpec(hr, 30, 100))

    def test_samples_per_beat(self):
        with pytest.raises(ParameterError):
            synth_ppg(SynthSpec(200, 10, 100))

    @pytest.mark.parametrize("hr,fs", [(72, 30), (60, 30), (90, 30), (48, 32), (120, 24)])
    def test_integer_period_is_exactly_periodic(self, hr, fs):
        p = int(round(60 * fs / hr))
        x = synth_ppg(SynthSpec(hr, fs, 5 * p, (0.4, 0.1))).samples
        assert np.allclose(x[p:], x[:-p], atol=1e-12)


class TestOracle:
    def test_72_bpm(self):
        assert fft_hr_oracle(sine(1.2)) == pytest.approx(72, abs=0.5)

    def test_150_bpm(self):
        assert fft_hr_oracle(sine(2.5)) == pytest.approx(150, abs=0.5)

    def test_dc_only(self):
        with pytest.raises(DataError):
            fft_hr_oracle(Signal(np.full(300, 5.0), 30))

    def test_too_short(self):
        with pytest.raises(ParameterError):
            fft_hr_oracle(Signal(np.ones(63), 30))

    @pytest.mark.parametrize("hr", [48, 72, 96, 120, 150, 180])
    @pytest.mark.parametrize("noise", [0.0, 0.1])
    def test_synth_recovered(self, hr, noise):
        for seed in range(5):
            x = synth_ppg(SynthSpec(hr, 30, 300, (0.4, 0.15), noise_sigma=noise, seed=seed))
            assert abs(fft_hr_oracle(x) - hr) <= 1.0


class TestResample:
    def test_identity(self):
        x = sine(1.1, n=97)
        y = resample_linear(x, 30)
        assert np.array_equal(y.samples, x.samples)

    def test_midpoint(self):
        y = resample_linear(Signal([0.0, 2.0], 1), 2)
        assert y.samples.tolist() == [0.0, 1.0, 2.0]
        assert y.fs == 2

    def test_ramp_stays_linear(self):
        x = Signal(0.3 * np.arange(250) + 2, 25)
        y = resample_linear(x, 30)
        t = np.arange(len(y)) / 30
        assert np.max(np.abs(y.samples - (0.3 * 25 * t + 2))) < 1e-9
        assert y.samples[0] == x.samples[0]

    def test_endpoints_preserved(self):
        x = Signal(np.random.default_rng(0).normal(size=31), 30)
        y = resample_linear(x, 60)
        assert y.samples[0] == x.samples[0] and y.samples[-1] == x.samples[-1]

    def test_too_short(self):
        with pytest.raises(ParameterError):
            resample_linear(Signal([1.0, 2.0], 30), 10)


class TestFiles:
    def test_json_roundtrip(self, tmp_path):
        x = synth_ppg(SynthSpec(72, 30, 50, noise_sigma=0.3, seed=4))
        write_signal(x, tmp_path / "s.json")
        assert json.loads((tmp_path / "s.json").read_text())["fs"] == 30
        y = read_signal(tmp_path / "s.json")
        assert np.array_equal(x.samples, y.samples) and y.fs == 30

    def test_csv_roundtrip(self, tmp_path):
        x = synth_ppg(SynthSpec(72, 30, 50, noise_sigma=0.3, seed=4))
        write_signal(x, tmp_path / "s.csv")
        assert (tmp_path / "s.csv").read_text().startswith("t,value\n")
        y = read_signal(tmp_path / "s.csv", fs=30)
        assert np.array_equal(x.samples, y.samples)

    def test_csv_needs_rate(self, tmp_path):
        write_signal(Signal([1.0, 2.0], 30), tmp_path / "s.csv")
        with pytest.raises(ParameterError):
            read_signal(tmp_path / "s.csv")
