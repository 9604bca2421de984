"""Uniformly sampled 1-D signals: filtering, peaks, synthesis and a spectral HR oracle.

Everything here is a pure function of its inputs. Randomness only enters
through :func:`synth_ppg`, which draws from ``numpy.random.default_rng(seed)``
(PCG64), so a given seed reproduces the same samples on every run of the
same numpy build.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, ParameterError

HR_MIN_BPM = 42.0
HR_MAX_BPM = 210.0
CARDIAC_BAND = (0.7, 3.5)


@dataclass(frozen=True)
class Signal:
    """A finite, uniformly sampled waveform."""

    samples: np.ndarray
    fs: float

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 1 or x.size < 1:
            raise ParameterError("samples must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(x)):
            raise DataError("samples contain non-finite values")
        if not (self.fs > 0 and math.isfinite(self.fs)):
            raise ParameterError(f"fs must be positive, got {self.fs}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "fs", float(self.fs))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.fs


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of a harmonic-sum pulse waveform.

    ``harmonic_amps`` holds the relative amplitudes of harmonics 2..K (the
    fundamental has amplitude 1). ``delay_samples`` shifts the phase of the
    periodic part; ``noise_sigma`` is the std of additive white Gaussian noise.
    """

    hr_bpm: float
    fs: float = 30.0
    n_frames: int = 300
    harmonic_amps: Sequence[float] = field(default_factory=tuple)
    noise_sigma: float = 0.0
    delay_samples: int = 0
    trend_slope: float = 0.0
    seed: int = 0

    def validate(self):
        if not (HR_MIN_BPM <= self.hr_bpm <= HR_MAX_BPM):
            raise ParameterError(
                f"hr_bpm={self.hr_bpm} outside [{HR_MIN_BPM:g}, {HR_MAX_BPM:g}] bpm"
            )
        if not self.fs > 0:
            raise ParameterError(f"fs must be positive, got {self.fs}")
        if int(self.n_frames) != self.n_frames or self.n_frames < 1:
            raise ParameterError(f"n_frames must be a positive integer, got {self.n_frames}")
        if 60.0 * self.fs / self.hr_bpm < 4:
            raise ParameterError("fewer than 4 samples per beat; raise fs or lower hr_bpm")
        if self.noise_sigma < 0:
            raise ParameterError("noise_sigma must be >= 0")
        if int(self.delay_samples) != self.delay_samples or self.delay_samples < 0:
            raise ParameterError("delay_samples must be a non-negative integer")

    @property
    def period_samples(self) -> float:
        return 60.0 * self.fs / self.hr_bpm


def bandpass(signal: Signal, lo_hz: float = CARDIAC_BAND[0], hi_hz: float = CARDIAC_BAND[1]) -> Signal:
    """Zero-phase band-pass by hard masking of DFT bins.

    Every bin whose frequency lies outside ``[lo_hz, hi_hz]`` is set to zero
    and the result is transformed back. The operation is linear, exactly
    idempotent and preserves length and sample rate.

    Raises:
        ParameterError: if the band is empty or reaches Nyquist, or the
            signal has fewer than 8 samples.
    """
    nyquist = signal.fs / 2
    if not (0 < lo_hz < hi_hz < nyquist):
        raise ParameterError(
            f"invalid band [{lo_hz}, {hi_hz}] Hz for fs={signal.fs} (need 0 < lo < hi < {nyquist})"
        )
    n = len(signal)
    if n < 8:
        raise ParameterError(f"bandpass needs at least 8 samples, got {n}")
    spectrum = np.fft.rfft(signal.samples)
    freqs = np.fft.rfftfreq(n, d=1.0 / signal.fs)
    spectrum[(freqs < lo_hz) | (freqs > hi_hz)] = 0.0
    return Signal(np.fft.irfft(spectrum, n=n), signal.fs)


def detect_peaks(signal, min_distance: int = 1) -> np.ndarray:
    """Indices of strict local maxima at least ``min_distance`` apart.

    Candidates are visited from the highest amplitude down (ties go to the
    smaller index); a candidate is dropped if it lies closer than
    ``min_distance`` to one already kept.
    """
    if min_distance < 1:
        raise ParameterError("min_distance must be >= 1")
    x = signal.samples if isinstance(signal, Signal) else np.asarray(signal, dtype=float)
    if x.size < 3:
        return np.zeros(0, dtype=int)
    cand = np.flatnonzero((x[1:-1] > x[:-2]) & (x[1:-1] > x[2:])) + 1
    if min_distance == 1 or cand.size < 2:
        return cand
    # stable sort on -amplitude keeps smaller index first among equal heights
    order = cand[np.argsort(-x[cand], kind="stable")]
    kept: list[int] = []
    taken = np.zeros(x.size, dtype=bool)
    for idx in order:
        if taken[idx]:
            continue
        kept.append(int(idx))
        taken[max(0, idx - min_distance + 1): idx + min_distance] = True
    return np.array(sorted(kept), dtype=int)


def synth_ppg(spec: SynthSpec) -> Signal:
    """Harmonic-sum pulse waveform with optional drift and white noise.

    ``x[t] = sum_k a_k sin(2 pi k f0 (t - delay) / fs) + slope * t + noise``
    with ``f0 = hr/60`` and ``a_1 = 1``. The delay is a phase shift of the
    periodic part, so it equals a circular shift whenever ``n_frames`` is a
    multiple of the beat period.
    """
    spec.validate()
    t = np.arange(int(spec.n_frames), dtype=float)
    f0 = spec.hr_bpm / 60.0
    phase = 2 * np.pi * f0 * (t - spec.delay_samples) / spec.fs
    x = np.sin(phase)
    for k, amp in enumerate(spec.harmonic_amps, start=2):
        x = x + amp * np.sin(k * phase)
    x = x + spec.trend_slope * t
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        x = x + rng.normal(0.0, spec.noise_sigma, size=t.size)
    return Signal(x, spec.fs)


def fft_hr_oracle(signal: Signal, band=CARDIAC_BAND, pad_to: int = 8192) -> float:
    """Heart rate (bpm) at the periodogram maximum inside the cardiac band.

    The mean-removed signal is zero-padded to at least ``pad_to`` points and
    the peak bin is refined by a parabola through its two neighbours.
    """
    n = len(signal)
    if n < 64:
        raise ParameterError(f"fft_hr_oracle needs at least 64 samples, got {n}")
    x = signal.samples - signal.samples.mean()
    nfft = max(pad_to, 1 << (n - 1).bit_length())
    power = np.abs(np.fft.rfft(x, n=nfft)) ** 2
    freqs = np.fft.rfftfreq(nfft, d=1.0 / signal.fs)
    in_band = np.flatnonzero((freqs >= band[0]) & (freqs <= band[1]))
    if in_band.size == 0 or not np.any(power[in_band] > 1e-20 * max(1.0, power.max())):
        raise DataError("no power inside the cardiac band")
    k = in_band[np.argmax(power[in_band])]
    offset = 0.0
    if 0 < k < power.size - 1:
        a, b, c = power[k - 1], power[k], power[k + 1]
        denom = a - 2 * b + c
        if denom < 0:
            offset = 0.5 * (a - c) / denom
    return 60.0 * (k + offset) * signal.fs / nfft


def resample_linear(signal: Signal, target_fs: float) -> Signal:
    """Linear interpolation onto a uniform grid at ``target_fs`` over the same span."""
    if not target_fs > 0:
        raise ParameterError("target_fs must be positive")
    span = (len(signal) - 1) / signal.fs
    n_out = int(math.floor(span * target_fs + 1e-9)) + 1
    if n_out < 2:
        raise ParameterError(f"target grid has {n_out} sample(s); need at least 2")
    t_in = np.arange(len(signal)) / signal.fs
    t_out = np.arange(n_out) / target_fs
    out = np.interp(t_out, t_in, signal.samples)
    if abs(t_out[-1] - span) < 1e-9:
        out[-1] = signal.samples[-1]
    return Signal(out, target_fs)


# ---------------------------------------------------------------------------
# file formats


def write_signal_json(signal: Signal, path) -> None:
    payload = {"fs": signal.fs, "samples": [float(v) for v in signal.samples]}
    Path(path).write_text(json.dumps(payload) + "\n")


def read_signal_json(path) -> Signal:
    payload = json.loads(Path(path).read_text())
    try:
        return Signal(np.asarray(payload["samples"], dtype=float), float(payload["fs"]))
    except (KeyError, TypeError) as exc:
        raise DataError(f"{path}: expected an object with 'fs' and 'samples'") from exc


def write_signal_csv(signal: Signal, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "value"])
        for i, v in enumerate(signal.samples):
            w.writerow([repr(i / signal.fs), repr(float(v))])


def read_signal_csv(path, fs: float) -> Signal:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["t", "value"]:
        raise DataError(f"{path}: expected header 't,value'")
    return Signal(np.array([float(r[1]) for r in rows[1:] if r]), fs)


def read_signal(path, fs: float | None = None) -> Signal:
    """Read a JSON or CSV signal file, chosen by extension."""
    if str(path).lower().endswith(".csv"):
        if fs is None:
            raise ParameterError("CSV signals need fs supplied separately")
        return read_signal_csv(path, fs)
    return read_signal_json(path)


def write_signal(signal: Signal, path) -> None:
    if str(path).lower().endswith(".csv"):
        write_signal_csv(signal, path)
    else:
        write_signal_json(signal, path)
