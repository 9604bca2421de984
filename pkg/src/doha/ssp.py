"""Self-similarity physiological (SSP) maps.

A map is the matrix of cosine similarities between every pair of stride-1
sliding windows of a signal. This module builds maps, evaluates the mean
squared map loss and its gradient, and recovers heart rate from a map by
averaging along its sub-diagonals.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParameterError
from .signal import (
    CARDIAC_BAND,
    HR_MAX_BPM,
    HR_MIN_BPM,
    Signal,
    SynthSpec,
    bandpass,
    detect_peaks,
    synth_ppg,
)

NORM_EPS = 1e-12


@dataclass(frozen=True)
class SSPMap:
    values: np.ndarray
    L_win: int
    fs: float = 30.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] < 1:
            raise ParameterError(f"SSP map must be a non-empty square matrix, got {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class AutocorrSeq:
    values: np.ndarray
    fs: float


def slice_windows(signal, L_win: int) -> np.ndarray:
    """Stride-1 windows as a read-only ``(N - L_win + 1, L_win)`` view."""
    x = signal.samples if isinstance(signal, Signal) else np.asarray(signal, dtype=float)
    if L_win < 2:
        raise ParameterError(f"L_win must be >= 2, got {L_win}")
    if L_win > x.size:
        raise ParameterError(f"L_win={L_win} exceeds signal length {x.size}")
    return np.lib.stride_tricks.sliding_window_view(x, L_win)


def cosine_sim(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ParameterError(f"length mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < NORM_EPS or nb < NORM_EPS:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def cosine_map(rows: np.ndarray):
    """Pairwise cosine similarity of the rows of ``rows``.

    Returns ``(R, U, norms)`` where ``U`` holds the unit-normalised rows
    (zero for rows with norm below ``NORM_EPS``). ``R`` is exactly
    symmetric, has an exact unit diagonal on non-degenerate rows and is
    clipped to [-1, 1].
    """
    norms = np.linalg.norm(rows, axis=1)
    ok = norms >= NORM_EPS
    U = np.zeros_like(rows, dtype=float)
    U[ok] = rows[ok] / norms[ok, None]
    R = U @ U.T
    R = np.triu(R)
    R = R + np.triu(R, 1).T
    np.clip(R, -1.0, 1.0, out=R)
    R[np.diag_indices_from(R)] = ok.astype(float)
    return R, U, norms


def build_ssp(signal: Signal, L_win: int = 17) -> SSPMap:
    """SSP map of ``signal``; label signals should be band-passed first."""
    R, _, _ = cosine_map(slice_windows(signal, L_win))
    return SSPMap(R, L_win, signal.fs)


def _check_pair(pred: SSPMap, label: SSPMap):
    p = pred.values if isinstance(pred, SSPMap) else np.asarray(pred, float)
    q = label.values if isinstance(label, SSPMap) else np.asarray(label, float)
    if p.shape != q.shape:
        raise ParameterError(f"map size mismatch: {p.shape} vs {q.shape}")
    return p, q


def ssp_mse_loss(pred: SSPMap, label: SSPMap) -> float:
    p, q = _check_pair(pred, label)
    n = p.shape[0]
    return float(np.sum((q - p) ** 2) / (n * n))


def ssp_mse_grad(pred: SSPMap, label: SSPMap) -> np.ndarray:
    """Gradient of :func:`ssp_mse_loss` with respect to every entry of ``pred``."""
    p, q = _check_pair(pred, label)
    n = p.shape[0]
    return 2.0 * (p - q) / (n * n)


def autocorr_seq(ssp: SSPMap) -> AutocorrSeq:
    """Mean of each lower sub-diagonal: ``seq[t] = mean{R[i, j] : i - j = t}``."""
    R = ssp.values
    seq = np.array([np.diagonal(R, -t).mean() for t in range(R.shape[0])])
    return AutocorrSeq(seq, ssp.fs)


def _refine_peak(y: np.ndarray, k: int) -> float:
    if 0 < k < y.size - 1:
        a, b, c = y[k - 1], y[k], y[k + 1]
        denom = a - 2 * b + c
        if denom < 0:
            return k + 0.5 * (a - c) / denom
    return float(k)


def _band_argmax_hz(x: np.ndarray, fs: float, band, pad_to: int = 8192) -> float:
    nfft = max(pad_to, 1 << (x.size - 1).bit_length())
    power = np.abs(np.fft.rfft(x - x.mean(), n=nfft)) ** 2
    freqs = np.fft.rfftfreq(nfft, d=1.0 / fs)
    idx = np.flatnonzero((freqs >= band[0]) & (freqs <= band[1]))
    k = idx[np.argmax(power[idx])]
    return _refine_peak(power, int(k)) * fs / nfft


def invert_hr(ssp: SSPMap, band=CARDIAC_BAND) -> float:
    """Heart rate (bpm) recovered from an SSP map.

    The sub-diagonal means form an autocorrelation-like sequence, which is
    band-passed; the median spacing between its peaks (refined to sub-sample
    position by a parabola) gives the beat period. With fewer than two peaks
    the in-band periodogram maximum of the sequence is used instead. The
    result is clamped to the admissible heart-rate range.
    """
    fs = ssp.fs
    if ssp.size < max(8, math.ceil(2 * fs / band[1])):
        raise ParameterError(
            f"map of size {ssp.size} too small to resolve {band[1]} Hz at fs={fs}"
        )
    seq = bandpass(Signal(autocorr_seq(ssp).values, fs), *band).samples
    peaks = detect_peaks(seq, min_distance=math.ceil(fs / band[1]))
    if peaks.size >= 2:
        pos = np.array([_refine_peak(seq, int(k)) for k in peaks])
        hr = 60.0 * fs / float(np.median(np.diff(pos)))
    elif np.any(seq != 0):
        hr = 60.0 * _band_argmax_hz(seq, fs, band)
    else:
        hr = HR_MIN_BPM
    return float(min(max(hr, HR_MIN_BPM), HR_MAX_BPM))


def _aligned_deviation(R0: np.ndarray, Rd: np.ndarray, delay: int, trim: int) -> float:
    # a delay of d moves window i of the reference to window i + d
    m = R0.shape[0] - delay
    a = R0[:m, :m]
    b = Rd[delay:, delay:]
    core = np.abs(a - b)[trim: m - trim, trim: m - trim]
    if core.size == 0:
        raise ParameterError("delay and trim leave no interior to compare")
    return float(core.max())


def phase_invariance_report(
    spec: SynthSpec,
    delays: Sequence[int],
    L_win: int = 17,
    mode: str = "truncation",
    filtered: bool = True,
) -> np.ndarray:
    """Max interior map deviation caused by delaying the source signal.

    For each delay ``d`` the signal is delayed either circularly
    (``mode="circular"``) or by cutting the same-length clip ``d`` samples
    earlier out of a longer recording (``mode="truncation"``). Both the
    reference and the delayed clip go through the label path (optional
    band-pass, then :func:`build_ssp`). Because a delay of ``d`` moves
    window ``i`` to ``i + d``, the delayed map is compared with the
    reference along the shifted diagonal, and ``L_win`` rows/columns are
    trimmed at each border of the overlap.

    Returns:
        Array of deviations, one per entry of ``delays``.
    """
    if mode not in ("truncation", "circular"):
        raise ParameterError(f"unknown mode {mode!r}")
    delays = [int(d) for d in delays]
    if any(d < 0 for d in delays):
        raise ParameterError("delays must be non-negative")
    if any(d >= 2 * spec.period_samples for d in delays):
        raise ParameterError("every delay must be shorter than two beat periods")
    n = int(spec.n_frames)
    dmax = max(delays, default=0)
    rec = synth_ppg(replace(spec, n_frames=n + dmax)).samples

    def label_map(x):
        s = Signal(x, spec.fs)
        return build_ssp(bandpass(s) if filtered else s, L_win).values

    ref = rec[dmax: dmax + n]
    R0 = label_map(ref)
    out = []
    for d in delays:
        if mode == "circular":
            delayed = np.roll(ref, d)
        else:
            delayed = rec[dmax - d: dmax - d + n]
        out.append(_aligned_deviation(R0, label_map(delayed), d, L_win))
    return np.array(out)


# ---------------------------------------------------------------------------
# file formats

_HEADER = re.compile(r"#\s*L_win=(\d+)\s+fs=([0-9.eE+-]+)")


def write_ssp_csv(ssp: SSPMap, path) -> None:
    lines = [f"# L_win={ssp.L_win} fs={ssp.fs!r}"]
    lines += [",".join(repr(float(v)) for v in row) for row in ssp.values]
    Path(path).write_text("\n".join(lines) + "\n")


def read_ssp_csv(path) -> SSPMap:
    text = Path(path).read_text().splitlines()
    m = _HEADER.match(text[0]) if text else None
    if m is None:
        raise ParameterError(f"{path}: missing '# L_win=<int> fs=<float>' header")
    rows = [[float(v) for v in line.split(",")] for line in text[1:] if line.strip()]
    return SSPMap(np.array(rows), int(m.group(1)), float(m.group(2)))


def write_seq_csv(seq: AutocorrSeq, path) -> None:
    lines = ["t_m,value"] + [f"{t},{float(v)!r}" for t, v in enumerate(seq.values)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_seq_csv(path, fs: float = 30.0) -> AutocorrSeq:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "t_m,value":
        raise ParameterError(f"{path}: expected header 't_m,value'")
    return AutocorrSeq(np.array([float(l.split(",")[1]) for l in lines[1:] if l.strip()]), fs)
