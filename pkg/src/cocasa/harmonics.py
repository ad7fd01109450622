"""Medium-frame harmonic analysis for recovering a missing second pitch.

Frames where only one talker's pitch is known get a 50 ms Hann-windowed
Fourier look: spectral peaks below 4 kHz are collected per 200 Hz band, the
known talker's harmonic series (including half/quarter/eighth subharmonics)
is removed, and the remaining peaks near the missing track's neighboring
pitches are ranked by harmonic order and deviation from an ideal series.

The raw 50 ms frame resolves only 20 Hz; frames are zero-padded 8x and peaks
refined by parabolic interpolation on log magnitude, which brings isolated
tone error under 2 Hz.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import FrameSpec, Waveform
from .tracks import PitchTrackPair, nearest_pitch_after, nearest_pitch_before


@dataclass(frozen=True)
class HarmonicParams:
    frame_len_ms: float = 50.0
    max_freq: float = 4000.0
    band_width: float = 200.0
    peak_ratio: float = 0.2
    neighbor_tol: float = 8.0
    order_ratio: float = 0.9
    match_tol: float = 3.0
    pad_factor: int = 8

    def __post_init__(self):
        if not (0 < self.peak_ratio < 1):
            raise ValueError("peak_ratio must be in (0, 1)")
        if not (0 < self.order_ratio <= 1):
            raise ValueError("order_ratio must be in (0, 1]")
        if self.max_freq <= 0 or self.band_width <= 0:
            raise ValueError("max_freq and band_width must be > 0")


@dataclass
class HarmonicVector:
    """Spectral peaks (Hz, linear magnitude), strictly increasing in frequency."""

    freqs: np.ndarray
    mags: np.ndarray

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=np.float64)
        self.mags = np.asarray(self.mags, dtype=np.float64)
        if self.freqs.shape != self.mags.shape:
            raise ValueError("freqs and mags must align")
        if self.freqs.size > 1 and not np.all(np.diff(self.freqs) > 0):
            order = np.argsort(self.freqs)
            self.freqs = self.freqs[order]
            self.mags = self.mags[order]

    def __len__(self) -> int:
        return self.freqs.size


def extract_centered_frame(samples: np.ndarray, center: int, length: int) -> np.ndarray:
    """length samples centered on index `center`, zero-padded at the edges."""
    start = center - length // 2
    out = np.zeros(length, dtype=np.float64)
    lo = max(0, start)
    hi = min(samples.size, start + length)
    if hi > lo:
        out[lo - start: hi - start] = samples[lo:hi]
    return out


def _interpolated_peaks(frame: np.ndarray, sample_rate: int, pad_factor: int):
    """(freq, magnitude) of all interior local maxima of the padded spectrum."""
    n = frame.size
    win = np.hanning(n)
    nfft = 1 << int(np.ceil(np.log2(max(2, n * pad_factor))))
    spec = np.abs(np.fft.rfft(frame * win, nfft))
    logm = np.log(spec + 1e-300)
    mid = spec[1:-1]
    is_peak = (mid > spec[:-2]) & (mid >= spec[2:]) & (mid > 0)
    idx = np.flatnonzero(is_peak) + 1
    if idx.size == 0:
        return np.zeros(0), np.zeros(0)
    alpha = logm[idx - 1]
    beta = logm[idx]
    gamma = logm[idx + 1]
    denom = alpha - 2.0 * beta + gamma
    p = np.where(np.abs(denom) > 1e-12, 0.5 * (alpha - gamma) / denom, 0.0)
    p = np.clip(p, -0.5, 0.5)
    freqs = (idx + p) * sample_rate / nfft
    mags = np.exp(beta - 0.25 * (alpha - gamma) * p)
    return freqs, mags


def band_peaks(frame_samples: np.ndarray, sample_rate: int,
               p: HarmonicParams = HarmonicParams()) -> HarmonicVector:
    """Prominent spectral peaks of one frame, collected per frequency band.

    Components above max_freq are dropped; within each band_width-wide band
    only peaks at least peak_ratio of the band's strongest peak survive.
    """
    freqs, mags = _interpolated_peaks(frame_samples, sample_rate, p.pad_factor)
    keep = freqs <= p.max_freq
    freqs, mags = freqs[keep], mags[keep]
    if freqs.size == 0:
        return HarmonicVector(freqs, mags)
    bands = np.floor(freqs / p.band_width).astype(np.int64)
    selected = np.zeros(freqs.size, dtype=bool)
    for b in np.unique(bands):
        in_band = bands == b
        top = mags[in_band].max()
        selected |= in_band & (mags >= p.peak_ratio * top)
    return HarmonicVector(freqs[selected], mags[selected])


def remove_known_harmonics(v: HarmonicVector, known_f0: float,
                           p: HarmonicParams = HarmonicParams()) -> HarmonicVector:
    """Drop peaks on the known pitch's harmonic series.

    The series is every integer multiple up to max_freq plus the half,
    quarter, and eighth subharmonics; membership is within match_tol Hz.
    """
    if known_f0 <= 0:
        raise ValueError("known_f0 must be > 0")
    targets = [k * known_f0 for k in range(1, int(p.max_freq / known_f0) + 1)]
    targets += [known_f0 / 2.0, known_f0 / 4.0, known_f0 / 8.0]
    targets = np.asarray(targets)
    if len(v) == 0:
        return HarmonicVector(v.freqs.copy(), v.mags.copy())
    dist = np.abs(v.freqs[:, None] - targets[None, :]).min(axis=1)
    keep = dist > p.match_tol
    return HarmonicVector(v.freqs[keep], v.mags[keep])


def _harmonic_order_and_deviation(cand: float, v: HarmonicVector,
                                  p: HarmonicParams) -> tuple[int, float]:
    """Count of the candidate's integer multiples present in v, and their
    mean absolute deviation (Hz) from the ideal multiples."""
    order = 0
    devs = []
    k_max = int(p.max_freq / cand)
    for k in range(1, k_max + 1):
        ideal = k * cand
        if len(v) == 0:
            break
        d = np.abs(v.freqs - ideal)
        j = int(np.argmin(d))
        if d[j] <= p.match_tol:
            order += 1
            devs.append(float(d[j]))
    return order, float(np.mean(devs)) if devs else 0.0


def second_pitch(v: HarmonicVector, f_prev: float | None, f_next: float | None,
                 p: HarmonicParams = HarmonicParams()) -> float | None:
    """Pick the missing talker's pitch from a cleaned peak vector.

    Candidates are peaks within neighbor_tol of the missing track's previous
    or next pitch. Candidates below order_ratio of the best harmonic order are
    dropped; the survivor with the smallest mean deviation wins.
    """
    if f_prev is None and f_next is None:
        return None
    if len(v) == 0:
        return None
    near = np.zeros(len(v), dtype=bool)
    if f_prev is not None:
        near |= np.abs(v.freqs - f_prev) <= p.neighbor_tol
    if f_next is not None:
        near |= np.abs(v.freqs - f_next) <= p.neighbor_tol
    cands = v.freqs[near]
    if cands.size == 0:
        return None
    orders = []
    devs = []
    for c in cands:
        o, d = _harmonic_order_and_deviation(float(c), v, p)
        orders.append(o)
        devs.append(d)
    orders = np.asarray(orders, dtype=np.float64)
    devs = np.asarray(devs)
    keep = orders >= p.order_ratio * orders.max()
    kept_f = cands[keep]
    kept_d = devs[keep]
    best = np.lexsort((kept_f, kept_d))[0]
    return float(kept_f[best])


def fill_second_pitches(tracks: PitchTrackPair, mixture: Waveform,
                        p: HarmonicParams = HarmonicParams(),
                        fspec: FrameSpec = FrameSpec(),
                        f_min: float = 80.0, f_max: float = 500.0) -> PitchTrackPair:
    """Fill the empty track of every one-pitch frame from frame harmonics.

    Neighbor pitches are read from the input tracks (single-pass semantics);
    existing pitches are never modified. Recovered pitches outside the
    trackable range are discarded.
    """
    fs = mixture.sample_rate
    shift = fspec.shift_samples(fs)
    frame_len = max(2, int(round(p.frame_len_ms * fs / 1000.0)))
    out = tracks.copy()
    for m in range(tracks.n_frames):
        has1 = tracks.track1[m] > 0
        has2 = tracks.track2[m] > 0
        if has1 == has2:
            continue
        known_lag = tracks.track1[m] if has1 else tracks.track2[m]
        needing = tracks.track2 if has1 else tracks.track1
        f_known = fs / known_lag
        prev_lag = nearest_pitch_before(needing, m)
        next_lag = nearest_pitch_after(needing, m)
        f_prev = fs / prev_lag if prev_lag else None
        f_next = fs / next_lag if next_lag else None
        if f_prev is None and f_next is None:
            continue
        frame = extract_centered_frame(mixture.samples, m * shift, frame_len)
        vec = band_peaks(frame, fs, p)
        vec = remove_known_harmonics(vec, f_known, p)
        found = second_pitch(vec, f_prev, f_next, p)
        if found is not None and f_min <= found <= f_max:
            (out.track2 if has1 else out.track1)[m] = fs / found
    return out
