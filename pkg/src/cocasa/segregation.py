"""Time-frequency unit labeling, binary masks, and waveform reconstruction.

Each (channel, frame) unit is labeled to talker 1 or 2 by comparing its
autocorrelation at the tracked pitch lags against the unit's own maximum over
the pitch lag range: low-frequency channels use the transduced correlation
with a 0.85 threshold, high-frequency channels the envelope correlation with
0.7. Units neither test can attribute stay unlabeled and contribute to no
output. Reconstruction weights a zero-phase gammatone decomposition of the
mixture by the binary mask with raised-cosine crossfades between frames.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .audio import FrameSpec, Waveform, pipeline_num_frames
from .peripheral import (CorrelogramFrame, FilterbankSpec,
                         gammatone_filterbank_zero_phase)
from .tracks import PitchTrackPair

UNLABELED = 0
SOURCE1 = 1
SOURCE2 = 2


@dataclass(frozen=True)
class LabelParams:
    ah_threshold: float = 0.85
    ae_threshold: float = 0.7
    type1_cf_cutoff: float = 1000.0

    def __post_init__(self):
        if not (0 < self.ah_threshold < 1) or not (0 < self.ae_threshold < 1):
            raise ValueError("thresholds must be in (0, 1)")


@dataclass
class TFMask:
    """Per-unit labels over channel x frame; 0 unlabeled, 1/2 per source."""

    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int8)
        if self.labels.ndim != 2:
            raise ValueError("labels must be channel x frame")

    @property
    def n_channels(self) -> int:
        return self.labels.shape[0]

    @property
    def n_frames(self) -> int:
        return self.labels.shape[1]

    @property
    def m1(self) -> np.ndarray:
        return (self.labels == SOURCE1).astype(np.float64)

    @property
    def m2(self) -> np.ndarray:
        return (self.labels == SOURCE2).astype(np.float64)

    def swapped(self) -> "TFMask":
        out = self.labels.copy()
        out[self.labels == SOURCE1] = SOURCE2
        out[self.labels == SOURCE2] = SOURCE1
        return TFMask(out)


def _unit_passes(cf: CorrelogramFrame, lag: float, use_envelope: np.ndarray,
                 p: LabelParams) -> tuple[np.ndarray, np.ndarray]:
    """(passes, valid) per channel for one pitch lag.

    A unit passes when its correlation at the pitch lag exceeds the threshold
    times its own max over the lag range; dead units (no correlation mass)
    are marked invalid and are never labeled.
    """
    col = int(round(lag)) - cf.lag_min
    col = min(max(col, 0), cf.a_h.shape[1] - 1)
    ah = cf.a_h[:, col]
    ah_max = cf.a_h.max(axis=1)
    if cf.a_e is None:
        raise ValueError("envelope correlogram required for labeling")
    ae = cf.a_e[:, col]
    ae_max = cf.a_e.max(axis=1)
    valid = np.where(use_envelope, ae_max > 0.0, ah_max > 0.0)
    ratio_h = np.divide(ah, ah_max, out=np.zeros_like(ah), where=ah_max > 0)
    ratio_e = np.divide(ae, ae_max, out=np.zeros_like(ae), where=ae_max > 0)
    passes = np.where(use_envelope, ratio_e > p.ae_threshold, ratio_h > p.ah_threshold)
    return passes & valid, valid


def label_units(cgrams: Iterable[CorrelogramFrame], tracks: PitchTrackPair,
                channel_cf: np.ndarray, p: LabelParams = LabelParams()) -> TFMask:
    """Label every unit from the two pitch tracks.

    Zero-pitch frames stay unlabeled. With one pitch, passing units go to its
    track and failing (but live) units to the opposite track. With two
    pitches, a unit goes to the track whose pitch alone satisfies the test;
    units passing neither or both stay unlabeled.
    """
    use_env = np.asarray(channel_cf) >= p.type1_cf_cutoff
    columns = []
    for m, cf in enumerate(cgrams):
        col = np.full(use_env.size, UNLABELED, dtype=np.int8)
        lag1 = tracks.track1[m]
        lag2 = tracks.track2[m]
        if lag1 > 0 and lag2 > 0:
            p1, v1 = _unit_passes(cf, lag1, use_env, p)
            p2, v2 = _unit_passes(cf, lag2, use_env, p)
            col[p1 & ~p2] = SOURCE1
            col[p2 & ~p1] = SOURCE2
        elif lag1 > 0 or lag2 > 0:
            own = SOURCE1 if lag1 > 0 else SOURCE2
            other = SOURCE2 if lag1 > 0 else SOURCE1
            passes, valid = _unit_passes(cf, lag1 if lag1 > 0 else lag2, use_env, p)
            col[passes] = own
            col[valid & ~passes] = other
        columns.append(col)
    return TFMask(np.stack(columns, axis=1))


def group_unlabeled(mask: TFMask) -> TFMask:
    """One pass of majority voting over the four adjacent labeled units.

    Ties and isolated units stay unlabeled; decisions read only the input.
    """
    lab = mask.labels
    padded = np.pad(lab, 1, constant_values=UNLABELED)
    neighbors = [padded[:-2, 1:-1], padded[2:, 1:-1], padded[1:-1, :-2], padded[1:-1, 2:]]
    count1 = sum((n == SOURCE1).astype(np.int32) for n in neighbors)
    count2 = sum((n == SOURCE2).astype(np.int32) for n in neighbors)
    out = lab.copy()
    fill = lab == UNLABELED
    out[fill & (count1 > count2)] = SOURCE1
    out[fill & (count2 > count1)] = SOURCE2
    return TFMask(out)


def _cosine_window(shift: int) -> np.ndarray:
    k = np.arange(2 * shift + 1)
    return 0.5 * (1.0 + np.cos(np.pi * (k - shift) / shift))


def _frame_coverage(n_samples: int, shift: int, n_frames: int) -> np.ndarray:
    win = _cosine_window(shift)
    cov = np.zeros(n_samples)
    for m in range(n_frames):
        start = m * shift - shift
        lo = max(0, start)
        hi = min(n_samples, start + win.size)
        if hi > lo:
            cov[lo:hi] += win[lo - start: hi - start]
    return np.maximum(cov, 1e-12)


def _gain_weights(gains: np.ndarray, n_samples: int, shift: int,
                  coverage: np.ndarray) -> np.ndarray:
    """Per-sample channel weights: crossfaded frame gains, unity where all 1."""
    win = _cosine_window(shift)
    n_ch, n_frames = gains.shape
    w = np.zeros((n_ch, n_samples))
    for m in range(n_frames):
        start = m * shift - shift
        lo = max(0, start)
        hi = min(n_samples, start + win.size)
        if hi > lo:
            w[:, lo:hi] += np.outer(gains[:, m], win[lo - start: hi - start])
    return w / coverage[None, :]


def resynthesize(mixture: Waveform, mask: TFMask,
                 spec: FilterbankSpec = FilterbankSpec(),
                 fspec: FrameSpec = FrameSpec()) -> tuple[Waveform, Waveform]:
    """Reconstruct both talkers by mask-weighting the phase-aligned filterbank.

    The mixture is decomposed by the forward-backward (zero-phase) gammatone
    bank; each channel is weighted by the talker's binary mask, crossfaded at
    frame boundaries over one frame shift, and the channels are summed.
    """
    fs = mixture.sample_rate
    shift = fspec.shift_samples(fs)
    n_frames = pipeline_num_frames(len(mixture), shift)
    if mask.n_frames != n_frames:
        raise ValueError(f"mask has {mask.n_frames} frames, signal needs {n_frames}")
    coch = gammatone_filterbank_zero_phase(mixture, spec)
    if mask.n_channels != coch.n_channels:
        raise ValueError("mask channel count does not match the filterbank")
    cov = _frame_coverage(len(mixture), shift, n_frames)
    outs = []
    for gains in (mask.m1, mask.m2):
        w = _gain_weights(gains, len(mixture), shift, cov)
        outs.append(Waveform((coch.h * w).sum(axis=0), fs))
    return outs[0], outs[1]


def masked_sum(mixture: Waveform, gains: np.ndarray,
               spec: FilterbankSpec = FilterbankSpec(),
               fspec: FrameSpec = FrameSpec()) -> Waveform:
    """Single-mask variant of resynthesize (used for reference compensation)."""
    fs = mixture.sample_rate
    shift = fspec.shift_samples(fs)
    n_frames = pipeline_num_frames(len(mixture), shift)
    coch = gammatone_filterbank_zero_phase(mixture, spec)
    cov = _frame_coverage(len(mixture), shift, n_frames)
    w = _gain_weights(np.asarray(gains, dtype=np.float64), len(mixture), shift, cov)
    return Waveform((coch.h * w).sum(axis=0), fs)


def ideal_binary_mask(clean1: Waveform, clean2: Waveform,
                      spec: FilterbankSpec = FilterbankSpec(),
                      fspec: FrameSpec = FrameSpec()) -> TFMask:
    """Oracle mask: each unit goes to the source with more energy there.

    Energies come from each clean signal's own zero-phase filterbank response
    over the frame window; exact ties stay unlabeled.
    """
    if clean1.sample_rate != clean2.sample_rate or len(clean1) != len(clean2):
        raise ValueError("clean sources must share rate and length")
    fs = clean1.sample_rate
    shift = fspec.shift_samples(fs)
    window_len = fspec.length_samples(fs)
    n_frames = pipeline_num_frames(len(clean1), shift)

    def frame_energy(w: Waveform) -> np.ndarray:
        h = gammatone_filterbank_zero_phase(w, spec).h
        cs = np.concatenate([np.zeros((h.shape[0], 1)), np.cumsum(h * h, axis=1)], axis=1)
        e = np.empty((h.shape[0], n_frames))
        for m in range(n_frames):
            t_end = m * shift
            lo = max(0, t_end - window_len + 1)
            hi = min(h.shape[1], t_end + 1)
            e[:, m] = cs[:, hi] - cs[:, lo] if hi > lo else 0.0
        return e

    e1 = frame_energy(clean1)
    e2 = frame_energy(clean2)
    labels = np.full(e1.shape, UNLABELED, dtype=np.int8)
    labels[e1 > e2] = SOURCE1
    labels[e2 > e1] = SOURCE2
    return TFMask(labels)


def _frame_sinusoid_peaks(frame: np.ndarray, sample_rate: int, max_freq: float,
                          pad_factor: int = 4):
    """(freq, amplitude, start phase) of spectral peaks of a raw frame."""
    n = frame.size
    win = np.hanning(n)
    wsum = win.sum()
    nfft = 1 << int(np.ceil(np.log2(max(2, n * pad_factor))))
    spec = np.fft.rfft(frame * win, nfft)
    mag = np.abs(spec)
    logm = np.log(mag + 1e-300)
    mid = mag[1:-1]
    is_peak = (mid > mag[:-2]) & (mid >= mag[2:]) & (mid > 0)
    idx = np.flatnonzero(is_peak) + 1
    if idx.size == 0:
        return np.zeros(0), np.zeros(0), np.zeros(0)
    alpha, beta, gamma = logm[idx - 1], logm[idx], logm[idx + 1]
    denom = alpha - 2.0 * beta + gamma
    p = np.where(np.abs(denom) > 1e-12, 0.5 * (alpha - gamma) / denom, 0.0)
    p = np.clip(p, -0.5, 0.5)
    freqs = (idx + p) * sample_rate / nfft
    amps = 2.0 * np.exp(beta - 0.25 * (alpha - gamma) * p) / wsum
    phases = np.angle(spec[idx])
    keep = (freqs <= max_freq) & (freqs > 0)
    return freqs[keep], amps[keep], phases[keep]


def _claim_peaks(freqs: np.ndarray, f0: float, max_freq: float) -> dict[int, float]:
    """Nearest peak per integer harmonic of f0; peak index -> distance."""
    claims: dict[int, float] = {}
    if freqs.size == 0:
        return claims
    for k in range(1, int(max_freq / f0) + 1):
        ideal = k * f0
        j = int(np.argmin(np.abs(freqs - ideal)))
        d = abs(freqs[j] - ideal)
        if d <= f0 / 2.0 and (j not in claims or d < claims[j]):
            claims[j] = d
    return claims


def _synth_peaks(freqs, amps, phases, indices, n: int, sample_rate: int) -> np.ndarray:
    t = np.arange(n) / sample_rate
    out = np.zeros(n)
    for j in indices:
        out += amps[j] * np.cos(2.0 * np.pi * freqs[j] * t + phases[j])
    return out


def harmonic_selection_baseline(mixture: Waveform, tracks: PitchTrackPair,
                                fspec: FrameSpec = FrameSpec(),
                                max_freq: float = 4000.0) -> tuple[Waveform, Waveform]:
    """Sinusoidal-selection separation driven by the pitch tracks.

    Per frame: with two pitches each talker gets the sinusoids at spectral
    peaks claimed by its harmonic series (nearer harmonic wins contested
    peaks); with one pitch that talker is synthesized and the other takes the
    frame residual; with none the whole frame goes to talker 1. Frames are
    joined by raised-cosine overlap-add at 50% overlap.
    """
    fs = mixture.sample_rate
    shift = fspec.shift_samples(fs)
    n_frames = pipeline_num_frames(len(mixture), shift)
    win = _cosine_window(shift)
    frame_len = win.size
    cov = _frame_coverage(len(mixture), shift, n_frames)
    y1 = np.zeros(len(mixture))
    y2 = np.zeros(len(mixture))
    for m in range(n_frames):
        start = m * shift - shift
        frame = np.zeros(frame_len)
        lo = max(0, start)
        hi = min(len(mixture), start + frame_len)
        frame[lo - start: hi - start] = mixture.samples[lo:hi]
        lag1, lag2 = tracks.track1[m], tracks.track2[m]
        if lag1 <= 0 and lag2 <= 0:
            s1, s2 = frame, np.zeros(frame_len)
        else:
            freqs, amps, phases = _frame_sinusoid_peaks(frame, fs, max_freq)
            if lag1 > 0 and lag2 > 0:
                c1 = _claim_peaks(freqs, fs / lag1, max_freq)
                c2 = _claim_peaks(freqs, fs / lag2, max_freq)
                only1 = [j for j in c1 if j not in c2 or c1[j] <= c2[j]]
                only2 = [j for j in c2 if j not in c1 or c2[j] < c1[j]]
                s1 = _synth_peaks(freqs, amps, phases, only1, frame_len, fs)
                s2 = _synth_peaks(freqs, amps, phases, only2, frame_len, fs)
            else:
                f_known = fs / (lag1 if lag1 > 0 else lag2)
                claimed = list(_claim_peaks(freqs, f_known, max_freq))
                synth = _synth_peaks(freqs, amps, phases, claimed, frame_len, fs)
                if lag1 > 0:
                    s1, s2 = synth, frame - synth
                else:
                    s2, s1 = synth, frame - synth
        seg = slice(lo, hi)
        wseg = win[lo - start: hi - start]
        y1[seg] += s1[lo - start: hi - start] * wseg
        y2[seg] += s2[lo - start: hi - start] * wseg
    return Waveform(y1 / cov, fs), Waveform(y2 / cov, fs)


def write_mask(mask: TFMask, path) -> None:
    """One line per frame; one character per channel: 0/1/2."""
    with open(path, "w", newline="\n") as fh:
        for m in range(mask.n_frames):
            fh.write("".join(str(int(v)) for v in mask.labels[:, m]) + "\n")


def read_mask(path) -> TFMask:
    with open(path) as fh:
        rows = [line.strip() for line in fh if line.strip()]
    labels = np.array([[int(ch) for ch in row] for row in rows], dtype=np.int8).T
    return TFMask(labels)
