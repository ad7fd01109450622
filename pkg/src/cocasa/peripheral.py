"""Auditory front end.

A bank of 128 fourth-order gammatone filters (ERB-spaced center frequencies,
21 Hz to 12.5 kHz by default) feeds an inner-hair-cell transduction stage and
an amplitude-envelope extractor. Per-frame running autocorrelations of the
transduced signals — normalized by the window energy at zero lag — supply the
periodicity features used for pitch tracking and time-frequency unit labeling.

Autocorrelation convention for frame m with window length W and shift T_f:
the window covers absolute samples m*T_f - n for n in [0, W-1]; lagged reads
reach a further tau samples back. Reads outside the signal are zero. A window
with zero energy (or no variation) yields an all-zero autocorrelation row.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import butter, lfilter, filtfilt

from .audio import FrameSpec, Waveform, pipeline_num_frames

# Glasberg & Moore ERB-rate constants
_EAR_Q = 9.26449
_MIN_BW = 24.7

# absolute window peak below which a frame counts as digital silence
SILENCE_EPS = 1e-6


def erb(f: np.ndarray | float):
    """Equivalent rectangular bandwidth at frequency f (Hz)."""
    return _MIN_BW + np.asarray(f, dtype=np.float64) / _EAR_Q


def erb_rate(f: np.ndarray | float):
    """ERB-rate scale value of frequency f (Hz)."""
    return 21.4 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / (_EAR_Q * _MIN_BW))


def erb_space(cf_min: float, cf_max: float, n: int) -> np.ndarray:
    """n center frequencies uniformly spaced on the ERB-rate scale, inclusive."""
    lo, hi = erb_rate(cf_min), erb_rate(cf_max)
    rates = np.linspace(lo, hi, n)
    return (_EAR_Q * _MIN_BW) * (10.0 ** (rates / 21.4) - 1.0)


def pitch_lag_bounds(sample_rate: int, f_min: float = 80.0, f_max: float = 500.0) -> tuple[int, int]:
    """Lag range in samples covering pitches f_min..f_max (round half up)."""
    lag_min = int(np.floor(sample_rate / f_max + 0.5))
    lag_max = int(np.floor(sample_rate / f_min + 0.5))
    return lag_min, lag_max


@dataclass(frozen=True)
class FilterbankSpec:
    """Gammatone filterbank geometry."""

    n_channels: int = 128
    cf_min: float = 21.0
    cf_max: float = 12500.0

    def __post_init__(self):
        if self.n_channels < 1:
            raise ValueError("n_channels must be >= 1")
        if not (0 < self.cf_min < self.cf_max):
            raise ValueError("need 0 < cf_min < cf_max")

    def center_frequencies(self) -> np.ndarray:
        return erb_space(self.cf_min, self.cf_max, self.n_channels)

    def validate_rate(self, sample_rate: int) -> None:
        if self.cf_max >= sample_rate / 2:
            raise ValueError(
                f"cf_max {self.cf_max} Hz exceeds Nyquist for fs={sample_rate}"
            )


@dataclass
class Cochleagram:
    """Channel x time responses of the auditory periphery.

    h is the working per-channel signal (filter output, later replaced by the
    transduced response); h_E the amplitude envelopes; input_peak tracks the
    raw waveform for per-frame silence gating.
    """

    h: np.ndarray
    channel_cf: np.ndarray
    sample_rate: int
    h_E: np.ndarray | None = None
    input_samples: np.ndarray | None = None

    @property
    def n_channels(self) -> int:
        return self.h.shape[0]

    @property
    def n_samples(self) -> int:
        return self.h.shape[1]


def _slaney_coeffs(cfs: np.ndarray, sample_rate: int):
    """Second-order-section coefficients of the 4th-order gammatone cascade.

    Patterson-Holdsworth filters in Slaney's recursive form, bandwidth
    1.019*ERB(cf), normalized to unit gain at the center frequency.
    Returns (feedforward stages a1..a4 tuple, shared denominator, gain).
    """
    T = 1.0 / sample_rate
    cf = np.asarray(cfs, dtype=np.float64)
    B = 2.0 * np.pi * 1.019 * erb(cf)
    arg = 2.0 * cf * np.pi * T
    vec = np.exp(2j * arg)

    A0 = T
    A2 = 0.0
    B0 = 1.0
    B1 = -2.0 * np.cos(arg) / np.exp(B * T)
    B2 = np.exp(-2.0 * B * T)

    rt_pos = np.sqrt(3.0 + 2.0 ** 1.5)
    rt_neg = np.sqrt(3.0 - 2.0 ** 1.5)
    common = 2.0 * T * np.cos(arg) / np.exp(B * T)
    sin_term = 2.0 * T * np.sin(arg) / np.exp(B * T)

    A11 = -(common + rt_pos * sin_term) / 2.0
    A12 = -(common - rt_pos * sin_term) / 2.0
    A13 = -(common + rt_neg * sin_term) / 2.0
    A14 = -(common - rt_neg * sin_term) / 2.0

    gain = np.abs(
        (-2.0 * vec * T + 2.0 * np.exp(-(B * T)) * np.exp(1j * arg) * T
         * (np.cos(arg) - rt_neg * np.sin(arg)))
        * (-2.0 * vec * T + 2.0 * np.exp(-(B * T)) * np.exp(1j * arg) * T
           * (np.cos(arg) + rt_neg * np.sin(arg)))
        * (-2.0 * vec * T + 2.0 * np.exp(-(B * T)) * np.exp(1j * arg) * T
           * (np.cos(arg) - rt_pos * np.sin(arg)))
        * (-2.0 * vec * T + 2.0 * np.exp(-(B * T)) * np.exp(1j * arg) * T
           * (np.cos(arg) + rt_pos * np.sin(arg)))
        / (-2.0 / np.exp(2.0 * B * T) - 2.0 * vec + 2.0 * (1.0 + vec) / np.exp(B * T)) ** 4
    )
    return (A0, A11, A12, A13, A14, A2, B0, B1, B2), gain


def _gammatone_channels(samples: np.ndarray, cfs: np.ndarray, sample_rate: int,
                        zero_phase: bool = False) -> np.ndarray:
    (A0, A11, A12, A13, A14, A2, B0, B1, B2), gain = _slaney_coeffs(cfs, sample_rate)
    out = np.empty((cfs.size, samples.size), dtype=np.float64)
    run = filtfilt if zero_phase else lfilter
    for c in range(cfs.size):
        den = np.array([B0, B1[c], B2[c]])
        y = run(np.array([A0 / gain[c], A11[c] / gain[c], A2 / gain[c]]), den, samples)
        y = run(np.array([A0, A12[c], A2]), den, y)
        y = run(np.array([A0, A13[c], A2]), den, y)
        y = run(np.array([A0, A14[c], A2]), den, y)
        out[c] = y
    return out


def gammatone_filterbank(w: Waveform, spec: FilterbankSpec = FilterbankSpec()) -> Cochleagram:
    """Filter a waveform through the gammatone bank (causal, pre-transduction)."""
    spec.validate_rate(w.sample_rate)
    cfs = spec.center_frequencies()
    h = _gammatone_channels(w.samples, cfs, w.sample_rate)
    return Cochleagram(h=h, channel_cf=cfs, sample_rate=w.sample_rate,
                       input_samples=w.samples)


def gammatone_filterbank_zero_phase(w: Waveform, spec: FilterbankSpec = FilterbankSpec()) -> Cochleagram:
    """Forward-backward filtered bank output; zero phase for resynthesis."""
    spec.validate_rate(w.sample_rate)
    cfs = spec.center_frequencies()
    h = _gammatone_channels(w.samples, cfs, w.sample_rate, zero_phase=True)
    return Cochleagram(h=h, channel_cf=cfs, sample_rate=w.sample_rate,
                       input_samples=w.samples)


# Meddis hair-cell constants (original published set)
_MEDDIS_A = 5.0
_MEDDIS_B = 300.0
_MEDDIS_G = 2000.0
_MEDDIS_Y = 5.05
_MEDDIS_L = 2500.0
_MEDDIS_R = 6580.0
_MEDDIS_X = 66.31
_MEDDIS_H = 50000.0


def meddis_spontaneous_rate() -> float:
    """Firing level the model settles to on silent input."""
    return _MEDDIS_H * _meddis_steady_state()[1]


def _meddis_steady_state() -> tuple[float, float, float]:
    kss = _MEDDIS_G * _MEDDIS_A / (_MEDDIS_A + _MEDDIS_B)
    q0 = _MEDDIS_Y / (_MEDDIS_Y + kss * _MEDDIS_L / (_MEDDIS_L + _MEDDIS_R))
    c0 = q0 * kss / (_MEDDIS_L + _MEDDIS_R)
    w0 = _MEDDIS_R * c0 / _MEDDIS_X
    return q0, c0, w0


def meddis_transduce(coch: Cochleagram, input_gain: float = 1000.0) -> Cochleagram:
    """Hair-cell firing probability of every channel (Euler integration).

    input_gain maps unit-amplitude waveforms onto the model's conversational
    operating range; output is non-negative, compressive at high levels, and
    settles to the spontaneous rate on silence.
    """
    sig = coch.h * input_gain
    n_ch, n_t = sig.shape
    # substep so the stiffest rate constant stays well inside Euler stability
    n_sub = max(1, int(np.ceil((1.0 / coch.sample_rate) / 5e-5)))
    dt = 1.0 / (coch.sample_rate * n_sub)
    q0, c0, w0 = _meddis_steady_state()
    q = np.full(n_ch, q0)
    c = np.full(n_ch, c0)
    wres = np.full(n_ch, w0)
    out = np.empty_like(sig)
    ydt = _MEDDIS_Y * dt
    xdt = _MEDDIS_X * dt
    rdt = _MEDDIS_R * dt
    ldt = _MEDDIS_L * dt
    for t in range(n_t):
        s = np.maximum(sig[:, t] + _MEDDIS_A, 0.0)
        kdt = _MEDDIS_G * dt * s / (s + _MEDDIS_B)
        for _ in range(n_sub):
            replenish = ydt * (1.0 - q)
            reprocessed = xdt * wres
            ejected = kdt * q
            reuptake = rdt * c
            loss = ldt * c
            q = np.maximum(q + replenish + reprocessed - ejected, 0.0)
            c = np.maximum(c + ejected - loss - reuptake, 0.0)
            wres = np.maximum(wres + reuptake - reprocessed, 0.0)
        out[:, t] = _MEDDIS_H * c
    return Cochleagram(h=out, channel_cf=coch.channel_cf, sample_rate=coch.sample_rate,
                       h_E=coch.h_E, input_samples=coch.input_samples)


def envelope(coch: Cochleagram, cutoff_hz: float = 1000.0) -> Cochleagram:
    """Fill h_E: half-wave rectification then 4th-order low-pass per channel."""
    b, a = butter(4, cutoff_hz / (coch.sample_rate / 2.0), btype="low")
    rect = np.maximum(coch.h, 0.0)
    env = lfilter(b, a, rect, axis=1)
    np.maximum(env, 0.0, out=env)
    return Cochleagram(h=coch.h, channel_cf=coch.channel_cf, sample_rate=coch.sample_rate,
                       h_E=env, input_samples=coch.input_samples)


@dataclass
class CorrelogramFrame:
    """Normalized running autocorrelations of one frame.

    a_h[c, i] is the correlation of channel c at lag lag_min + i; a_e the same
    on envelopes (None when envelopes were not computed). live_channels counts
    channels with nonzero window energy; silent flags frames whose underlying
    waveform window is digitally silent.
    """

    a_h: np.ndarray
    a_e: np.ndarray | None
    frame_index: int
    lag_min: int
    lag_max: int
    window_len: int
    live_channels: int
    silent: bool

    @property
    def lags(self) -> np.ndarray:
        return np.arange(self.lag_min, self.lag_max + 1)


def _padded_frame_block(x: np.ndarray, t_end: int, width: int) -> np.ndarray:
    """x[:, t_end-width+1 .. t_end] with zeros where indices fall outside."""
    n_t = x.shape[1]
    lo = t_end - width + 1
    hi = t_end + 1
    pad_left = max(0, -lo)
    pad_right = max(0, hi - n_t)
    core = x[:, max(lo, 0): min(hi, n_t)]
    if pad_left or pad_right:
        core = np.pad(core, ((0, 0), (pad_left, pad_right)))
    return core


def _normalized_lag_products(x: np.ndarray, t_end: int, window_len: int,
                             lag_min: int, lag_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Windowed lag products over all channels; returns (matrix, window energy)."""
    block = _padded_frame_block(x, t_end, window_len + lag_max)
    win = block[:, lag_max:]
    energy = np.einsum("cw,cw->c", win, win)
    # degenerate windows (no energy or no variation) carry no lag information
    mean = win.mean(axis=1)
    variance = energy / window_len - mean * mean
    valid = (energy > 0.0) & (variance > 1e-12 * np.maximum(mean * mean, 1e-300))
    out = np.zeros((x.shape[0], lag_max - lag_min + 1), dtype=np.float64)
    safe = np.where(valid, energy, 1.0)
    for i, tau in enumerate(range(lag_min, lag_max + 1)):
        shifted = block[:, lag_max - tau: lag_max - tau + window_len]
        out[:, i] = np.einsum("cw,cw->c", win, shifted) / safe
    out[~valid] = 0.0
    return out, energy


def correlogram(coch: Cochleagram, m: int, fspec: FrameSpec = FrameSpec(),
                lag_range: tuple[int, int] | None = None) -> CorrelogramFrame:
    """Autocorrelation features of frame m over the given lag range.

    Implements the windowed lag-product sums exactly (no FFT approximation):
    numerator sum_n h[t_m - n] * h[t_m - n - tau], denominator the window
    energy, with n in [0, W-1], t_m = m * shift, and zero fill off-signal.
    """
    fs = coch.sample_rate
    shift = fspec.shift_samples(fs)
    window_len = fspec.length_samples(fs)
    if lag_range is None:
        lag_range = pitch_lag_bounds(fs)
    lag_min, lag_max = lag_range
    if not (0 <= lag_min <= lag_max):
        raise ValueError(f"bad lag range [{lag_min}, {lag_max}]")
    n_frames = pipeline_num_frames(coch.n_samples, shift)
    if not (0 <= m < n_frames):
        raise IndexError(f"frame {m} out of bounds (0..{n_frames - 1})")
    t_end = m * shift

    a_h, energy = _normalized_lag_products(coch.h, t_end, window_len, lag_min, lag_max)
    a_e = None
    if coch.h_E is not None:
        a_e, _ = _normalized_lag_products(coch.h_E, t_end, window_len, lag_min, lag_max)

    silent = False
    if coch.input_samples is not None:
        raw = _padded_frame_block(coch.input_samples[None, :], t_end, window_len)
        silent = bool(np.max(np.abs(raw)) < SILENCE_EPS)

    return CorrelogramFrame(
        a_h=a_h, a_e=a_e, frame_index=m, lag_min=lag_min, lag_max=lag_max,
        window_len=window_len, live_channels=int(np.count_nonzero(energy > 0.0)),
        silent=silent,
    )


def summary_acf(cf: CorrelogramFrame) -> np.ndarray:
    """Across-channel sum of a_h, scaled so its maximum over the lag range is 1.

    All-silent frames (or frames with no positive summary value) return zeros.
    """
    if cf.silent:
        return np.zeros(cf.a_h.shape[1])
    s = cf.a_h.sum(axis=0)
    peak = float(s.max()) if s.size else 0.0
    if peak <= 0.0:
        return np.zeros_like(s)
    return s / peak


def voicing_strength(cf: CorrelogramFrame) -> float:
    """Peak of the summary relative to the live channel count (0 on silence).

    A value near 1 means every energetic channel is strongly periodic at a
    common lag; aperiodic frames score low.
    """
    if cf.silent or cf.live_channels == 0:
        return 0.0
    s = cf.a_h.sum(axis=0)
    return float(s.max() / cf.live_channels) if s.size else 0.0


def dump_correlogram_csv(cf: CorrelogramFrame, path) -> None:
    """Write one frame as CSV rows (channel, lag, a_h, a_e)."""
    lags = cf.lags
    with open(path, "w", newline="\n") as fh:
        fh.write("channel,lag,a_h,a_e\n")
        for c in range(cf.a_h.shape[0]):
            for i, tau in enumerate(lags):
                ae = cf.a_e[c, i] if cf.a_e is not None else 0.0
                fh.write(f"{c},{tau},{cf.a_h[c, i]:.12g},{ae:.12g}\n")
