"""Waveform container, WAV I/O, mixture construction, and test-signal synthesis.

All samples are float64 amplitudes nominally in [-1, 1]. Frame indexing is
0-based everywhere; frame m of a shift-S framing starts at sample m*S.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile


class AudioError(Exception):
    """Base class for audio I/O and format errors."""


class NonMonoError(AudioError):
    """Input file carries more than one channel."""


class UnsupportedEncodingError(AudioError):
    """WAV sample encoding is neither 16-bit PCM nor 32-bit float."""


class AmplitudeRangeError(AudioError):
    """Samples exceed the writable [-1, 1] amplitude range."""


@dataclass
class Waveform:
    """A mono signal with its sample rate.

    samples: 1-D float64 array of amplitudes, nominal range [-1, 1].
    sample_rate: Hz, > 0.
    """

    samples: np.ndarray
    sample_rate: int = 25000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise NonMonoError(f"expected 1-D mono samples, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise AudioError(f"sample_rate must be > 0, got {self.sample_rate}")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise AudioError("samples contain NaN or Inf")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate

    def normalized(self, peak: float = 1.0) -> "Waveform":
        """Scaled copy with max |sample| == peak (untouched if silent)."""
        m = np.max(np.abs(self.samples)) if self.samples.size else 0.0
        if m == 0.0:
            return Waveform(self.samples.copy(), self.sample_rate)
        return Waveform(self.samples * (peak / m), self.sample_rate)


@dataclass(frozen=True)
class FrameSpec:
    """Frame geometry in milliseconds; lengths are converted per sample rate."""

    shift_ms: float = 10.0
    length_ms: float = 20.0

    def __post_init__(self):
        if self.shift_ms <= 0:
            raise ValueError(f"shift_ms must be > 0, got {self.shift_ms}")
        if self.length_ms < self.shift_ms:
            raise ValueError("length_ms must be >= shift_ms")

    def shift_samples(self, sample_rate: int) -> int:
        return max(1, int(round(self.shift_ms * sample_rate / 1000.0)))

    def length_samples(self, sample_rate: int) -> int:
        return max(1, int(round(self.length_ms * sample_rate / 1000.0)))


def num_frames(n_samples: int, frame_len: int, shift: int) -> int:
    """Count of fully contained frames: floor((n - frame_len)/shift) + 1, >= 0."""
    if n_samples < frame_len:
        return 0
    return (n_samples - frame_len) // shift + 1


def pipeline_num_frames(n_samples: int, shift: int) -> int:
    """Frames whose reference time m*shift lies inside the signal."""
    if n_samples <= 0:
        return 0
    return (n_samples - 1) // shift + 1


def read_wav(path) -> Waveform:
    """Read a mono PCM-16 or float-32 WAV file into a Waveform.

    16-bit samples are scaled by 1/32768 so full scale maps into [-1, 1).

    Raises FileNotFoundError, NonMonoError, or UnsupportedEncodingError.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such audio file: {path}")
    rate, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise NonMonoError(f"non-mono input: {path} has {data.shape[1]} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise UnsupportedEncodingError(
            f"unsupported encoding {data.dtype} in {path}; expected int16 or float32"
        )
    return Waveform(samples, int(rate))


def write_wav(path, w: Waveform, encoding: str = "int16") -> None:
    """Write a Waveform as mono WAV; round-trips within one quantization step.

    encoding: 'int16' (scale 32768, clipped to the int16 range) or 'float32'.

    Raises AmplitudeRangeError when |sample| > 1, OSError on unwritable paths.
    """
    if w.samples.size and np.max(np.abs(w.samples)) > 1.0:
        raise AmplitudeRangeError("amplitude out of range: max |sample| > 1")
    if encoding == "int16":
        q = np.round(w.samples * 32768.0)
        data = np.clip(q, -32768, 32767).astype(np.int16)
    elif encoding == "float32":
        data = w.samples.astype(np.float32)
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    wavfile.write(str(path), int(w.sample_rate), data)


@dataclass(frozen=True)
class MixResult:
    """A mixture plus the scale factors applied while constructing it."""

    mixture: Waveform
    target_scale: float
    masker_scale: float
    peak_scale: float
    tmr_db: float


def mix(target: Waveform, masker: Waveform, tmr_db: float = 0.0) -> MixResult:
    """Sum two signals at a given target-to-masker energy ratio.

    The masker is truncated or zero-padded to the target length. Both signals
    are rescaled to unit RMS over the overlap, the masker is then attenuated by
    tmr_db, and the sum is peak-scaled down to <= 1 if needed. Rescaling both
    sides makes a 0 dB mix exactly symmetric in its arguments; every applied
    factor is reported in the result.
    """
    if target.sample_rate != masker.sample_rate:
        raise AudioError(
            f"sample rate mismatch: {target.sample_rate} vs {masker.sample_rate}"
        )
    n = len(target)
    m = masker.samples[:n]
    overlap = min(n, m.size)
    if m.size < n:
        m = np.pad(m, (0, n - m.size))
    rms_t = float(np.sqrt(np.mean(np.square(target.samples[:overlap])))) if overlap else 0.0
    rms_m = float(np.sqrt(np.mean(np.square(m[:overlap])))) if overlap else 0.0
    if rms_m == 0.0:
        raise AudioError("silent masker: cannot realize a finite target-to-masker ratio")
    if rms_t == 0.0:
        raise AudioError("silent target: cannot realize a finite target-to-masker ratio")
    target_scale = 1.0 / rms_t
    masker_scale = 10.0 ** (-tmr_db / 20.0) / rms_m
    summed = target.samples * target_scale + m * masker_scale
    peak = float(np.max(np.abs(summed))) if summed.size else 0.0
    peak_scale = 1.0 / peak if peak > 1.0 else 1.0
    return MixResult(
        mixture=Waveform(summed * peak_scale, target.sample_rate),
        target_scale=target_scale,
        masker_scale=masker_scale,
        peak_scale=peak_scale,
        tmr_db=tmr_db,
    )


def synth_harmonic(
    f0: float,
    n_harmonics: int,
    duration_s: float,
    sample_rate: int = 25000,
    amplitude_decay: float = 1.0,
) -> Waveform:
    """Sum of cosines at k*f0 for k = 1..n_harmonics, harmonic k scaled by decay**(k-1).

    Exactly periodic with period sample_rate/f0 samples when that is an integer.
    Raises ValueError when the top harmonic would alias (f0*n >= Nyquist).
    """
    if f0 <= 0 or n_harmonics < 1:
        raise ValueError("f0 must be > 0 and n_harmonics >= 1")
    if f0 * n_harmonics >= sample_rate / 2:
        raise ValueError(
            f"aliasing: top harmonic {f0 * n_harmonics:.0f} Hz >= Nyquist {sample_rate / 2:.0f} Hz"
        )
    t = np.arange(int(round(duration_s * sample_rate)), dtype=np.float64) / sample_rate
    out = np.zeros_like(t)
    for k in range(1, n_harmonics + 1):
        out += amplitude_decay ** (k - 1) * np.cos(2.0 * np.pi * k * f0 * t)
    return Waveform(out, sample_rate)
