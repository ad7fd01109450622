"""Turning per-frame pitch states into two labeled talker tracks.

Three passes: enrich states with the frame's prominent summary peak, assign
every pitch to talker track 1 or 2 by continuity against the nearest earlier
pitched frame, and clear runs too short to be trusted.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tracking import PitchState, TrackingFeatures


@dataclass(frozen=True)
class EnrichmentParams:
    """lag_threshold is referenced to 25 kHz and rescaled per sample rate."""

    lag_threshold: int = 32

    def __post_init__(self):
        if self.lag_threshold <= 0:
            raise ValueError("lag_threshold must be > 0")

    def threshold_at(self, sample_rate: int) -> int:
        return max(1, int(round(self.lag_threshold * sample_rate / 25000.0)))


@dataclass
class PitchTrackPair:
    """Two per-frame pitch tracks stored as lags (0 = no pitch that frame)."""

    track1: np.ndarray
    track2: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.track1 = np.asarray(self.track1, dtype=np.float64)
        self.track2 = np.asarray(self.track2, dtype=np.float64)
        if self.track1.shape != self.track2.shape:
            raise ValueError("tracks must have equal frame counts")

    @property
    def n_frames(self) -> int:
        return self.track1.size

    @classmethod
    def empty(cls, n_frames: int, sample_rate: int) -> "PitchTrackPair":
        return cls(np.zeros(n_frames), np.zeros(n_frames), sample_rate)

    def lags_at(self, m: int) -> list[float]:
        out = []
        if self.track1[m] > 0:
            out.append(float(self.track1[m]))
        if self.track2[m] > 0:
            out.append(float(self.track2[m]))
        return out

    def hz(self, lag: float) -> float:
        return self.sample_rate / lag if lag > 0 else 0.0

    def copy(self) -> "PitchTrackPair":
        return PitchTrackPair(self.track1.copy(), self.track2.copy(), self.sample_rate)


def prominent_pitch(summary: np.ndarray, grid: np.ndarray) -> int | None:
    """Lag of the strongest summary peak; None on silent (all-zero) frames.

    Equal peaks resolve to the smaller lag.
    """
    if summary.size == 0 or not np.any(summary > 0.0):
        return None
    return int(grid[int(np.argmax(summary))])


def enrich(states: list[PitchState], prominents: list[int | None],
           lag_threshold: int) -> list[PitchState]:
    """Override weak hypotheses with the prominent pitch.

    A zero-pitch frame with a prominent peak becomes a one-pitch frame; a
    one-pitch frame whose prominent peak is farther than the threshold gains
    it as a second pitch. Two-pitch frames never change.
    """
    if len(states) != len(prominents):
        raise ValueError("states and prominents must align")
    out = []
    for st, prom in zip(states, prominents):
        if prom is None or st.cardinality == 2:
            out.append(st)
        elif st.cardinality == 0:
            out.append(PitchState((prom,)))
        else:
            tau = st.lags[0]
            if abs(prom - tau) > lag_threshold:
                out.append(PitchState((tau, prom)))
            else:
                out.append(st)
    return out


def group(states: list[PitchState], lag_threshold: int,
          sample_rate: int) -> PitchTrackPair:
    """Assign each frame's pitches to talker tracks by lag continuity.

    The reference is the nearest earlier frame with any pitch. Two current
    against two previous pitches take the pairing with the smaller summed lag
    distance; a lone pitch follows its nearest reference lag, except that a
    lone pitch against a lone reference switches tracks when they differ by
    more than the threshold. The first pitched frame puts its smaller lag on
    track 1.
    """
    n = len(states)
    pair = PitchTrackPair.empty(n, sample_rate)
    prev_lags: list[float] = []          # lags of the reference frame
    prev_tracks: list[int] = []          # owning track (1 or 2) per lag
    for m, st in enumerate(states):
        lags = [float(t) for t in st.lags]
        if not lags:
            continue
        if not prev_lags:
            # seed: smaller lag to track 1
            pair.track1[m] = lags[0]
            if len(lags) == 2:
                pair.track2[m] = lags[1]
                prev_lags, prev_tracks = lags, [1, 2]
            else:
                prev_lags, prev_tracks = lags, [1]
            continue
        assign: dict[int, float] = {}
        if len(lags) == 2 and len(prev_lags) == 2:
            i1 = prev_tracks[0]
            i2 = prev_tracks[1]
            straight = abs(lags[0] - prev_lags[0]) + abs(lags[1] - prev_lags[1])
            crossed = abs(lags[0] - prev_lags[1]) + abs(lags[1] - prev_lags[0])
            if straight <= crossed:
                assign = {i1: lags[0], i2: lags[1]}
            else:
                assign = {i2: lags[0], i1: lags[1]}
        elif len(lags) == 2:
            t_ref = prev_tracks[0]
            d0, d1 = abs(lags[0] - prev_lags[0]), abs(lags[1] - prev_lags[0])
            near, far = (lags[0], lags[1]) if d0 <= d1 else (lags[1], lags[0])
            assign = {t_ref: near, 3 - t_ref: far}
        elif len(prev_lags) == 2:
            d0, d1 = abs(lags[0] - prev_lags[0]), abs(lags[0] - prev_lags[1])
            # tie on distance: follow the smaller reference lag
            k = 0 if (d0, prev_lags[0]) <= (d1, prev_lags[1]) else 1
            assign = {prev_tracks[k]: lags[0]}
        else:
            t_ref = prev_tracks[0]
            if abs(lags[0] - prev_lags[0]) <= lag_threshold:
                assign = {t_ref: lags[0]}
            else:
                assign = {3 - t_ref: lags[0]}
        for trk, lag in assign.items():
            (pair.track1 if trk == 1 else pair.track2)[m] = lag
        prev_lags = [assign[t] for t in sorted(assign)]
        prev_tracks = sorted(assign)
    return pair


def _clear_short_runs(track: np.ndarray, min_run: int) -> np.ndarray:
    out = track.copy()
    n = out.size
    m = 0
    while m < n:
        if out[m] > 0:
            start = m
            while m < n and out[m] > 0:
                m += 1
            if m - start < min_run:
                out[start:m] = 0.0
        else:
            m += 1
    return out


def refine(tracks: PitchTrackPair, min_run: int = 5) -> PitchTrackPair:
    """Remove per-track pitch runs shorter than min_run contiguous frames."""
    return PitchTrackPair(
        _clear_short_runs(tracks.track1, min_run),
        _clear_short_runs(tracks.track2, min_run),
        tracks.sample_rate,
    )


def nearest_pitch_before(track: np.ndarray, m: int) -> float | None:
    """Latest pitched value on the track strictly before frame m."""
    for k in range(m - 1, -1, -1):
        if track[k] > 0:
            return float(track[k])
    return None


def nearest_pitch_after(track: np.ndarray, m: int) -> float | None:
    for k in range(m + 1, track.size):
        if track[k] > 0:
            return float(track[k])
    return None


def write_tracks_csv(tracks: PitchTrackPair, path, shift_ms: float = 10.0) -> None:
    """CSV with header frame,time_s,track1_hz,track2_hz; absent pitch is 0."""
    with open(path, "w", newline="\n") as fh:
        fh.write("frame,time_s,track1_hz,track2_hz\n")
        for m in range(tracks.n_frames):
            t = m * shift_ms / 1000.0
            f1 = tracks.hz(tracks.track1[m])
            f2 = tracks.hz(tracks.track2[m])
            fh.write(f"{m},{t:.4f},{f1:.4f},{f2:.4f}\n")


def read_tracks_csv(path, sample_rate: int) -> PitchTrackPair:
    """Inverse of write_tracks_csv; frequencies are converted back to lags."""
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "frame,time_s,track1_hz,track2_hz":
            raise ValueError(f"unexpected track CSV header: {header!r}")
        for line in fh:
            if line.strip():
                rows.append(line.strip().split(","))
    t1 = np.zeros(len(rows))
    t2 = np.zeros(len(rows))
    for k, row in enumerate(rows):
        f1, f2 = float(row[2]), float(row[3])
        t1[k] = sample_rate / f1 if f1 > 0 else 0.0
        t2[k] = sample_rate / f2 if f2 > 0 else 0.0
    return PitchTrackPair(t1, t2, sample_rate)
