"""Frame-level pitch hypothesis space and Viterbi tracking of up to two pitches.

States are unordered sets of 0, 1, or 2 lags from a grid inside the pitch
range. Observation scores come from the frame's normalized summary
autocorrelation; evidence for a second lag is read from a residual summary
that excludes channels whose autocorrelation peaks near the first lag, so one
strong talker cannot count as both pitches. Transitions reward staying in the
same hypothesis class and penalize lag jumps with a Laplacian continuity term.

The Viterbi recursion is exact over the full state space: the per-lag
continuity term factorizes, so the max over predecessors reduces to 1-D/2-D
max-plus distance transforms (two-pass, linear per axis) instead of an
all-pairs sweep.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .peripheral import CorrelogramFrame, pitch_lag_bounds, summary_acf


@dataclass(frozen=True, order=True)
class PitchState:
    """An unordered set of 0, 1, or 2 pitch lags (sample points)."""

    lags: tuple[int, ...]

    def __post_init__(self):
        lags = tuple(sorted(int(x) for x in self.lags))
        if len(lags) > 2:
            raise ValueError("at most two simultaneous pitches")
        if len(lags) == 2 and lags[0] == lags[1]:
            raise ValueError("two-pitch state needs distinct lags")
        object.__setattr__(self, "lags", lags)

    @property
    def cardinality(self) -> int:
        return len(self.lags)


@dataclass(frozen=True)
class TrackerParams:
    """Scoring knobs; calibrated once on synthetic mixtures, not per corpus.

    existence_penalty: cost per hypothesized pitch and per cardinality change.
    continuity_scale: Laplacian scale (lag samples) for cross-frame jumps,
        also the half-width of the channel exclusion around the first lag.
    self_bonus: reward for staying in the same hypothesis class.
    floor: additive floor inside every log evidence term.
    """

    existence_penalty: float = 0.35
    continuity_scale: float = 4.0
    self_bonus: float = 0.1
    floor: float = 1e-3

    def __post_init__(self):
        if self.existence_penalty <= 0:
            raise ValueError("existence_penalty must be > 0")
        if self.continuity_scale <= 0 or self.floor <= 0:
            raise ValueError("continuity_scale and floor must be > 0")


def lag_grid(lag_min: int, lag_max: int, stride: int = 1) -> np.ndarray:
    if stride < 1:
        raise ValueError("stride must be >= 1")
    return np.arange(lag_min, lag_max + 1, stride, dtype=np.int64)


def enumerate_states(lag_min: int, lag_max: int, stride: int = 1) -> list[PitchState]:
    """All zero-, one-, and two-lag states on the grid: 1 + L + L(L-1)/2 states."""
    grid = lag_grid(lag_min, lag_max, stride)
    states = [PitchState(())]
    states.extend(PitchState((int(t),)) for t in grid)
    for i in range(grid.size):
        for j in range(i + 1, grid.size):
            states.append(PitchState((int(grid[i]), int(grid[j]))))
    return states


def state_count(n_grid_lags: int) -> int:
    return 1 + n_grid_lags + n_grid_lags * (n_grid_lags - 1) // 2


@dataclass
class TrackingFeatures:
    """Per-frame evidence consumed by the tracker.

    summary: normalized summary autocorrelation over the lag grid (max 1,
        all zero on silence).
    residual: residual[i, j] is the summary at grid lag j recomputed without
        the channels whose autocorrelation peaks within the exclusion
        half-width of grid lag i, sharing the original normalization.
    """

    grid: np.ndarray
    summary: np.ndarray
    residual: np.ndarray

    @classmethod
    def from_correlogram(cls, cf: CorrelogramFrame, stride: int = 1,
                         exclusion_halfwidth: float = 4.0) -> "TrackingFeatures":
        grid = lag_grid(cf.lag_min, cf.lag_max, stride)
        cols = (grid - cf.lag_min).astype(np.intp)
        a = cf.a_h[:, cols]
        L = grid.size
        if cf.silent:
            return cls(grid, np.zeros(L), np.zeros((L, L)))
        s_raw = a.sum(axis=0)
        norm = float(s_raw.max()) if L else 0.0
        if norm <= 0.0:
            return cls(grid, np.zeros(L), np.zeros((L, L)))
        live = np.any(a != 0.0, axis=1)
        peaks = np.argmax(a, axis=1)
        buckets = np.zeros((L, L))
        for c in np.flatnonzero(live):
            buckets[peaks[c]] += a[c]
        cum = np.vstack([np.zeros(L), np.cumsum(buckets, axis=0)])
        lo = np.searchsorted(grid, grid - exclusion_halfwidth, side="left")
        hi = np.searchsorted(grid, grid + exclusion_halfwidth, side="right")
        excluded = cum[hi] - cum[lo]
        residual = np.maximum(s_raw[None, :] - excluded, 0.0) / norm
        return cls(grid, s_raw / norm, residual)

    @classmethod
    def from_summary_matrix(cls, grid: np.ndarray, a_h: np.ndarray,
                            exclusion_halfwidth: float = 4.0) -> "TrackingFeatures":
        """Build features straight from a channel x grid-lag correlation matrix."""
        cf = CorrelogramFrame(a_h=np.asarray(a_h, dtype=np.float64), a_e=None,
                              frame_index=0, lag_min=int(grid[0]), lag_max=int(grid[-1]),
                              window_len=0, live_channels=a_h.shape[0], silent=False)
        stride = int(grid[1] - grid[0]) if len(grid) > 1 else 1
        return cls.from_correlogram(cf, stride=stride,
                                    exclusion_halfwidth=exclusion_halfwidth)


def features_for_frames(cfs: Iterable[CorrelogramFrame], params: TrackerParams,
                        stride: int = 1) -> list[TrackingFeatures]:
    return [TrackingFeatures.from_correlogram(cf, stride, params.continuity_scale)
            for cf in cfs]


def _evidence(x, floor):
    return np.log(floor + x)


def _observation_arrays(feat: TrackingFeatures, params: TrackerParams):
    """Scores for every state: scalar for S0, (L,) for S1, (L, L) for S2."""
    s = feat.summary
    resid = feat.residual
    beta = params.existence_penalty
    eps = params.floor
    L = s.size
    score0 = float(_evidence(1.0 - (s.max() if L else 0.0), eps))
    resid_peak = resid.max(axis=1) if L else np.zeros(0)
    score1 = _evidence(s, eps) - beta + _evidence(1.0 - resid_peak, eps)
    ii, jj = np.meshgrid(np.arange(L), np.arange(L), indexing="ij")
    primary_is_i = (s[:, None] > s[None, :]) | ((s[:, None] == s[None, :]) & (ii < jj))
    prim = np.where(primary_is_i, ii, jj)
    sec = np.where(primary_is_i, jj, ii)
    score2 = _evidence(s[prim], eps) + _evidence(resid[prim, sec], eps) - 2.0 * beta
    np.fill_diagonal(score2, -np.inf)
    return score0, score1, score2


def observation_score(state: PitchState, feat: TrackingFeatures,
                      params: TrackerParams = TrackerParams()) -> float:
    """Log evidence of one state given a frame's features.

    S0 scores the absence of any summary peak; a one-pitch state scores its
    peak and the absence of residual evidence; a two-pitch state scores the
    stronger lag on the full summary and the other lag on the residual.
    """
    s = feat.summary
    resid = feat.residual
    beta = params.existence_penalty
    eps = params.floor
    if state.cardinality == 0:
        return float(_evidence(1.0 - (s.max() if s.size else 0.0), eps))
    idx = [int(np.searchsorted(feat.grid, t)) for t in state.lags]
    for k, t in zip(idx, state.lags):
        if k >= feat.grid.size or feat.grid[k] != t:
            raise ValueError(f"lag {t} is not on the tracking grid")
    if state.cardinality == 1:
        i = idx[0]
        return float(_evidence(s[i], eps) - beta + _evidence(1.0 - resid[i].max(), eps))
    i, j = idx
    if (s[j], -feat.grid[j]) > (s[i], -feat.grid[i]):
        i, j = j, i
    return float(_evidence(s[i], eps) + _evidence(resid[i, j], eps) - 2.0 * beta)


def transition_score(prev: PitchState, nxt: PitchState,
                     params: TrackerParams = TrackerParams()) -> float:
    """Class-change cost plus Laplacian continuity over distance-matched lags."""
    beta = params.existence_penalty
    sigma = params.continuity_scale
    score = params.self_bonus if prev.cardinality == nxt.cardinality else \
        -beta * abs(prev.cardinality - nxt.cardinality)
    p, n = prev.lags, nxt.lags
    if not p or not n:
        return float(score)
    if len(p) == 1 and len(n) == 1:
        dist = abs(p[0] - n[0])
    elif len(p) == 1:
        dist = min(abs(p[0] - n[0]), abs(p[0] - n[1]))
    elif len(n) == 1:
        dist = min(abs(p[0] - n[0]), abs(p[1] - n[0]))
    else:
        dist = min(abs(p[0] - n[0]) + abs(p[1] - n[1]),
                   abs(p[0] - n[1]) + abs(p[1] - n[0]))
    return float(score - dist / sigma)


def _dt_rows(values: np.ndarray, slopes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise max-plus distance transform with per-column slope steps.

    out[r, i] = max_j values[r, j] - |cum(i) - cum(j)| where consecutive
    columns are slopes[k] apart. Returns (out, source column), preferring the
    smaller source index on ties.
    """
    v = values.copy()
    n_rows, L = v.shape
    src = np.tile(np.arange(L), (n_rows, 1))
    for i in range(1, L):
        cand = v[:, i - 1] - slopes[i - 1]
        take = cand >= v[:, i]
        v[take, i] = cand[take]
        src[take, i] = src[take, i - 1]
    for i in range(L - 2, -1, -1):
        cand = v[:, i + 1] - slopes[i]
        take = cand > v[:, i]
        v[take, i] = cand[take]
        src[take, i] = src[take, i + 1]
    return v, src


def _pack(card: int, i: int = 0, j: int = 0, L: int = 0) -> int:
    if card == 0:
        return 0
    if card == 1:
        return 1 + i
    a, b = (i, j) if i < j else (j, i)
    return 1 + L + a * L + b


def _unpack(code: int, grid: np.ndarray) -> PitchState:
    L = grid.size
    if code == 0:
        return PitchState(())
    code -= 1
    if code < L:
        return PitchState((int(grid[code]),))
    code -= L
    return PitchState((int(grid[code // L]), int(grid[code % L])))


def viterbi_track(features: Sequence[TrackingFeatures],
                  params: TrackerParams = TrackerParams()) -> list[PitchState]:
    """Most probable state path under observation plus transition scores.

    Exact over the full grid; ties at the final frame fall to the lower
    cardinality state, then the lexicographically smaller lag set.
    """
    if not features:
        raise ValueError("need at least one frame")
    grid = features[0].grid
    L = grid.size
    beta = params.existence_penalty
    bonus = params.self_bonus
    slopes = np.diff(grid).astype(np.float64) / params.continuity_scale if L > 1 \
        else np.zeros(0)

    obs0, obs1, obs2 = _observation_arrays(features[0], params)
    v0, v1, v2 = obs0, obs1, obs2
    bp: list[tuple[int, np.ndarray, np.ndarray]] = []

    for feat in features[1:]:
        if feat.grid.size != L or not np.array_equal(feat.grid, grid):
            raise ValueError("all frames must share one lag grid")
        obs0, obs1, obs2 = _observation_arrays(feat, params)

        best1 = int(np.argmax(v1)) if L else 0
        m1 = v1[best1] if L else -np.inf
        flat2 = int(np.argmax(v2)) if L else 0
        m2 = v2.flat[flat2] if L else -np.inf
        best2 = (flat2 // L, flat2 % L)

        # into S0: prefer lower-cardinality predecessors on ties
        cands0 = (v0 + bonus, m1 - beta, m2 - 2.0 * beta)
        pick0 = int(np.argmax(cands0))
        n0 = obs0 + cands0[pick0]
        bp0 = (_pack(0), _pack(1, best1, L=L), _pack(2, *best2, L=L))[pick0]

        # into S1{tau}
        d1, d1src = _dt_rows(v1[None, :], slopes)
        d1, d1src = d1[0], d1src[0]
        g_val = v2.max(axis=1)
        g_arg = np.argmax(v2, axis=1)
        dg, dgsrc = _dt_rows(g_val[None, :], slopes)
        dg, dgsrc = dg[0], dgsrc[0]
        c_from0 = np.full(L, v0 - beta)
        c_from1 = d1 + bonus
        c_from2 = dg - beta
        stacked = np.stack([c_from0, c_from1, c_from2])
        pick1 = np.argmax(stacked, axis=0)
        n1 = obs1 + np.take_along_axis(stacked, pick1[None, :], axis=0)[0]
        bp1 = np.empty(L, dtype=np.int64)
        sel0 = pick1 == 0
        sel1 = pick1 == 1
        sel2 = pick1 == 2
        bp1[sel0] = _pack(0)
        bp1[sel1] = 1 + d1src[sel1]
        anchors = dgsrc[sel2]
        bp1[sel2] = [_pack(2, int(a), int(g_arg[a]), L=L) for a in anchors]

        # into S2{tau1, tau2}
        c2_from0 = v0 - 2.0 * beta
        pair_from1 = np.maximum(d1[:, None], d1[None, :]) - beta
        anchor_is_row = d1[:, None] >= d1[None, :]
        t_rows, t_src_b = _dt_rows(v2, slopes)
        t_full, t_src_a = _dt_rows(t_rows.T, slopes)
        t_full = t_full.T + bonus
        t_src_a = t_src_a.T

        bp2 = np.zeros((L, L), dtype=np.int64)
        stack2 = np.stack([np.full((L, L), c2_from0), pair_from1, t_full])
        pick2 = np.argmax(stack2, axis=0)
        n2 = obs2 + np.take_along_axis(stack2, pick2[None, :, :], axis=0)[0]
        bp2[pick2 == 0] = _pack(0)
        m_from1 = pick2 == 1
        anchor_idx = np.where(anchor_is_row,
                              np.arange(L)[:, None] * np.ones((1, L), dtype=np.int64),
                              np.ones((L, 1), dtype=np.int64) * np.arange(L)[None, :])
        bp2[m_from1] = 1 + d1src[anchor_idx[m_from1]]
        m_from2 = pick2 == 2
        if np.any(m_from2):
            rows_a = t_src_a[m_from2]
            cols = np.nonzero(m_from2)[1]
            src_b = t_src_b[rows_a, cols]
            bp2[m_from2] = [_pack(2, int(a), int(b), L=L) for a, b in zip(rows_a, src_b)]
        np.fill_diagonal(n2, -np.inf)

        v0, v1, v2 = n0, n1, n2
        bp.append((bp0, bp1.astype(np.int32), bp2.astype(np.int32)))

    # final state: max score, ties to lower cardinality then smaller lag set
    best = PitchState(())
    best_score = v0
    if L:
        i1 = int(np.argmax(v1))
        if v1[i1] > best_score:
            best, best_score = PitchState((int(grid[i1]),)), v1[i1]
        f2 = int(np.argmax(v2))
        if v2.flat[f2] > best_score:
            i, j = f2 // L, f2 % L
            best, best_score = PitchState((int(grid[i]), int(grid[j]))), v2.flat[f2]

    path = [best]
    for bp0, bp1, bp2 in reversed(bp):
        cur = path[-1]
        if cur.cardinality == 0:
            code = bp0
        elif cur.cardinality == 1:
            code = int(bp1[np.searchsorted(grid, cur.lags[0])])
        else:
            i = int(np.searchsorted(grid, cur.lags[0]))
            j = int(np.searchsorted(grid, cur.lags[1]))
            code = int(bp2[i, j])
        path.append(_unpack(int(code), grid))
    path.reverse()
    return path


def path_score(path: Sequence[PitchState], features: Sequence[TrackingFeatures],
               params: TrackerParams = TrackerParams()) -> float:
    """Total observation + transition score of a state sequence."""
    total = observation_score(path[0], features[0], params)
    for k in range(1, len(path)):
        total += transition_score(path[k - 1], path[k], params)
        total += observation_score(path[k], features[k], params)
    return float(total)


def track_states(cfs: Sequence[CorrelogramFrame],
                 params: TrackerParams = TrackerParams(),
                 stride: int = 1) -> list[PitchState]:
    """Correlogram frames in, per-frame pitch states out."""
    feats = features_for_frames(cfs, params, stride)
    return viterbi_track(feats, params)
