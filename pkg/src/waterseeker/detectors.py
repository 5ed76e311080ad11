"""Watermarked-segment detectors over a score stream.

All four detectors share one significance scale: a window is ranked by its
exact null tail probability and accepted when it clears the threshold for
its own length (see ``stats.WindowTest``).  Every result carries
``n_windows``, the number of window statistics the detector evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .stats import WindowStatistic, aar_token_scores, window_statistic, window_test_for
from .streams import Scheme, SchemeParams, ScoreStream, SegmentSpan, StreamError


class DegenerateInputError(StreamError):
    """The stream is too short for the requested window."""


@dataclass(frozen=True)
class DetectionResult:
    has_watermark: bool
    indices: list = field(default_factory=list)
    per_segment_stats: list = field(default_factory=list)
    n_windows: int = 0

    def __post_init__(self):
        if self.has_watermark != bool(self.indices):
            raise ValueError("has_watermark must equal bool(indices)")
        if len(self.per_segment_stats) != len(self.indices):
            raise ValueError("per_segment_stats must align with indices")
        for a, b in zip(self.indices, self.indices[1:]):
            if b.start < a.end:
                raise ValueError("indices must be sorted and disjoint")

    def to_dict(self) -> dict:
        return {
            "has_watermark": self.has_watermark,
            "indices": [[s.start, s.end] for s in self.indices],
            "n_windows": self.n_windows,
        }


NEGATIVE = DetectionResult(False)


@dataclass(frozen=True)
class WaterSeekerConfig:
    window: int = 50
    top_k: int = 20
    connect_tolerance: int = 100
    min_segment_len: int = 50
    alpha: float = 1e-6
    gamma: float = 0.5
    clt_cutoff: Optional[int] = 200

    def __post_init__(self):
        if self.window < 2:
            raise ValueError("window must be at least 2")
        if self.top_k < 1:
            raise ValueError("top_k must be at least 1")
        if self.min_segment_len < 1:
            raise ValueError("min_segment_len must be at least 1")
        if self.connect_tolerance < 0:
            raise ValueError("connect_tolerance must be non-negative")

    def scheme_params(self, scheme: Scheme) -> SchemeParams:
        return SchemeParams(scheme, gamma=self.gamma, alpha=self.alpha, clt_cutoff=self.clt_cutoff)


def prefix_sums(stream: ScoreStream) -> np.ndarray:
    """Cumulative additive evidence: green counts (KGW) or log(1/(1-u)) sums (AAR)."""
    if stream.scheme is Scheme.KGW:
        scores = stream.values.astype(np.int64)
    else:
        scores = aar_token_scores(stream.values)
    out = np.zeros(len(stream) + 1, dtype=scores.dtype)
    np.cumsum(scores, out=out[1:])
    return out


def _accepted(stream, spans, params) -> DetectionResult:
    stats = [window_statistic(stream, s, params.gamma) for s in spans]
    return DetectionResult(bool(spans), list(spans), stats)


def _with_count(result: DetectionResult, n_windows: int) -> DetectionResult:
    return DetectionResult(result.has_watermark, result.indices, result.per_segment_stats, n_windows)


def full_text_detect(stream: ScoreStream, params: SchemeParams) -> DetectionResult:
    """Test the whole document as a single window."""
    n = len(stream)
    if n == 0:
        raise DegenerateInputError("empty stream")
    test = window_test_for(params)
    cs = prefix_sums(stream)
    if not test.passes(np.array([n]), np.array([cs[-1]], dtype=np.float64))[0]:
        return _with_count(NEGATIVE, 1)
    return _with_count(_accepted(stream, [SegmentSpan(0, n)], params), 1)


def winmax_detect(stream: ScoreStream, params: SchemeParams, interval: int = 1) -> DetectionResult:
    """Most significant window over sizes 1, 1 + interval, ... and all offsets.

    Returns at most one span.  Window sizes whose threshold is unreachable
    are scanned but never selected.
    """
    if interval < 1:
        raise ValueError("interval must be at least 1")
    n = len(stream)
    test = window_test_for(params)
    cs = prefix_sums(stream)
    sizes = np.arange(1, n + 1, interval)
    best_raw = np.empty(sizes.size)
    best_start = np.empty(sizes.size, dtype=np.int64)
    for i, w in enumerate(sizes):
        sums = cs[w:] - cs[:-w]
        j = int(np.argmax(sums))
        best_raw[i] = sums[j]
        best_start[i] = j
    n_windows = int(np.sum(n - sizes + 1))

    ok = test.decidable(sizes)
    if not ok.any():
        return _with_count(NEGATIVE, n_windows)
    log_tails = np.full(sizes.size, np.inf)
    log_tails[ok] = test.log_tail(sizes[ok], best_raw[ok])
    i = int(np.argmin(log_tails))
    if not test.passes(sizes[i:i + 1], best_raw[i:i + 1])[0]:
        return _with_count(NEGATIVE, n_windows)
    span = SegmentSpan(int(best_start[i]), int(best_start[i] + sizes[i]))
    return _with_count(_accepted(stream, [span], params), n_windows)


def _merge_runs(starts: np.ndarray, max_step: int, extend: int) -> list[tuple[int, int]]:
    """Group sorted window starts whose successive gaps are at most ``max_step``."""
    if starts.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(starts) > max_step)
    firsts = np.concatenate(([starts[0]], starts[breaks + 1]))
    lasts = np.concatenate((starts[breaks], [starts[-1]]))
    return [(int(a), int(b) + extend) for a, b in zip(firsts, lasts)]


def flsw_detect(stream: ScoreStream, params: SchemeParams, window: int) -> DetectionResult:
    """Fixed-length sliding window; passing windows that overlap or abut are merged."""
    n = len(stream)
    if window < 1 or window > n:
        raise DegenerateInputError(f"window {window} does not fit a stream of length {n}")
    test = window_test_for(params)
    cs = prefix_sums(stream)
    sums = (cs[window:] - cs[:-window]).astype(np.float64)
    passed = test.passes(np.full(sums.size, window), sums)
    spans = [SegmentSpan(a, b) for a, b in _merge_runs(np.flatnonzero(passed), window, window)]
    return _with_count(_accepted(stream, spans, params), int(sums.size))


# -- WaterSeeker --------------------------------------------------------------

def _window_sums(stream: ScoreStream, cs: np.ndarray, w: int) -> np.ndarray:
    n = len(stream)
    if n < w:
        raise DegenerateInputError(f"stream of length {n} is shorter than window {w}")
    return cs[w:] - cs[:-w]


def _localize(stream: ScoreStream, cs: np.ndarray, cfg: WaterSeekerConfig) -> list[SegmentSpan]:
    w = cfg.window
    sums = _window_sums(stream, cs, w)
    k = min(cfg.top_k, sums.size)
    mean = sums.mean()
    top_mean = np.partition(sums, sums.size - k)[sums.size - k:].mean()
    if stream.scheme is Scheme.AAR and top_mean - mean <= 1e-12 * max(1.0, abs(mean)):
        # constant stream up to rounding in the prefix sums
        return []
    # window means scaled by w: s_i > mean + (top - mean) / 2
    anomalous = np.flatnonzero(2 * sums > mean + top_mean)
    runs = _merge_runs(anomalous, cfg.connect_tolerance + 1, w)
    merged: list[list[int]] = []
    for a, b in runs:
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return [SegmentSpan(a, b) for a, b in merged if b - a >= cfg.min_segment_len]


def waterseeker_localize(stream: ScoreStream, cfg: WaterSeekerConfig = WaterSeekerConfig()) -> list[SegmentSpan]:
    """Suspicious regions from smoothed scores, thresholded halfway to the top-k mean.

    Anomalous window starts separated by at most ``connect_tolerance``
    non-anomalous starts are joined; a run of starts ``i..j`` becomes the
    token span ``[i, j + window)``.
    """
    return _localize(stream, prefix_sums(stream), cfg)


def _traverse(cs, span: SegmentSpan, w: int, n: int, test, min_len: int):
    """Most significant sub-window with start in [s', s'+w) and end in (e'-w, e'].

    Candidates shorter than ``min_len`` are not ranked.  Returns the best
    ``(start, length, raw)`` or None, and the number of windows computed.
    """
    starts = np.arange(span.start, min(span.start + w, n))
    ends = np.arange(max(span.end - w + 1, 1), span.end + 1)
    lengths = ends[None, :] - starts[:, None]
    raws = (cs[ends][None, :] - cs[starts][:, None]).astype(np.float64)
    # every (start, end) pair with positive length has its statistic computed
    n_eval = int((lengths >= 1).sum())
    valid = lengths >= max(min_len, 1)
    st = np.broadcast_to(starts[:, None], lengths.shape)[valid]
    ln, rw = lengths[valid], raws[valid]
    if not test.may_pass(ln, rw).any():
        # the top-ranked candidate could not clear its threshold either
        return None, n_eval

    # best candidate per length: highest statistic, then earliest start
    order = np.lexsort((st, -rw, ln))
    st, ln, rw = st[order], ln[order], rw[order]
    first = np.ones(ln.size, dtype=bool)
    first[1:] = ln[1:] != ln[:-1]
    st, ln, rw = st[first], ln[first], rw[first]
    ok = test.decidable(ln)
    if not ok.any():
        return None, n_eval
    st, ln, rw = st[ok], ln[ok], rw[ok]
    log_tails = test.log_tail(ln, rw)
    # most significant; ties go to the longer span
    i = int(np.lexsort((-ln, log_tails))[0])
    return (int(st[i]), int(ln[i]), rw[i]), n_eval


def waterseeker_detect(
    stream: ScoreStream,
    cfg: WaterSeekerConfig = WaterSeekerConfig(),
    params: Optional[SchemeParams] = None,
    traverse: bool = True,
) -> DetectionResult:
    """Localize suspicious regions, then search each one's boundary neighbourhood.

    ``params`` overrides the statistical settings of ``cfg`` when given.
    With ``traverse=False`` each localized span is tested as is.
    """
    params = params or cfg.scheme_params(stream.scheme)
    test = window_test_for(params)
    cs = prefix_sums(stream)
    n = len(stream)
    spans = _localize(stream, cs, cfg)
    n_windows = n - cfg.window + 1
    accepted = []
    for span in spans:
        if traverse:
            best, n_eval = _traverse(cs, span, cfg.window, n, test, cfg.min_segment_len)
            n_windows += n_eval
            if best is None:
                continue
            start, length, raw = best
        else:
            start, length = span.start, len(span)
            raw = float(cs[span.end] - cs[span.start])
            n_windows += 1
        if test.passes(np.array([length]), np.array([raw]))[0]:
            accepted.append(SegmentSpan(start, start + length))
    return _with_count(_accepted(stream, accepted, params), n_windows)
