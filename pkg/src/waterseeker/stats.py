"""Window statistics, null tail probabilities and threshold calibration.

KGW windows are scored by the green-token z-score, with exact binomial null
tails.  AAR windows are scored by ``S = sum(log(1 / (1 - u)))``, which is
Gamma(W, 1) under the null.  Tail probabilities are carried in log space so
that very significant windows can still be ranked against each other.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from statistics import NormalDist
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .streams import Scheme, SchemeParams, ScoreStream, SegmentSpan

TABLE_VERSION = 1
AAR_CLAMP = 1.0 - 2.0 ** -53

_EPS = 1e-16
_FPMIN = 1e-300
_MAX_ITER = 100_000


class ConvergenceError(ArithmeticError):
    pass


# -- scalar statistics --------------------------------------------------------

def kgw_z(green_count, w, gamma):
    """z-score of ``green_count`` green tokens in a window of ``w`` tokens."""
    if np.any(np.asarray(w) <= 0):
        raise ValueError("window length must be positive")
    return (green_count - gamma * w) / np.sqrt(gamma * (1.0 - gamma) * w)


def aar_token_scores(values) -> np.ndarray:
    """Per-token AAR evidence ``log(1 / (1 - u))``, with ``u`` clamped below 1."""
    u = np.minimum(np.asarray(values, dtype=np.float64), AAR_CLAMP)
    return -np.log1p(-u)


def aar_sum(values) -> float:
    u = np.asarray(values, dtype=np.float64)
    if u.size == 0:
        raise ValueError("empty window")
    if np.any(u < 0) or np.any(u > 1):
        raise ValueError("AAR values must lie in [0, 1]")
    return math.fsum(aar_token_scores(u))


# -- incomplete gamma ---------------------------------------------------------

def _gamma_series(a, x):
    """log of the lower regularized gamma P(a, x) by its power series."""
    ap = a.copy()
    term = 1.0 / a
    total = term.copy()
    active = np.arange(a.size)
    for _ in range(_MAX_ITER):
        ap[active] += 1.0
        term[active] *= x[active] / ap[active]
        total[active] += term[active]
        active = active[np.abs(term[active]) >= np.abs(total[active]) * _EPS]
        if active.size == 0:
            break
    else:
        raise ConvergenceError("gamma series did not converge")
    return np.log(total) - x + a * np.log(x) - gammaln(a)


def _gamma_contfrac(a, x):
    """log of the upper regularized gamma Q(a, x) by modified Lentz."""
    b = x + 1.0 - a
    c = np.full_like(a, 1.0 / _FPMIN)
    d = 1.0 / b
    h = d.copy()
    active = np.arange(a.size)
    for i in range(1, _MAX_ITER):
        aa, bb = a[active], b[active]
        an = -i * (i - aa)
        bb = bb + 2.0
        b[active] = bb
        dd = an * d[active] + bb
        dd = np.where(np.abs(dd) < _FPMIN, _FPMIN, dd)
        cc = bb + an / c[active]
        cc = np.where(np.abs(cc) < _FPMIN, _FPMIN, cc)
        dd = 1.0 / dd
        delta = dd * cc
        d[active], c[active] = dd, cc
        h[active] *= delta
        active = active[np.abs(delta - 1.0) >= _EPS]
        if active.size == 0:
            break
    else:
        raise ConvergenceError("gamma continued fraction did not converge")
    return np.log(h) - x + a * np.log(x) - gammaln(a)


def log_gamma_cdf_sf(s, x):
    """Return ``(log P(s, x), log Q(s, x))`` elementwise.

    The series is used for ``x < s + 1`` and the continued fraction
    otherwise; the other tail follows by complement.
    """
    s, x = np.broadcast_arrays(np.asarray(s, dtype=np.float64), np.asarray(x, dtype=np.float64))
    shape = s.shape
    s, x = s.ravel().copy(), x.ravel().copy()
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(x))):
        raise ValueError("non-finite input")
    if np.any(s <= 0) or np.any(x < 0):
        raise ValueError("require s > 0 and x >= 0")
    log_p = np.full(s.shape, -np.inf)
    log_q = np.zeros(s.shape)
    pos = x > 0
    use_series = pos & (x < s + 1.0)
    use_cf = pos & ~use_series
    if use_series.any():
        lp = _gamma_series(s[use_series], x[use_series])
        log_p[use_series] = lp
        log_q[use_series] = np.log1p(-np.exp(lp))
    if use_cf.any():
        lq = _gamma_contfrac(s[use_cf], x[use_cf])
        log_q[use_cf] = lq
        log_p[use_cf] = np.log1p(-np.exp(lq))
    return log_p.reshape(shape), log_q.reshape(shape)


def regularized_gamma_cdf(s, x):
    """P(s, x) = gamma(s, x) / Gamma(s), the Gamma(s, 1) CDF at ``x``."""
    out = np.exp(log_gamma_cdf_sf(s, x)[0])
    return float(out) if out.ndim == 0 else out


def log_gamma_sf(s, x):
    return log_gamma_cdf_sf(s, x)[1]


def aar_p_value(sum_stat, w):
    """Null probability that a ``w``-token AAR window sums to at least ``sum_stat``."""
    if np.any(np.asarray(w) < 1):
        raise ValueError("window length must be positive")
    out = np.exp(log_gamma_sf(w, sum_stat))
    return float(out) if out.ndim == 0 else out


# -- binomial tails -----------------------------------------------------------

def log_binomial_tail(w: int, gamma: float, k: int) -> float:
    """log P(X >= k) for X ~ Binomial(w, gamma), by direct summation."""
    if not 0 <= k <= w:
        raise ValueError(f"k must lie in [0, {w}], got {k}")
    if k == 0:
        return 0.0
    js = np.arange(k, w + 1, dtype=np.float64)
    terms = (gammaln(w + 1.0) - gammaln(js + 1.0) - gammaln(w - js + 1.0)
             + js * math.log(gamma) + (w - js) * math.log1p(-gamma))
    top = terms.max()
    # gammaln rounding can push a near-certain tail a hair above log(1)
    return min(0.0, top + math.log(math.fsum(np.exp(terms - top))))


def binomial_tail(w: int, gamma: float, k: int) -> float:
    return math.exp(log_binomial_tail(w, gamma, k))


def _beta_contfrac(a, b, x):
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = np.ones_like(a)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
    d = 1.0 / d
    h = d.copy()
    active = np.arange(a.size)
    for m in range(1, _MAX_ITER):
        aa_, bb_, xx = a[active], b[active], x[active]
        m2 = 2 * m
        num = m * (bb_ - m) * xx / ((qam[active] + m2) * (aa_ + m2))
        dd = 1.0 + num * d[active]
        dd = np.where(np.abs(dd) < _FPMIN, _FPMIN, dd)
        cc = 1.0 + num / c[active]
        cc = np.where(np.abs(cc) < _FPMIN, _FPMIN, cc)
        dd = 1.0 / dd
        hh = h[active] * dd * cc
        num = -(aa_ + m) * (qab[active] + m) * xx / ((aa_ + m2) * (qap[active] + m2))
        dd = 1.0 + num * dd
        dd = np.where(np.abs(dd) < _FPMIN, _FPMIN, dd)
        cc = 1.0 + num / cc
        cc = np.where(np.abs(cc) < _FPMIN, _FPMIN, cc)
        dd = 1.0 / dd
        delta = dd * cc
        d[active], c[active], h[active] = dd, cc, hh * delta
        active = active[np.abs(delta - 1.0) >= _EPS]
        if active.size == 0:
            break
    else:
        raise ConvergenceError("beta continued fraction did not converge")
    return h


def _log_beta_front(a, b, x):
    return gammaln(a + b) - gammaln(a) - gammaln(b) + a * np.log(x) + b * np.log1p(-x)


def log_binomial_sf(k, w, gamma: float) -> np.ndarray:
    """Vectorized log P(X >= k), X ~ Binomial(w, gamma).

    Uses the identity P(X >= k) = I_gamma(k, w - k + 1) with a continued
    fraction for the regularized incomplete beta function.
    """
    k, w = np.broadcast_arrays(np.asarray(k, dtype=np.float64), np.asarray(w, dtype=np.float64))
    shape = k.shape
    k, w = k.ravel(), w.ravel()
    out = np.zeros(k.shape)
    out[k > w] = -np.inf
    mid = (k > 0) & (k <= w)
    if mid.any():
        a, b = k[mid], w[mid] - k[mid] + 1.0
        x = np.full(a.shape, float(gamma))
        direct = x < (a + 1.0) / (a + b + 2.0)
        res = np.empty(a.shape)
        if direct.any():
            ad, bd, xd = a[direct], b[direct], x[direct]
            res[direct] = _log_beta_front(ad, bd, xd) + np.log(_beta_contfrac(ad, bd, xd)) - np.log(ad)
        flip = ~direct
        if flip.any():
            af, bf, xf = b[flip], a[flip], 1.0 - x[flip]
            other = _log_beta_front(af, bf, xf) + np.log(_beta_contfrac(af, bf, xf)) - np.log(af)
            res[flip] = np.log1p(-np.exp(other))
        out[mid] = res
    return out.reshape(shape)


# -- thresholds ---------------------------------------------------------------

def clt_z_threshold(alpha: float) -> float:
    return -NormalDist().inv_cdf(alpha)


@lru_cache(maxsize=None)
def kgw_min_count(w: int, gamma: float, alpha: float) -> Optional[int]:
    """Smallest green count k with P(X >= k) < alpha, or None if even k = w fails."""
    log_alpha = math.log(alpha)
    if log_binomial_tail(w, gamma, w) >= log_alpha:
        return None
    lo, hi = 0, w
    while lo < hi:
        mid = (lo + hi) // 2
        if log_binomial_tail(w, gamma, mid) < log_alpha:
            hi = mid
        else:
            lo = mid + 1
    return lo


def kgw_threshold(w: int, gamma: float, alpha: float, clt_cutoff: Optional[int] = 200) -> float:
    """z threshold for a ``w``-token window; ``inf`` marks an undecidable length."""
    if w < 1:
        raise ValueError("window length must be positive")
    if clt_cutoff is not None and w >= clt_cutoff:
        return clt_z_threshold(alpha)
    k = kgw_min_count(w, gamma, alpha)
    if k is None:
        return math.inf
    return float(kgw_z(k, w, gamma))


def aar_threshold(alpha: float) -> float:
    """p-value threshold for AAR windows; the same for every length."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return alpha


def aar_sum_thresholds(lengths, alpha: float) -> np.ndarray:
    """Sum statistic S* with Q(w, S*) = alpha for each length, by bisection."""
    w = np.atleast_1d(np.asarray(lengths, dtype=np.float64))
    log_alpha = math.log(alpha)
    lo = np.zeros(w.shape)
    hi = w.copy()
    low = log_gamma_sf(w, hi) > log_alpha
    while low.any():
        lo[low], hi[low] = hi[low], 2.0 * hi[low] + 1.0
        low = log_gamma_sf(w, hi) > log_alpha
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        above = log_gamma_sf(w, mid) > log_alpha
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
        if np.all(hi - lo <= 1e-12 * hi):
            break
    return hi


def aar_sum_threshold(w: int, alpha: float) -> float:
    return float(aar_sum_thresholds([w], alpha)[0])


@dataclass(frozen=True)
class ThresholdTable:
    """Per-window-length decision thresholds on the raw statistic.

    KGW entries are z thresholds (``inf`` when no count reaches alpha);
    AAR entries are sum-statistic thresholds.  Lengths beyond ``max_window``
    fall through to the CLT rule (KGW) or are computed on demand.
    """

    scheme: Scheme
    gamma: float
    alpha: float
    clt_cutoff: Optional[int]
    entries: dict = field(repr=False)

    @property
    def max_window(self) -> int:
        return max(self.entries)

    def to_json(self) -> str:
        def enc(v):
            return None if math.isinf(v) else v
        doc = {
            "version": TABLE_VERSION,
            "scheme": self.scheme.value,
            "gamma": self.gamma,
            "alpha": self.alpha,
            "clt_cutoff": self.clt_cutoff,
            "entries": {str(w): enc(self.entries[w]) for w in sorted(self.entries)},
        }
        return json.dumps(doc, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ThresholdTable":
        doc = json.loads(text)
        if doc.get("version") != TABLE_VERSION:
            raise ValueError(f"unsupported threshold table version {doc.get('version')!r}")
        entries = {int(w): (math.inf if v is None else float(v)) for w, v in doc["entries"].items()}
        return cls(Scheme(doc["scheme"]), doc["gamma"], doc["alpha"], doc["clt_cutoff"], entries)


def build_threshold_table(params: SchemeParams, max_window: int = 400) -> ThresholdTable:
    if params.scheme is Scheme.KGW:
        entries = {w: kgw_threshold(w, params.gamma, params.alpha, params.clt_cutoff)
                   for w in range(1, max_window + 1)}
    else:
        sums = aar_sum_thresholds(np.arange(1, max_window + 1), params.alpha)
        entries = {w: float(v) for w, v in zip(range(1, max_window + 1), sums)}
    return ThresholdTable(params.scheme, params.gamma, params.alpha, params.clt_cutoff, entries)


# -- window statistics and the shared decision rule ---------------------------

@dataclass(frozen=True)
class WindowStatistic:
    scheme: Scheme
    raw: float
    window_len: int
    log_tail_prob: float

    @property
    def tail_prob(self) -> float:
        # floor at the smallest subnormal so extreme windows stay in (0, 1]
        return max(math.exp(self.log_tail_prob), 5e-324)


def window_statistic(stream: ScoreStream, span: SegmentSpan, gamma: float = 0.5) -> WindowStatistic:
    if span.end > len(stream):
        raise ValueError("span exceeds stream")
    window = stream.values[span.start:span.end]
    w = len(span)
    if stream.scheme is Scheme.KGW:
        count = int(window.sum())
        return WindowStatistic(stream.scheme, float(kgw_z(count, w, gamma)), w,
                               log_binomial_tail(w, gamma, count))
    s = aar_sum(window)
    return WindowStatistic(stream.scheme, s, w, float(log_gamma_sf(w, s)))


class WindowTest:
    """Vectorized significance and accept/reject for windows of mixed length.

    Windows are described by their length and raw additive statistic (green
    count for KGW, sum of ``log(1 / (1 - u))`` for AAR).  Ranking uses the
    log null tail probability; acceptance uses the length-specific
    threshold from the precomputed table.
    """

    # KGW lengths up to this size use cached exact tail rows
    row_cache_limit = 1024

    def __init__(self, params: SchemeParams, max_window: int = 400):
        self.params = params
        self.scheme = params.scheme
        self.log_alpha = math.log(params.alpha)
        self.table = build_threshold_table(params, max_window)
        self._rows: dict[int, np.ndarray] = {}
        if self.scheme is Scheme.KGW:
            self._min_counts = np.array(
                [np.inf] + [self._min_count(w) for w in range(1, max_window + 1)])
            self.z_clt = clt_z_threshold(params.alpha)
        else:
            self._sum_floor = np.array(
                [np.inf] + [self.table.entries[w] for w in range(1, max_window + 1)])
            self._sum_floor *= 1.0 - 1e-9

    def _min_count(self, w: int) -> float:
        k = kgw_min_count(w, self.params.gamma, self.params.alpha)
        return np.inf if k is None else float(k)

    def _tail_row(self, w: int) -> np.ndarray:
        row = self._rows.get(w)
        if row is None:
            g = self.params.gamma
            j = np.arange(w + 1, dtype=np.float64)
            lp = (gammaln(w + 1.0) - gammaln(j + 1.0) - gammaln(w - j + 1.0)
                  + j * math.log(g) + (w - j) * math.log1p(-g))
            row = np.logaddexp.accumulate(lp[::-1])[::-1]
            row[0] = 0.0
            self._rows[w] = row
        return row

    def min_counts(self, lengths) -> np.ndarray:
        lengths = np.asarray(lengths, dtype=np.int64)
        out = np.empty(lengths.shape)
        inside = lengths < self._min_counts.size
        out[inside] = self._min_counts[lengths[inside]]
        if (~inside).any():
            for w in np.unique(lengths[~inside]):
                out[lengths == w] = self._min_count(int(w))
        return out

    def decidable(self, lengths) -> np.ndarray:
        lengths = np.asarray(lengths)
        if self.scheme is Scheme.AAR:
            return lengths >= 1
        clt = self._clt(lengths)
        ok = clt.copy()
        small = ~clt
        if small.any():
            ok[small] = np.isfinite(self.min_counts(lengths[small]))
        return ok

    def _clt(self, lengths) -> np.ndarray:
        cut = self.params.clt_cutoff
        if cut is None:
            return np.zeros(np.shape(lengths), dtype=bool)
        return np.asarray(lengths) >= cut

    def log_tail(self, lengths, raws) -> np.ndarray:
        lengths = np.asarray(lengths, dtype=np.int64)
        raws = np.asarray(raws, dtype=np.float64)
        if self.scheme is Scheme.AAR:
            return log_gamma_sf(lengths, raws)
        counts = np.rint(raws).astype(np.int64)
        out = np.empty(lengths.shape)
        cached = lengths <= self.row_cache_limit
        for w in np.unique(lengths[cached]):
            sel = lengths == w
            out[sel] = self._tail_row(int(w))[counts[sel]]
        if (~cached).any():
            out[~cached] = log_binomial_sf(counts[~cached], lengths[~cached], self.params.gamma)
        return out

    def passes(self, lengths, raws, log_tails=None) -> np.ndarray:
        lengths = np.asarray(lengths)
        raws = np.asarray(raws, dtype=np.float64)
        if self.scheme is Scheme.AAR:
            if log_tails is not None:
                return np.asarray(log_tails) < self.log_alpha
            # the tail is only evaluated for windows near or above the sum threshold
            out = self.may_pass(lengths, raws)
            if out.any():
                out[out] = self.log_tail(lengths[out], raws[out]) < self.log_alpha
            return out
        clt = self._clt(lengths)
        out = np.zeros(lengths.shape, dtype=bool)
        if clt.any():
            out[clt] = kgw_z(raws[clt], lengths[clt], self.params.gamma) >= self.z_clt
        small = ~clt
        if small.any():
            out[small] = raws[small] >= self.min_counts(lengths[small])
        return out

    def may_pass(self, lengths, raws) -> np.ndarray:
        """Cheap screen that never rejects a window ``passes`` would accept."""
        if self.scheme is Scheme.KGW:
            return self.passes(lengths, raws)
        lengths = np.asarray(lengths, dtype=np.int64)
        out = np.ones(lengths.shape, dtype=bool)
        inside = lengths < self._sum_floor.size
        out[inside] = np.asarray(raws)[inside] >= self._sum_floor[lengths[inside]]
        return out


@lru_cache(maxsize=64)
def _cached_window_test(scheme, gamma, alpha, clt_cutoff) -> WindowTest:
    return WindowTest(SchemeParams(scheme, gamma=gamma, alpha=alpha, clt_cutoff=clt_cutoff))


def window_test_for(params: SchemeParams) -> WindowTest:
    """Shared, immutable WindowTest for the statistical part of ``params``."""
    gamma = params.gamma if params.scheme is Scheme.KGW else 0.5
    return _cached_window_test(params.scheme, gamma, params.alpha, params.clt_cutoff)
