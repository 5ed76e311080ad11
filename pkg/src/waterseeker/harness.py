"""Batch runs over corpora: detection with timing, FPR simulation, scaling benchmarks."""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .corpus import CorpusRecord, CorpusSpec, build_corpus, doc_seed
from .detectors import (
    DetectionResult,
    DegenerateInputError,
    WaterSeekerConfig,
    flsw_detect,
    full_text_detect,
    waterseeker_detect,
    winmax_detect,
)
from .evaluation import EvalOutcome, evaluate_corpus
from .stats import window_test_for
from .streams import Scheme, SchemeParams, SegmentSpan, sample_null_stream

DETECTORS = ("fulltext", "winmax", "flsw", "waterseeker")


@dataclass(frozen=True)
class RunConfig:
    detector: str
    interval: int = 1
    window: int = 200
    alpha: float = 1e-6
    gamma: float = 0.5
    clt_cutoff: Optional[int] = 200
    seeker_window: int = 50
    top_k: int = 20
    connect_tolerance: int = 100
    min_segment_len: int = 50
    traverse: bool = True

    def __post_init__(self):
        if self.detector not in DETECTORS:
            raise ValueError(f"unknown detector {self.detector!r}; choose from {', '.join(DETECTORS)}")
        if self.interval < 1:
            raise ValueError("interval must be at least 1")

    @property
    def label(self) -> str:
        if self.detector == "winmax":
            return f"winmax-{self.interval}"
        if self.detector == "flsw":
            return f"flsw-{self.window}"
        if self.detector == "waterseeker" and not self.traverse:
            return "waterseeker-localize-only"
        return self.detector

    def seeker(self) -> WaterSeekerConfig:
        return WaterSeekerConfig(self.seeker_window, self.top_k, self.connect_tolerance,
                                 self.min_segment_len, self.alpha, self.gamma, self.clt_cutoff)

    def detector_for(self, scheme: Scheme) -> Callable:
        params = SchemeParams(scheme, gamma=self.gamma, alpha=self.alpha, clt_cutoff=self.clt_cutoff)
        window_test_for(params)  # build threshold tables outside any timed region
        if self.detector == "fulltext":
            return lambda s: full_text_detect(s, params)
        if self.detector == "winmax":
            return lambda s: winmax_detect(s, params, self.interval)
        if self.detector == "flsw":
            return lambda s: flsw_detect(s, params, self.window)
        cfg = self.seeker()
        return lambda s: waterseeker_detect(s, cfg, params, traverse=self.traverse)


@dataclass(frozen=True)
class DocResult:
    doc_id: str
    result: Optional[DetectionResult]
    seconds: float
    error: Optional[str] = None

    @property
    def prediction(self) -> DetectionResult:
        return self.result if self.result is not None else DetectionResult(False)

    def to_json(self) -> str:
        body = self.prediction.to_dict()
        return json.dumps({"doc_id": self.doc_id, **body, "seconds": self.seconds, "error": self.error},
                          separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "DocResult":
        d = json.loads(line)
        spans = [SegmentSpan(int(s), int(e)) for s, e in d["indices"]]
        res = DetectionResult(bool(d["has_watermark"]), spans, [None] * len(spans), int(d.get("n_windows", 0)))
        return cls(d["doc_id"], res, float(d.get("seconds", 0.0)), d.get("error"))


def _run_one(record: CorpusRecord, config: RunConfig) -> DocResult:
    detect = config.detector_for(record.stream.scheme)
    t0 = time.perf_counter()
    try:
        res = detect(record.stream)
    except DegenerateInputError as exc:
        return DocResult(record.doc_id, None, time.perf_counter() - t0, str(exc))
    return DocResult(record.doc_id, res, time.perf_counter() - t0)


def run_detector(records: Sequence[CorpusRecord], config: RunConfig, threads: int = 1) -> list[DocResult]:
    """Detect on every record; degenerate inputs are recorded per document, not raised."""
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda r: _run_one(r, config), records))
    return [_run_one(r, config) for r in records]


def evaluate_results(results: Sequence[DocResult], records: Sequence[CorpusRecord]) -> EvalOutcome:
    by_id = {r.doc_id: r for r in results}
    if len(by_id) != len(results) or set(by_id) != {r.doc_id for r in records}:
        raise ValueError("results and corpus do not join one-to-one on doc_id")
    return evaluate_corpus([by_id[r.doc_id].prediction for r in records], [list(r.gold) for r in records])


def score_corpus(records: Sequence[CorpusRecord], config: RunConfig) -> tuple[EvalOutcome, list[DocResult]]:
    results = run_detector(records, config)
    return evaluate_results(results, records), results


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    den = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


def simulate_fpr(scheme: Scheme, config: RunConfig, n_samples: int = 10_000,
                 n_tokens: int = 10_000, seed: int = 0) -> dict:
    """Document-level false positive rate on pure null streams."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    scheme = Scheme(scheme)
    detect = config.detector_for(scheme)
    null = SchemeParams(scheme, gamma=config.gamma)
    flagged = 0
    for i in range(n_samples):
        if detect(sample_null_stream(null, n_tokens, doc_seed(seed, i))).has_watermark:
            flagged += 1
    lo, hi = wilson_interval(flagged, n_samples)
    return {"scheme": scheme.value, "detector": config.label, "alpha": config.alpha,
            "n_samples": n_samples, "n_tokens": n_tokens, "flagged": flagged,
            "fpr": flagged / n_samples, "ci95": [lo, hi]}


def loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])


def bench(configs: Sequence[RunConfig], lengths: Sequence[int], trials: int = 20,
          scheme: Scheme = Scheme.KGW, seed: int = 0, seg_len_range=(100, 400)) -> dict:
    """Time detectors on fresh corpora of growing document length.

    Each length gets ``trials`` positive and ``trials`` negative documents.
    Growth exponents are log-log slopes of the median windows-evaluated
    count and median seconds against document length.
    """
    if list(lengths) != sorted(lengths):
        raise ValueError("lengths must be ascending")
    rows = []
    for n in lengths:
        spec = CorpusSpec(scheme, n_positive=trials, n_negative=trials, doc_len=n,
                          seg_len_range=(min(seg_len_range[0], n), min(seg_len_range[1], n)),
                          master_seed=seed + n)
        records = build_corpus(spec)
        for cfg in configs:
            outcome, results = score_corpus(records, cfg)
            secs = [r.seconds for r in results]
            wins = [r.prediction.n_windows for r in results]
            rows.append({"detector": cfg.label, "n": n, "mean_seconds": float(np.mean(secs)),
                         "median_seconds": float(np.median(secs)), "median_windows": float(np.median(wins)),
                         "mean_windows": float(np.mean(wins)), **{k: v for k, v in asdict(outcome).items()}})
    fits = {}
    for cfg in configs:
        mine = [r for r in rows if r["detector"] == cfg.label]
        ns = [r["n"] for r in mine]
        fits[cfg.label] = {
            "windows_exponent": loglog_slope(ns, [r["median_windows"] for r in mine]),
            "time_exponent": loglog_slope(ns, [max(r["median_seconds"], 1e-9) for r in mine]),
            "f1_range": max(r["f1"] for r in mine) - min(r["f1"] for r in mine),
        }
    return {"rows": rows, "fits": fits}
