"""Scoring detections against gold segments."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

from .detectors import DetectionResult
from .streams import SegmentSpan


def _union(spans: Sequence[SegmentSpan]) -> list[tuple[int, int]]:
    merged: list[list[int]] = []
    for s in sorted(spans):
        if merged and s.start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], s.end)
        else:
            merged.append([s.start, s.end])
    return [(a, b) for a, b in merged]


def _overlap(a: list[tuple[int, int]], b: list[tuple[int, int]]) -> int:
    i = j = total = 0
    while i < len(a) and j < len(b):
        lo, hi = max(a[i][0], b[j][0]), min(a[i][1], b[j][1])
        if hi > lo:
            total += hi - lo
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return total


def iou(detected: Sequence[SegmentSpan], gold: Sequence[SegmentSpan]) -> float:
    """Token-level intersection over union of the two span unions (0 if either is empty)."""
    a, b = _union(detected), _union(gold)
    if not a or not b:
        return 0.0
    inter = _overlap(a, b)
    union = sum(e - s for s, e in a) + sum(e - s for s, e in b) - inter
    return inter / union


def is_success(result: DetectionResult, gold: Sequence[SegmentSpan]) -> bool:
    if not gold:
        raise ValueError("is_success applies to positive documents only")
    return result.has_watermark and iou(result.indices, gold) > 0


@dataclass(frozen=True)
class EvalOutcome:
    true_positive: int
    false_positive: int
    false_negative: int
    true_negative: int
    f1: float
    fpr: float
    fnr: float
    mean_iou: float

    @property
    def n_docs(self) -> int:
        return self.true_positive + self.false_positive + self.false_negative + self.true_negative

    def report(self, corpus_id: str = "", detector_id: str = "", config: Optional[dict] = None,
               **extra) -> dict:
        """Flat metric dict plus a metadata block, ready for ``json.dumps``."""
        config = config or {}
        digest = hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]
        out = asdict(self)
        out.update(extra)
        out["meta"] = {"corpus_id": corpus_id, "detector_id": detector_id, "config_hash": digest,
                       "iou_aggregation": "pooled"}
        return out


def _ratio(num, den):
    return num / den if den else 0.0


def evaluate_corpus(results: Sequence[DetectionResult], labels: Sequence[Sequence[SegmentSpan]]) -> EvalOutcome:
    if len(results) != len(labels):
        raise ValueError(f"{len(results)} results for {len(labels)} labels")
    tp = fp = fn = tn = 0
    ious = []
    for res, gold in zip(results, labels):
        if not gold:
            if res.has_watermark:
                fp += 1
            else:
                tn += 1
            continue
        ious.append(iou(res.indices, gold) if res.has_watermark else 0.0)
        if is_success(res, gold):
            tp += 1
        else:
            fn += 1
    return EvalOutcome(
        tp, fp, fn, tn,
        f1=_ratio(2 * tp, 2 * tp + fp + fn),
        fpr=_ratio(fp, fp + tn),
        fnr=_ratio(fn, fn + tp),
        mean_iou=_ratio(sum(ious), len(ious)),
    )


def localization_stats(localized: Sequence[SegmentSpan], gold: Sequence[SegmentSpan]):
    """Coverage of the single gold span and the boundary offsets of its best match.

    Returns ``(coverage, start_offset, end_offset)``; offsets are ``None``
    when nothing overlaps the gold span.
    """
    if len(gold) != 1:
        raise ValueError("localization_stats expects exactly one gold span")
    g = gold[0]
    best, best_overlap = None, 0
    for span in localized:
        ov = max(0, min(span.end, g.end) - max(span.start, g.start))
        if ov > best_overlap:
            best, best_overlap = span, ov
    if best is None:
        return 0.0, None, None
    return best_overlap / len(g), abs(best.start - g.start), abs(best.end - g.end)
