"""Labeled synthetic corpora and their JSONL persistence.

Host documents are null score streams; positive documents get one or more
watermarked segments spliced in at uniformly drawn, well-separated offsets.
Each record stores a 64-bit seed from which it can be rebuilt exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .streams import (
    RNG_ALGORITHM,
    EditKind,
    Scheme,
    SchemeParams,
    ScoreStream,
    SegmentSpan,
    apply_edit_attack,
    child_seeds,
    embed_segments,
    make_rng,
    sample_null_stream,
    validate_spans,
)

SCHEMA_VERSION = 1

# artifact-defined strength proxies, not calibrated to any LLM setting
KGW_PRESETS = {"strong": 0.85, "medium": 0.75, "weak": 0.65}
AAR_PRESETS = {"strong": 3.0, "medium": 2.0, "weak": 1.0}


class CorpusError(ValueError):
    pass


def strength_preset(scheme: Scheme, label: str, gamma: float = 0.5, alpha: float = 1e-6) -> SchemeParams:
    scheme = Scheme(scheme)
    if scheme is Scheme.KGW:
        return SchemeParams(scheme, gamma=gamma, gamma1=KGW_PRESETS[label], alpha=alpha)
    return SchemeParams(scheme, gamma=gamma, aar_strength=AAR_PRESETS[label], alpha=alpha)


def default_pool(scheme: Scheme, gamma: float = 0.5) -> list[tuple[str, SchemeParams]]:
    return [(label, strength_preset(scheme, label, gamma)) for label in ("strong", "medium", "weak")]


@dataclass(frozen=True)
class CorpusRecord:
    doc_id: str
    stream: ScoreStream
    gold: tuple
    meta: dict = field(default_factory=dict, compare=True)

    def __post_init__(self):
        object.__setattr__(self, "gold", tuple(validate_spans(self.gold, len(self.stream))))

    @property
    def positive(self) -> bool:
        return bool(self.gold)


@dataclass(frozen=True)
class CorpusSpec:
    scheme: Scheme
    n_positive: int = 300
    n_negative: int = 300
    doc_len: int = 10_000
    seg_len_range: tuple = (100, 400)
    segments_per_doc: int = 1
    strength_pool: Optional[Sequence[tuple[str, SchemeParams]]] = None
    master_seed: int = 0
    gamma: float = 0.5
    min_gap: int = 100

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.strength_pool is None:
            object.__setattr__(self, "strength_pool", tuple(default_pool(self.scheme, self.gamma)))
        lo, hi = self.seg_len_range
        if not 0 < lo <= hi <= self.doc_len:
            raise CorpusError(f"segment lengths {self.seg_len_range} do not fit doc_len {self.doc_len}")
        if self.n_positive < 0 or self.n_negative < 0:
            raise CorpusError("document counts must be non-negative")
        if self.segments_per_doc < 1:
            raise CorpusError("segments_per_doc must be at least 1")
        need = self.segments_per_doc * hi + (self.segments_per_doc - 1) * self.min_gap
        if self.n_positive and need > self.doc_len:
            raise CorpusError(
                f"{self.segments_per_doc} segments of up to {hi} tokens with gap {self.min_gap} "
                f"need {need} tokens, doc_len is {self.doc_len}")
        for _, params in self.strength_pool:
            if params.scheme is not self.scheme:
                raise CorpusError("strength pool scheme differs from corpus scheme")


def doc_seed(master_seed: int, index: int) -> int:
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, index])
    return int(ss.generate_state(1, np.uint64)[0])


def _place_segments(rng, lengths: list[int], doc_len: int, gap: int) -> list[SegmentSpan]:
    slack = doc_len - sum(lengths) - gap * (len(lengths) - 1)
    if slack < 0:
        raise CorpusError("segments do not fit in the document")
    offsets = np.sort(rng.integers(0, slack + 1, size=len(lengths)))
    spans, cursor = [], 0
    for extra, length in zip(np.diff(np.concatenate(([0], offsets))), lengths):
        start = cursor + int(extra)
        spans.append(SegmentSpan(start, start + length))
        cursor = start + length + gap
    return spans


def build_record(spec: CorpusSpec, doc_id: str, positive: bool, seed: int) -> CorpusRecord:
    """Rebuild one record from the spec, its label and its seed."""
    null_seed, layout_seed, embed_seed = child_seeds(seed, 3)
    null_params = SchemeParams(spec.scheme, gamma=spec.gamma)
    stream = sample_null_stream(null_params, spec.doc_len, null_seed)
    meta = {"gamma": spec.gamma, "gamma1": None, "aar_strength": None, "seed": seed,
            "strength": None, "attack": None, "rng": RNG_ALGORITHM}
    if not positive:
        return CorpusRecord(doc_id, stream, (), meta)
    rng = make_rng(layout_seed)
    label, params = spec.strength_pool[int(rng.integers(len(spec.strength_pool)))]
    lo, hi = spec.seg_len_range
    lengths = [int(x) for x in rng.integers(lo, hi + 1, size=spec.segments_per_doc)]
    spans = _place_segments(rng, lengths, spec.doc_len, spec.min_gap)
    stream = embed_segments(stream, [(s, params) for s in spans], embed_seed)
    meta.update(gamma1=params.gamma1, aar_strength=params.aar_strength, strength=label)
    return CorpusRecord(doc_id, stream, tuple(spans), meta)


def build_corpus(spec: CorpusSpec) -> list[CorpusRecord]:
    """Positives first (``pos-00000`` ...), then negatives (``neg-00000`` ...)."""
    records = []
    labels = [True] * spec.n_positive + [False] * spec.n_negative
    counters = {True: 0, False: 0}
    for index, positive in enumerate(labels):
        doc_id = f"{'pos' if positive else 'neg'}-{counters[positive]:05d}"
        counters[positive] += 1
        records.append(build_record(spec, doc_id, positive, doc_seed(spec.master_seed, index)))
    return records


def attack_corpus(records: Sequence[CorpusRecord], kind: EditKind, ratio: float, seed: int) -> list[CorpusRecord]:
    kind = EditKind(kind)
    out = []
    for index, rec in enumerate(records):
        rec_seed = doc_seed(seed, index)
        stream, gold = apply_edit_attack(rec.stream, rec.gold, kind, ratio, rec_seed,
                                         gamma=rec.meta.get("gamma", 0.5))
        meta = dict(rec.meta, attack={"kind": kind.value, "ratio": ratio, "seed": rec_seed})
        out.append(replace(rec, stream=stream, gold=tuple(gold), meta=meta))
    return out


# -- JSONL --------------------------------------------------------------------

_META_KEYS = ("gamma", "gamma1", "aar_strength", "seed", "strength", "attack")


def record_to_json(rec: CorpusRecord) -> str:
    if rec.stream.scheme is Scheme.KGW:
        values = rec.stream.values.astype(int).tolist()
    else:
        values = rec.stream.values.tolist()
    doc = {
        "v": SCHEMA_VERSION,
        "doc_id": rec.doc_id,
        "scheme": rec.stream.scheme.value,
        "n": len(rec.stream),
        "values": values,
        "gold": [[s.start, s.end] for s in rec.gold],
        "meta": rec.meta,
    }
    return json.dumps(doc, separators=(",", ":"))


def record_from_json(line: str) -> CorpusRecord:
    doc = json.loads(line)
    if not isinstance(doc, dict):
        raise CorpusError("record is not a JSON object")
    if doc.get("v") != SCHEMA_VERSION:
        raise CorpusError(f"schema version {doc.get('v')!r}, expected {SCHEMA_VERSION}")
    try:
        scheme = Scheme(doc["scheme"])
        values = np.array(doc["values"], dtype=np.int8 if scheme is Scheme.KGW else np.float64)
        if values.shape != (doc["n"],):
            raise CorpusError(f"'n' is {doc['n']} but {values.size} values given")
        missing = [k for k in _META_KEYS if k not in doc["meta"]]
        if missing:
            raise CorpusError(f"meta lacks {missing}")
        gold = tuple(SegmentSpan(int(s), int(e)) for s, e in doc["gold"])
        return CorpusRecord(str(doc["doc_id"]), ScoreStream(scheme, values), gold, doc["meta"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CorpusError):
            raise
        raise CorpusError(str(exc)) from exc


def save_corpus(records: Sequence[CorpusRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(record_to_json(rec))
            fh.write("\n")


def load_corpus(path) -> list[CorpusRecord]:
    records = []
    with open(Path(path), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(record_from_json(line))
            except (json.JSONDecodeError, CorpusError) as exc:
                raise CorpusError(f"{path}: line {lineno}: {exc}") from exc
    return records
