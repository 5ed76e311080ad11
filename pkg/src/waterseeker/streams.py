"""Per-token score streams and the generative models that produce them.

A stream holds one value per token.  For KGW the value is a green flag
(0 or 1); for AAR it is the keyed uniform ``u_t(y_t)`` in ``[0, 1]``.
Every sampler is a pure function of its inputs and an integer seed; the
generator is numpy's Philox counter-based bit generator.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

RNG_ALGORITHM = "numpy.Philox4x64-10"

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_SENTINEL_CONTEXT = np.uint64(0x9E3779B97F4A7C15)


class Scheme(str, enum.Enum):
    KGW = "kgw"
    AAR = "aar"


class EditKind(str, enum.Enum):
    DELETE = "delete"
    SUBSTITUTE = "substitute"


class StreamError(ValueError):
    """Raised for invalid stream inputs (empty, out of range, bad spans)."""


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def child_seeds(seed: int, n: int) -> list[int]:
    """Derive ``n`` independent 64-bit seeds from ``seed``."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
    return [int(s) for s in ss.generate_state(n, np.uint64)]


@dataclass(frozen=True)
class SchemeParams:
    """Statistical parameters of a watermark scheme.

    ``gamma1`` and ``aar_strength`` describe watermarked text and may be left
    unset when only the null model is needed.  ``clt_cutoff`` is the KGW
    window length from which the normal approximation threshold is used.
    """

    scheme: Scheme
    gamma: float = 0.5
    gamma1: Optional[float] = None
    aar_strength: Optional[float] = None
    alpha: float = 1e-6
    clt_cutoff: Optional[int] = 200

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.scheme is Scheme.KGW:
            if not 0.0 < self.gamma < 1.0:
                raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
            if self.gamma1 is not None and not self.gamma < self.gamma1 <= 1.0:
                raise ValueError(f"gamma1 must lie in (gamma, 1], got {self.gamma1}")
        elif self.aar_strength is not None and self.aar_strength < 0:
            raise ValueError("aar_strength must be non-negative")
        if self.clt_cutoff is not None and self.clt_cutoff < 1:
            raise ValueError("clt_cutoff must be positive or None")


@dataclass(frozen=True, order=True)
class SegmentSpan:
    """Half-open token interval ``[start, end)``."""

    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise StreamError(f"invalid span [{self.start}, {self.end})")

    def __len__(self):
        return self.end - self.start

    def as_tuple(self) -> tuple[int, int]:
        return (self.start, self.end)


@dataclass(frozen=True, eq=False)
class ScoreStream:
    scheme: Scheme
    values: np.ndarray

    def __post_init__(self):
        scheme = Scheme(self.scheme)
        object.__setattr__(self, "scheme", scheme)
        if scheme is Scheme.KGW:
            vals = np.asarray(self.values, dtype=np.int8)
            if not np.array_equal(vals, self.values) or np.any((vals != 0) & (vals != 1)):
                raise StreamError("KGW values must be 0 or 1")
        else:
            vals = np.asarray(self.values, dtype=np.float64)
            if np.any(~np.isfinite(vals)) or np.any((vals < 0.0) | (vals > 1.0)):
                raise StreamError("AAR values must lie in [0, 1]")
        if vals.ndim != 1:
            raise StreamError("values must be one-dimensional")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return len(self)

    def __eq__(self, other):
        if not isinstance(other, ScoreStream):
            return NotImplemented
        return self.scheme is other.scheme and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"ScoreStream({self.scheme.value}, n={len(self)})"


@dataclass(frozen=True)
class TokenScorerKey:
    secret_key: int
    vocab_size: int

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be at least 2")
        object.__setattr__(self, "secret_key", int(self.secret_key) & 0xFFFFFFFFFFFFFFFF)


def validate_spans(spans: Sequence[SegmentSpan], n: int) -> list[SegmentSpan]:
    """Sort spans and check they are disjoint and inside ``[0, n)``."""
    ordered = sorted(spans)
    prev_end = 0
    for span in ordered:
        if span.end > n:
            raise StreamError(f"span [{span.start}, {span.end}) exceeds length {n}")
        if span.start < prev_end:
            raise StreamError(f"span [{span.start}, {span.end}) overlaps its predecessor")
        prev_end = span.end
    return ordered


def _null_values(scheme: Scheme, gamma: float, n: int, rng: np.random.Generator) -> np.ndarray:
    if scheme is Scheme.KGW:
        return (rng.random(n) < gamma).astype(np.int8)
    return rng.random(n)


def sample_null_stream(params: SchemeParams, n: int, seed: int) -> ScoreStream:
    """Unwatermarked stream: Bernoulli(gamma) flags or Uniform[0, 1) values."""
    if n < 1:
        raise StreamError("cannot sample an empty stream")
    return ScoreStream(params.scheme, _null_values(params.scheme, params.gamma, n, make_rng(seed)))


def sample_watermarked_values(params: SchemeParams, n: int, seed: int) -> np.ndarray:
    """Values for a watermarked stretch.

    KGW draws Bernoulli(gamma1).  AAR draws Beta(1 + s, 1) with
    ``s = aar_strength``, sampled by inversion as ``U ** (1 / (1 + s))``; at
    ``s = 0`` this is exactly the null.
    """
    if n < 1:
        raise StreamError("cannot sample an empty stretch")
    rng = make_rng(seed)
    if params.scheme is Scheme.KGW:
        if params.gamma1 is None:
            raise ValueError("gamma1 is required for watermarked KGW values")
        return (rng.random(n) < params.gamma1).astype(np.int8)
    if params.aar_strength is None:
        raise ValueError("aar_strength is required for watermarked AAR values")
    u = rng.random(n)
    if params.aar_strength == 0:
        return u
    return u ** (1.0 / (1.0 + params.aar_strength))


def embed_segments(
    null_stream: ScoreStream,
    segments: Sequence[tuple[SegmentSpan, SchemeParams]],
    seed: int,
) -> ScoreStream:
    """Overwrite each span of ``null_stream`` with watermarked values."""
    n = len(null_stream)
    validate_spans([span for span, _ in segments], n)
    for _, params in segments:
        if params.scheme is not null_stream.scheme:
            raise StreamError("segment scheme differs from stream scheme")
    if not segments:
        return null_stream
    values = null_stream.values.copy()
    for (span, params), sub_seed in zip(segments, child_seeds(seed, len(segments))):
        values[span.start:span.end] = sample_watermarked_values(params, len(span), sub_seed)
    return ScoreStream(null_stream.scheme, values)


# -- keyed token scorer -------------------------------------------------------

def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (x + np.uint64(0x9E3779B97F4A7C15)) & _MASK64
        z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK64
        z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK64
        return z ^ (z >> np.uint64(31))


def _keyed_hash(key: int, *parts: np.ndarray) -> np.ndarray:
    h = _splitmix64(np.full(parts[0].shape, key, dtype=np.uint64))
    for part in parts:
        h = _splitmix64(h ^ part.astype(np.uint64))
    return h


def _feistel_permute(tokens: np.ndarray, context: np.ndarray, key: int, domain: int) -> np.ndarray:
    """Keyed permutation of ``[0, domain)``, one permutation per context value.

    Balanced 4-round Feistel network on the smallest even bit width covering
    the domain, with cycle walking to stay inside it.
    """
    half = max(1, (int(domain - 1).bit_length() + 1) // 2)
    mask = np.uint64((1 << half) - 1)
    shift = np.uint64(half)

    def rounds(x, ctx):
        left, right = x >> shift, x & mask
        for r in range(4):
            f = _keyed_hash(key, ctx, np.full(ctx.shape, r, dtype=np.uint64), right) & mask
            left, right = right, left ^ f
        return (left << shift) | right

    out = rounds(tokens.astype(np.uint64), context)
    pending = out >= np.uint64(domain)
    while pending.any():
        out[pending] = rounds(out[pending], context[pending])
        pending = out >= np.uint64(domain)
    return out


def score_tokens(
    tokens: Sequence[int],
    key: TokenScorerKey,
    scheme: Scheme,
    gamma: float = 0.5,
) -> ScoreStream:
    """Score token IDs with a keyed hash of the preceding token.

    KGW: token ``t`` is green when the permutation keyed by the previous
    token maps it below ``floor(gamma * vocab_size)``.  AAR: ``u_t(y_t)`` is a
    keyed uniform indexed by (previous token, token).  Position 0 uses a
    fixed sentinel context.
    """
    scheme = Scheme(scheme)
    toks = np.asarray(tokens, dtype=np.int64)
    if toks.size == 0:
        raise StreamError("cannot score an empty token list")
    if toks.min() < 0 or toks.max() >= key.vocab_size:
        raise StreamError(f"token id out of range [0, {key.vocab_size})")
    toks = toks.astype(np.uint64)
    context = np.empty_like(toks)
    context[0] = _SENTINEL_CONTEXT
    context[1:] = toks[:-1]
    if scheme is Scheme.KGW:
        green_slots = math.floor(gamma * key.vocab_size)
        ranks = _feistel_permute(toks, context, key.secret_key, key.vocab_size)
        return ScoreStream(scheme, (ranks < np.uint64(green_slots)).astype(np.int8))
    h = _keyed_hash(key.secret_key, context, toks)
    return ScoreStream(scheme, (h >> np.uint64(11)).astype(np.float64) * 2.0 ** -53)


# -- edit attacks -------------------------------------------------------------

def apply_edit_attack(
    stream: ScoreStream,
    gold: Sequence[SegmentSpan],
    kind: EditKind,
    ratio: float,
    seed: int,
    gamma: float = 0.5,
) -> tuple[ScoreStream, list[SegmentSpan]]:
    """Score-level model of random word deletion or substitution.

    An edited token and the token right after it lose their watermark
    evidence: their scores are re-drawn from the null (``gamma`` is the KGW
    null green rate).  Deletion additionally drops the edited positions and
    shifts gold spans onto the surviving indices; spans that vanish entirely
    are dropped.
    """
    kind = EditKind(kind)
    if not 0.0 <= ratio < 1.0:
        raise ValueError(f"ratio must lie in [0, 1), got {ratio}")
    n = len(stream)
    gold = validate_spans(gold, n)
    n_edit = min(int(round(ratio * n)), n - 1)
    if n_edit == 0:
        return stream, list(gold)
    rng = make_rng(seed)
    edited = np.zeros(n, dtype=bool)
    edited[rng.choice(n, size=n_edit, replace=False)] = True
    values = stream.values.copy()

    if kind is EditKind.SUBSTITUTE:
        redraw = edited.copy()
        redraw[1:] |= edited[:-1]
        values[redraw] = _null_values(stream.scheme, gamma, int(redraw.sum()), rng)
        return ScoreStream(stream.scheme, values), list(gold)

    keep = ~edited
    # a survivor whose original predecessor was deleted has a new context
    redraw = np.zeros(n, dtype=bool)
    redraw[1:] = edited[:-1]
    redraw &= keep
    values[redraw] = _null_values(stream.scheme, gamma, int(redraw.sum()), rng)
    new_index = np.concatenate(([0], np.cumsum(keep)))
    spans = []
    for span in gold:
        start, end = int(new_index[span.start]), int(new_index[span.end])
        if end > start:
            spans.append(SegmentSpan(start, end))
    return ScoreStream(stream.scheme, values[keep]), spans
