"""Command-line entry point: generate, score, detect, evaluate, simulate-fpr, bench.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, replace

from .corpus import (
    KGW_PRESETS,
    CorpusError,
    CorpusRecord,
    CorpusSpec,
    build_corpus,
    load_corpus,
    save_corpus,
    strength_preset,
)
from .harness import DocResult, RunConfig, bench, evaluate_results, run_detector, simulate_fpr
from .streams import RNG_ALGORITHM, Scheme, SegmentSpan, StreamError, TokenScorerKey, score_tokens

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(obj, out=None):
    text = json.dumps(obj, indent=2)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _add_detector_flags(p, default="waterseeker"):
    p.add_argument("--detector", choices=["fulltext", "winmax", "flsw", "waterseeker"], default=default)
    p.add_argument("--interval", type=int, default=1, help="winmax window-size step")
    p.add_argument("--window", type=int, default=200, help="flsw window length")
    p.add_argument("--alpha", type=float, default=1e-6, help="in-window false positive rate")
    p.add_argument("--gamma", type=float, default=0.5, help="KGW green fraction")
    p.add_argument("--clt-cutoff", type=int, default=200)
    p.add_argument("--seeker-window", type=int, default=50)
    p.add_argument("--top-k", type=int, default=20)
    p.add_argument("--tolerance", type=int, default=100, help="waterseeker connect tolerance")
    p.add_argument("--min-len", type=int, default=50, help="waterseeker minimum segment length")
    p.add_argument("--no-traverse", action="store_true", help="accept localized spans without traversal")


def _run_config(args) -> RunConfig:
    try:
        return RunConfig(args.detector, interval=args.interval, window=args.window, alpha=args.alpha,
                         gamma=args.gamma, clt_cutoff=args.clt_cutoff, seeker_window=args.seeker_window,
                         top_k=args.top_k, connect_tolerance=args.tolerance, min_segment_len=args.min_len,
                         traverse=not args.no_traverse)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _parse_label(label: str, base: RunConfig) -> RunConfig:
    """``waterseeker``, ``fulltext``, ``winmax-<interval>`` or ``flsw-<window>``."""
    name, _, num = label.partition("-")
    try:
        if name == "winmax":
            return replace(base, detector=name, interval=int(num or 1))
        if name == "flsw":
            return replace(base, detector=name, window=int(num or 200))
        return replace(base, detector=label)
    except ValueError as exc:
        raise UsageError(f"bad detector label {label!r}: {exc}") from exc


def cmd_generate(args):
    try:
        scheme = Scheme(args.scheme)
        pool = None
        if args.strength:
            pool = [(s, strength_preset(scheme, s, args.gamma)) for s in args.strength]
        spec = CorpusSpec(scheme, n_positive=args.pos, n_negative=args.neg, doc_len=args.doc_len,
                          seg_len_range=(args.seg_min, args.seg_max), segments_per_doc=args.segments,
                          strength_pool=pool, master_seed=args.seed, gamma=args.gamma, min_gap=args.min_gap)
    except (CorpusError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    records = build_corpus(spec)
    save_corpus(records, args.out)
    _emit({"out": args.out, "records": len(records), "positive": spec.n_positive, "negative": spec.n_negative})


def cmd_score(args):
    """Token-ID documents ({"doc_id", "tokens", optional "gold"}) to corpus records."""
    key = TokenScorerKey(args.key, args.vocab_size)
    scheme = Scheme(args.scheme)
    records = []
    with open(args.tokens, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                stream = score_tokens(doc["tokens"], key, scheme, args.gamma)
                gold = tuple(SegmentSpan(int(a), int(b)) for a, b in doc.get("gold", []))
                meta = {"gamma": args.gamma, "gamma1": None, "aar_strength": None, "seed": args.seed,
                        "strength": None, "attack": None, "rng": RNG_ALGORITHM}
                records.append(CorpusRecord(str(doc["doc_id"]), stream, gold, meta))
            except (ValueError, KeyError, TypeError) as exc:
                raise CorpusError(f"{args.tokens}: line {lineno}: {exc}") from exc
    save_corpus(records, args.out)
    _emit({"out": args.out, "records": len(records)})


def cmd_detect(args):
    config = _run_config(args)
    records = load_corpus(args.corpus)
    results = run_detector(records, config, threads=args.threads)
    with open(args.out, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(r.to_json() + "\n")
    _emit({"out": args.out, "detector": config.label, "docs": len(results),
           "flagged": sum(r.prediction.has_watermark for r in results),
           "errors": sum(r.error is not None for r in results)})


def _load_results(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(DocResult.from_json(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise CorpusError(f"{path}: line {lineno}: {exc}") from exc
    return out


def cmd_evaluate(args):
    records = load_corpus(args.corpus)
    if args.results:
        results = _load_results(args.results)
        detector = args.detector_id or args.results
        config = {"results": args.results}
    else:
        run = _run_config(args)
        results = run_detector(records, run, threads=args.threads)
        detector, config = run.label, asdict(run)
    outcome = evaluate_results(results, records)
    secs = [r.seconds for r in results]
    report = outcome.report(corpus_id=args.corpus, detector_id=detector, config=config,
                            mean_seconds=sum(secs) / len(secs) if secs else 0.0,
                            errors=sum(r.error is not None for r in results))
    _emit(report, args.out)


def cmd_simulate_fpr(args):
    if args.n_samples < 1:
        raise UsageError("--n-samples must be at least 1")
    _emit(simulate_fpr(Scheme(args.scheme), _run_config(args), args.n_samples, args.n_tokens, args.seed), args.out)


def cmd_bench(args):
    base = _run_config(args)
    configs = [_parse_label(label, base) for label in args.detectors]
    if args.lengths != sorted(args.lengths):
        raise UsageError("--lengths must be ascending")
    _emit(bench(configs, args.lengths, args.trials, Scheme(args.scheme), args.seed), args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="waterseeker", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="build a labeled synthetic corpus (JSONL)")
    p.add_argument("--scheme", choices=["kgw", "aar"], default="kgw")
    p.add_argument("--pos", type=int, default=300)
    p.add_argument("--neg", type=int, default=300)
    p.add_argument("--doc-len", type=int, default=10_000)
    p.add_argument("--seg-min", type=int, default=100)
    p.add_argument("--seg-max", type=int, default=400)
    p.add_argument("--segments", type=int, default=1, help="watermarked segments per positive document")
    p.add_argument("--min-gap", type=int, default=100)
    p.add_argument("--strength", nargs="+", choices=sorted(KGW_PRESETS), help="restrict the strength pool")
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("score", help="score token-ID documents with the keyed hash")
    p.add_argument("--tokens", required=True, help="JSONL with doc_id, tokens and optional gold")
    p.add_argument("--key", type=int, required=True, help="64-bit secret key")
    p.add_argument("--vocab-size", type=int, required=True)
    p.add_argument("--scheme", choices=["kgw", "aar"], default="kgw")
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0, help="unused; scoring is deterministic")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("detect", help="run one detector over a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="results JSONL")
    _add_detector_flags(p)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="unused; detection is deterministic")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="score results (or a fresh run) against corpus labels")
    p.add_argument("--corpus", required=True)
    p.add_argument("--results", help="results JSONL from detect; omit to run the detector here")
    p.add_argument("--detector-id", help="label recorded in the report for a results file")
    _add_detector_flags(p)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="unused; evaluation is deterministic")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate-fpr", help="document-level FPR on null streams")
    p.add_argument("--scheme", choices=["kgw", "aar"], default="kgw")
    p.add_argument("--n-samples", type=int, default=10_000)
    p.add_argument("--n-tokens", type=int, default=10_000)
    _add_detector_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate_fpr)

    p = sub.add_parser("bench", help="time detectors across document lengths")
    p.add_argument("--detectors", nargs="+", default=["waterseeker", "winmax-1"],
                   help="labels such as waterseeker, fulltext, winmax-50, flsw-200")
    p.add_argument("--lengths", type=int, nargs="+", default=[500, 2000, 5000, 10000])
    p.add_argument("--trials", type=int, default=20, help="positive and negative documents per length")
    p.add_argument("--scheme", choices=["kgw", "aar"], default="kgw")
    _add_detector_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"waterseeker {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, StreamError, ValueError, OSError) as exc:
        print(f"waterseeker {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
