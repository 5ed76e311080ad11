"""Plant one watermarked segment in a long null stream and compare detectors on it."""

import argparse

from waterseeker import (
    Scheme,
    SchemeParams,
    SegmentSpan,
    WaterSeekerConfig,
    embed_segments,
    flsw_detect,
    full_text_detect,
    iou,
    sample_null_stream,
    waterseeker_detect,
    winmax_detect,
)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scheme", choices=[s.value for s in Scheme], default="kgw")
    ap.add_argument("--doc-len", type=int, default=10_000)
    ap.add_argument("--start", type=int, default=4_200)
    ap.add_argument("--length", type=int, default=250)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    scheme = Scheme(args.scheme)
    null = SchemeParams(scheme)
    strong = SchemeParams(scheme, gamma1=0.75) if scheme is Scheme.KGW else SchemeParams(scheme, aar_strength=2.0)
    gold = SegmentSpan(args.start, args.start + args.length)
    stream = embed_segments(sample_null_stream(null, args.doc_len, args.seed), [(gold, strong)], args.seed + 1)
    print(f"gold segment {gold.start}-{gold.end} in {args.doc_len} tokens ({scheme.value})")

    runs = {
        "fulltext": lambda: full_text_detect(stream, null),
        "winmax-50": lambda: winmax_detect(stream, null, interval=50),
        "flsw-200": lambda: flsw_detect(stream, null, window=200),
        "waterseeker": lambda: waterseeker_detect(stream, WaterSeekerConfig()),
    }
    for name, run in runs.items():
        res = run()
        spans = " ".join(f"{s.start}-{s.end}" for s in res.indices) or "-"
        print(f"{name:12s} flagged={res.has_watermark!s:5s} iou={iou(res.indices, [gold]):.3f} "
              f"windows={res.n_windows:>9d} spans={spans}")


if __name__ == "__main__":
    main()
