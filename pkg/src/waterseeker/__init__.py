"""Watermarked-segment detection in long score streams."""

from .corpus import (
    AAR_PRESETS,
    KGW_PRESETS,
    CorpusError,
    CorpusRecord,
    CorpusSpec,
    attack_corpus,
    build_corpus,
    load_corpus,
    save_corpus,
    strength_preset,
)
from .detectors import (
    DegenerateInputError,
    DetectionResult,
    WaterSeekerConfig,
    flsw_detect,
    full_text_detect,
    waterseeker_detect,
    waterseeker_localize,
    winmax_detect,
)
from .evaluation import EvalOutcome, evaluate_corpus, iou, is_success, localization_stats
from .harness import RunConfig, bench, run_detector, simulate_fpr
from .stats import (
    ThresholdTable,
    aar_p_value,
    aar_threshold,
    binomial_tail,
    build_threshold_table,
    kgw_min_count,
    kgw_threshold,
    kgw_z,
    regularized_gamma_cdf,
    window_statistic,
)
from .streams import (
    EditKind,
    Scheme,
    SchemeParams,
    ScoreStream,
    SegmentSpan,
    StreamError,
    TokenScorerKey,
    apply_edit_attack,
    embed_segments,
    sample_null_stream,
    score_tokens,
)
