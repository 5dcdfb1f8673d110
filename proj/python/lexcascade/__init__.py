"""Python bindings for the lexcascade statute retrieval engine."""

from ._lexcascade import (
    Article,
    Bm25Index,
    LexcascadeError,
    Query,
    __version__,
    cmd_analyze,
    cmd_eval,
    cmd_index,
    cmd_run,
    cmd_tune,
    estimate_tokens,
    f2_score,
    fuse,
    grid_search,
    load_articles,
    load_queries,
    macro_evaluate,
    min_max_normalize,
    overlap_score,
    pack_windows,
    parse_scores,
    pearson,
    prf2,
    recall_at_k,
    threshold_filter,
    tokenize,
)

__all__ = [
    "Article",
    "Bm25Index",
    "LexcascadeError",
    "Query",
    "__version__",
    "cmd_analyze",
    "cmd_eval",
    "cmd_index",
    "cmd_run",
    "cmd_tune",
    "estimate_tokens",
    "f2_score",
    "fuse",
    "grid_search",
    "load_articles",
    "load_queries",
    "macro_evaluate",
    "min_max_normalize",
    "overlap_score",
    "pack_windows",
    "parse_scores",
    "pearson",
    "prf2",
    "recall_at_k",
    "threshold_filter",
    "tokenize",
]
