"""Python bindings for the scan-focus-amplify pipeline."""

import json

from ._sfa import (
    DEFAULT_ALPHA,
    DEFAULT_TAU,
    SfaError,
    accuracy_match,
    adapted_windows,
    anls_score,
    cli,
    normalized_levenshtein,
    parse_score,
    select_anchor,
)
from . import _sfa

__all__ = [
    "DEFAULT_ALPHA",
    "DEFAULT_TAU",
    "SfaError",
    "accuracy_match",
    "adapted_windows",
    "anls_score",
    "cli",
    "evaluate",
    "normalized_levenshtein",
    "parse_score",
    "run",
    "select_anchor",
]


def run(frames, question, mode="sfa", **options):
    """Answer one question; returns the run record (answer, refined, trace, stats)."""
    return json.loads(_sfa.run_json(str(frames), question, mode, **_paths(options)))


def evaluate(manifest, mode="sfa", **options):
    """Evaluate a JSON-lines manifest; returns the report as a dict."""
    return json.loads(_sfa.evaluate_json(str(manifest), mode, **_paths(options)))


def _paths(options):
    return {k: str(v) if k in ("config", "mock_fixtures", "cache_dir") and v is not None else v
            for k, v in options.items()}
