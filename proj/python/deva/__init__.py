"""Devanagari text CAPTCHA: cluster grammar, corpus, rendering, obfuscation and challenges."""

import os as _os

_assets = _os.path.join(_os.path.dirname(__file__), "assets")
if _os.path.isdir(_assets):
    _os.environ.setdefault("DEVA_ASSET_DIR", _assets)

from ._deva import (  # noqa: E402
    CanvasOverflow,
    Corpus,
    CorpusError,
    DevaError,
    EmptyPage,
    Engine,
    InvalidLength,
    MalformedText,
    MissingGlyph,
    NoCandidate,
    PngError,
    UnknownChallenge,
    attack_segments,
    classify,
    evaluate_segmentation,
    headline_prominence,
    ink_coverage,
    normalize,
    obfuscate,
    random_string,
    render,
    segment_clusters,
)

__all__ = [name for name in dir() if not name.startswith("_")]
