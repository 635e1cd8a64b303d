"""Token normalization shared by keyword filtering and name similarity."""
from __future__ import annotations

import re

from .prompts import STOPWORDS

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric tokens, punctuation stripped."""
    return _TOKEN_RE.findall(text.lower())


def content_tokens(text: str) -> set[str]:
    """Normalized tokens with stopwords removed."""
    return {t for t in tokenize(text) if t not in STOPWORDS}


def token_jaccard(a: str, b: str) -> float:
    """Jaccard similarity of content-token sets; 0 when either is empty."""
    ta, tb = content_tokens(a), content_tokens(b)
    if not ta or not tb:
        return 0.0
    return len(ta & tb) / len(ta | tb)
