"""Whitespace tokenizer shared by corpus stats, scoring, and metrics.

Rule: lowercase, split on whitespace, strip leading/trailing
non-alphanumeric characters from each piece, drop pieces that end up
empty. The result is empty only for strings containing no alphanumeric
characters.
"""

from __future__ import annotations

TOKENIZER_ID = "ws-lower-v1"


def tokenize(text: str) -> list[str]:
    tokens: list[str] = []
    for piece in text.lower().split():
        start = 0
        end = len(piece)
        while start < end and not piece[start].isalnum():
            start += 1
        while end > start and not piece[end - 1].isalnum():
            end -= 1
        if end > start:
            tokens.append(piece[start:end])
    return tokens
