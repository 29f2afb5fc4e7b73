"""Small text utilities: whitespace normalization, sentence splitting,
tokenization, and the FNV-1a hash used for content addressing."""

from __future__ import annotations

import re

_WS = re.compile(r"\s+")
_TOKEN = re.compile(r"[0-9a-z]+")
_LIST_MARKER = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")

# Terminators that may end a sentence, and the quote/bracket characters that
# may trail or lead one.
_TERMINATORS = ".?!"
_CLOSERS = "\"')]’”"
_OPENERS = "\"'([‘“"

# Trailing tokens that end in a period without ending a sentence.
ABBREVIATIONS = frozenset({"e.g.", "mr.", "dr.", "etc.", "vs."})

_FNV_OFFSET = 14695981039346656037
_FNV_PRIME = 1099511628211
_U64 = 1 << 64


def normalize_ws(text: str) -> str:
    """Collapse whitespace runs to single spaces and trim the ends."""
    return _WS.sub(" ", text).strip()


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric runs; everything else is a separator."""
    return _TOKEN.findall(text.lower())


def fnv1a64(text: str) -> int:
    """FNV-1a 64-bit hash of the UTF-8 encoding of `text`."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) % _U64
    return h


def split_sentences(text: str) -> list[str]:
    """Split `text` into sentences on terminator punctuation.

    A boundary is a terminator (``. ? !``), optionally followed by closing
    quotes or brackets, then whitespace, then an uppercase letter, a digit,
    or an opening quote. A period that ends a known abbreviation never
    splits. The segments, concatenated with single spaces, reproduce the
    input up to whitespace.
    """
    n = len(text)
    boundaries: list[int] = []
    i = 0
    while i < n:
        if text[i] not in _TERMINATORS:
            i += 1
            continue
        j = i + 1
        while j < n and text[j] in _CLOSERS:
            j += 1
        k = j
        while k < n and text[k].isspace():
            k += 1
        starts_next = k < n and (text[k].isupper() or text[k].isdigit() or text[k] in _OPENERS)
        if k > j and starts_next:
            start = i
            while start > 0 and not text[start - 1].isspace():
                start -= 1
            if text[start : i + 1].lower() not in ABBREVIATIONS:
                boundaries.append(j)
        i = j

    segments = []
    prev = 0
    for b in boundaries:
        piece = text[prev:b].strip()
        if piece:
            segments.append(piece)
        prev = b
    tail = text[prev:].strip()
    if tail:
        segments.append(tail)
    return segments


def clean_generated_lines(text: str, max_lines: int = 50) -> list[str]:
    """Normalize generator output into a list of fact lines.

    Strips leading list markers (``-``, ``*``, bullets, ``1.``/``1)``),
    drops blank or sub-3-character lines, and caps the result at
    `max_lines`.
    """
    out: list[str] = []
    for raw in text.splitlines():
        line = _LIST_MARKER.sub("", raw).strip()
        if len(line) < 3:
            continue
        out.append(line)
        if len(out) >= max_lines:
            break
    return out


def first_nonempty_line(text: str) -> str:
    for raw in text.splitlines():
        line = raw.strip()
        if line:
            return line
    return ""
