"""Chunk atomization: one retrieval atom per self-contained fact.

Structured mode splits a chunk into sentences with a rule-based splitter.
Unstructured mode asks a generation client to break the chunk into
stand-alone facts, one per line, and falls back to the sentence split when
the generator returns nothing usable.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Chunk
from .errors import GenerationError, ParseError, ProtocolError, TransportError
from .genclient import GenerationClient, GenerationRequest, render_prompt
from .jsonl import read_jsonl, require_field, write_jsonl
from .text import clean_generated_lines, split_sentences

__all__ = [
    "Atom",
    "STRUCTURED",
    "UNSTRUCTURED",
    "split_sentences",
    "atomize_structured",
    "atomize_unstructured",
    "atomize_corpus",
    "read_atoms",
    "write_atoms",
]

logger = logging.getLogger(__name__)

STRUCTURED = "structured"
UNSTRUCTURED = "unstructured"
KINDS = (STRUCTURED, UNSTRUCTURED)

DEFAULT_MAX_ATOMS = 50


@dataclass(frozen=True)
class Atom:
    atom_id: str
    chunk_id: str
    kind: str
    index: int
    text: str


def _build_atoms(chunk: Chunk, kind: str, texts: Sequence[str]) -> list[Atom]:
    return [
        Atom(
            atom_id=f"{chunk.chunk_id}-a{i:03d}",
            chunk_id=chunk.chunk_id,
            kind=kind,
            index=i,
            text=t,
        )
        for i, t in enumerate(texts)
    ]


def atomize_structured(chunk: Chunk) -> list[Atom]:
    """Split the chunk into sentence atoms; a chunk with no terminator
    yields a single atom covering the whole text."""
    return _build_atoms(chunk, STRUCTURED, split_sentences(chunk.text))


def atomize_unstructured(
    chunk: Chunk,
    generator: GenerationClient,
    max_atoms: int = DEFAULT_MAX_ATOMS,
) -> list[Atom]:
    """Ask the generator to decompose the chunk into stand-alone facts.

    Generated lines are cleaned of list markers, blank and trivially short
    lines are dropped, and the result is capped at `max_atoms`. An empty
    generation falls back to the sentence split for this chunk (logged); a
    generator failure raises GenerationError naming the chunk.
    """
    prompt = render_prompt("atomize", {"chunk": chunk.text})
    try:
        raw = generator.generate(GenerationRequest(prompt=prompt, max_tokens=1024, temperature=0.0))
    except (TransportError, ProtocolError, GenerationError) as exc:
        raise GenerationError(f"atomization failed for chunk {chunk.chunk_id}: {exc}") from exc
    lines = clean_generated_lines(raw, max_lines=max_atoms)
    if not lines:
        logger.warning(
            "empty atomization for chunk %s; falling back to sentence split", chunk.chunk_id
        )
        lines = split_sentences(chunk.text)[:max_atoms]
    return _build_atoms(chunk, UNSTRUCTURED, lines)


def atomize_corpus(
    chunks: Sequence[Chunk],
    mode: str,
    generator: GenerationClient | None = None,
    max_atoms: int = DEFAULT_MAX_ATOMS,
    max_workers: int = 1,
) -> list[Atom]:
    """Atomize every chunk, preserving chunk order in the output."""
    if mode == STRUCTURED:
        per_chunk = [atomize_structured(c) for c in chunks]
    elif mode == UNSTRUCTURED:
        if generator is None:
            raise ValueError("unstructured atomization requires a generation client")
        if max_workers > 1:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                per_chunk = list(
                    pool.map(lambda c: atomize_unstructured(c, generator, max_atoms), chunks)
                )
        else:
            per_chunk = [atomize_unstructured(c, generator, max_atoms) for c in chunks]
    else:
        raise ValueError(f"unknown atomization mode {mode!r}")
    return [atom for group in per_chunk for atom in group]


def write_atoms(path: str | Path, atoms: Iterable[Atom]) -> None:
    write_jsonl(
        path,
        (
            {"atom_id": a.atom_id, "chunk_id": a.chunk_id, "kind": a.kind, "index": a.index, "text": a.text}
            for a in atoms
        ),
    )


def read_atoms(path: str | Path) -> list[Atom]:
    atoms = []
    for lineno, obj in read_jsonl(path):
        where = f"{path}:{lineno}"
        kind = require_field(obj, "kind", str, where)
        if kind not in KINDS:
            raise ParseError(f"{where}: unknown atom kind {kind!r}")
        index = require_field(obj, "index", int, where)
        if index < 0:
            raise ParseError(f"{where}: index must be >= 0")
        text = require_field(obj, "text", str, where)
        if not text.strip():
            raise ParseError(f"{where}: atom text is empty")
        atoms.append(
            Atom(
                require_field(obj, "atom_id", str, where),
                require_field(obj, "chunk_id", str, where),
                kind,
                index,
                text,
            )
        )
    return atoms
