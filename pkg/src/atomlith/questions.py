"""Synthetic question generation per atom, and answer-form query rewriting.

Each atom gets up to `budget` generation calls; the returned questions are
deduplicated on a normalized key (lowercased, whitespace collapsed, trailing
question marks stripped) so near-verbatim repeats collapse while the call
budget still caps the one-off indexing cost. Query rewriting turns a query
into a hypothesized full-sentence answer whose embedding sits closer to
answer-bearing text than the raw question does.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .atomize import Atom
from .corpus import Chunk, Query
from .errors import GenerationError, IntegrityError, ParseError, ProtocolError, TransportError
from .genclient import GenerationClient, GenerationRequest, render_prompt
from .jsonl import read_jsonl, require_field, write_jsonl
from .text import first_nonempty_line, normalize_ws

logger = logging.getLogger(__name__)

DEFAULT_QUESTION_BUDGET = 15
MAX_QUESTION_CHARS = 512
DEFAULT_QUESTION_TEMPERATURE = 1.0


@dataclass(frozen=True)
class SyntheticQuestion:
    question_id: str
    atom_id: str
    chunk_id: str
    index: int
    text: str


def question_dedup_key(text: str) -> str:
    """Key under which two question texts count as the same question."""
    return normalize_ws(text).lower().rstrip("?").rstrip()


def generate_questions(
    atom: Atom,
    chunk: Chunk,
    generator: GenerationClient,
    budget: int = DEFAULT_QUESTION_BUDGET,
    temperature: float = DEFAULT_QUESTION_TEMPERATURE,
) -> list[SyntheticQuestion]:
    """Generate up to `budget` distinct questions answerable from `atom`.

    Exactly `budget` generation calls are issued sequentially; duplicates
    (under the dedup key) and empty outputs are dropped, so the result holds
    between 0 and `budget` questions in first-seen order. Individual call
    failures are logged and skipped; if every call fails the whole atom
    fails with a GenerationError naming it.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if atom.chunk_id != chunk.chunk_id:
        raise IntegrityError(
            f"atom {atom.atom_id} belongs to chunk {atom.chunk_id}, not {chunk.chunk_id}"
        )
    prompt = render_prompt("question", {"chunk": chunk.text, "atom": atom.text})
    texts: list[str] = []
    seen: set[str] = set()
    failures = 0
    last_error: Exception | None = None
    for call in range(budget):
        try:
            raw = generator.generate(
                GenerationRequest(prompt=prompt, max_tokens=128, temperature=temperature)
            )
        except (TransportError, ProtocolError, GenerationError) as exc:
            failures += 1
            last_error = exc
            logger.warning("question call %d failed for atom %s: %s", call, atom.atom_id, exc)
            continue
        line = first_nonempty_line(raw)[:MAX_QUESTION_CHARS]
        key = question_dedup_key(line)
        if not key or key in seen:
            continue
        seen.add(key)
        texts.append(line)
    if failures == budget:
        raise GenerationError(
            f"all {budget} question generations failed for atom {atom.atom_id}"
        ) from last_error
    return [
        SyntheticQuestion(
            question_id=f"{atom.atom_id}-q{i:02d}",
            atom_id=atom.atom_id,
            chunk_id=atom.chunk_id,
            index=i,
            text=t,
        )
        for i, t in enumerate(texts)
    ]


def generate_corpus_questions(
    atoms: Sequence[Atom],
    chunks_by_id: Mapping[str, Chunk],
    generator: GenerationClient,
    budget: int = DEFAULT_QUESTION_BUDGET,
    temperature: float = DEFAULT_QUESTION_TEMPERATURE,
    max_workers: int = 1,
) -> list[SyntheticQuestion]:
    """Generate questions for every atom, preserving atom order.

    Parallelism, when enabled, is across atoms only; calls within an atom
    stay sequential so per-atom output order is stable.
    """
    missing = [a.atom_id for a in atoms if a.chunk_id not in chunks_by_id]
    if missing:
        raise IntegrityError(f"atoms referencing unknown chunks: {missing[:10]}")

    def one(atom: Atom) -> list[SyntheticQuestion]:
        return generate_questions(atom, chunks_by_id[atom.chunk_id], generator, budget, temperature)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            groups = list(pool.map(one, atoms))
    else:
        groups = [one(a) for a in atoms]
    return [q for group in groups for q in group]


def rewrite_query(query: Query, generator: GenerationClient) -> Query:
    """Rewrite the query into a hypothesized full-sentence answer.

    The first non-empty line of the generation becomes the rewrite; an
    entirely empty generation falls back to the original query text
    (logged) so retrieval never sees a blank query.
    """
    prompt = render_prompt("rewrite", {"query": query.text})
    try:
        raw = generator.generate(GenerationRequest(prompt=prompt, max_tokens=128, temperature=0.0))
    except (TransportError, ProtocolError, GenerationError) as exc:
        raise GenerationError(f"rewrite failed for query {query.query_id}: {exc}") from exc
    line = first_nonempty_line(raw)
    if not line:
        logger.warning("empty rewrite for query %s; keeping original text", query.query_id)
        line = query.text
    return replace(query, rewrite=line)


def rewrite_queries(
    queries: Sequence[Query],
    generator: GenerationClient,
    max_workers: int = 1,
) -> list[Query]:
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(lambda q: rewrite_query(q, generator), queries))
    return [rewrite_query(q, generator) for q in queries]


def write_questions(path: str | Path, questions: Iterable[SyntheticQuestion]) -> None:
    write_jsonl(
        path,
        (
            {
                "question_id": q.question_id,
                "atom_id": q.atom_id,
                "chunk_id": q.chunk_id,
                "index": q.index,
                "text": q.text,
            }
            for q in questions
        ),
    )


def read_questions(path: str | Path) -> list[SyntheticQuestion]:
    questions = []
    for lineno, obj in read_jsonl(path):
        where = f"{path}:{lineno}"
        index = require_field(obj, "index", int, where)
        if index < 0:
            raise ParseError(f"{where}: index must be >= 0")
        text = require_field(obj, "text", str, where)
        if not text.strip():
            raise ParseError(f"{where}: question text is empty")
        questions.append(
            SyntheticQuestion(
                require_field(obj, "question_id", str, where),
                require_field(obj, "atom_id", str, where),
                require_field(obj, "chunk_id", str, where),
                index,
                text,
            )
        )
    return questions
