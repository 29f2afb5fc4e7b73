"""Corpus data model: chunks, queries, and benchmark restructuring.

A corpus is either built from a SQuAD-style reading-comprehension JSON file
(each paragraph context becomes a retrieval chunk, each question becomes a
query labeled with its source chunk) or loaded from a pair of generic JSONL
files. Contexts are deduplicated on whitespace-normalized text, questions of
a dropped duplicate are remapped to the surviving chunk, and chunk order is
shuffled under a caller-supplied seed so downstream artifacts are
reproducible.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .errors import IntegrityError, ParseError
from .jsonl import read_jsonl, require_field, write_jsonl
from .text import normalize_ws, split_sentences


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    text: str
    source: str | None = None


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str
    gold_chunk_id: str
    rewrite: str | None = None


@dataclass(frozen=True)
class Corpus:
    """An immutable set of chunks plus gold-labeled queries.

    Construction validates referential integrity: ids are unique, chunk
    texts are pairwise distinct after whitespace normalization, and every
    query's gold label resolves to a chunk.
    """

    chunks: tuple[Chunk, ...]
    queries: tuple[Query, ...]

    def __post_init__(self):
        ids = [c.chunk_id for c in self.chunks]
        dup = _duplicates(ids)
        if dup:
            raise IntegrityError(f"duplicate chunk ids: {sorted(dup)}")
        empty = [c.chunk_id for c in self.chunks if not c.text.strip()]
        if empty:
            raise IntegrityError(f"chunks with empty text: {empty}")
        seen_text: dict[str, str] = {}
        clashes = []
        for c in self.chunks:
            key = normalize_ws(c.text)
            if key in seen_text:
                clashes.append((seen_text[key], c.chunk_id))
            else:
                seen_text[key] = c.chunk_id
        if clashes:
            raise IntegrityError(f"chunks with identical normalized text: {clashes}")
        qids = [q.query_id for q in self.queries]
        dup = _duplicates(qids)
        if dup:
            raise IntegrityError(f"duplicate query ids: {sorted(dup)}")
        known = set(ids)
        dangling = [q.query_id for q in self.queries if q.gold_chunk_id not in known]
        if dangling:
            raise IntegrityError(f"queries with unresolvable gold_chunk_id: {dangling}")
        empty_q = [q.query_id for q in self.queries if not q.text.strip()]
        if empty_q:
            raise IntegrityError(f"queries with empty text: {empty_q}")

    @cached_property
    def chunk_by_id(self) -> dict[str, Chunk]:
        return {c.chunk_id: c for c in self.chunks}

    @cached_property
    def gold_by_query_id(self) -> dict[str, str]:
        return {q.query_id: q.gold_chunk_id for q in self.queries}


def _duplicates(ids: Sequence[str]) -> set[str]:
    seen: set[str] = set()
    dup: set[str] = set()
    for i in ids:
        if i in seen:
            dup.add(i)
        seen.add(i)
    return dup


def _expect(value: Any, kind: type, path: str, type_name: str) -> Any:
    if not isinstance(value, kind):
        got = "missing" if value is None else type(value).__name__
        raise ParseError(f"{path}: expected {type_name}, got {got}")
    return value


def ingest_squad(document: Any, seed: int = 0) -> Corpus:
    """Restructure a SQuAD-style reading-comprehension document for retrieval.

    Walks ``data[*].paragraphs[*]``: each context becomes a chunk (the
    article title, when present, is kept as the chunk source) and each entry
    of ``qas`` becomes a query whose gold label is the context it was asked
    against. Contexts that are identical after whitespace normalization are
    merged into the first occurrence and their questions remapped. Distinct
    chunks are shuffled under `seed` and assigned zero-padded sequential
    ids. Structural violations raise ParseError naming the offending path.
    """
    root = _expect(document, dict, "$", "object")
    articles = _expect(root.get("data"), list, "$.data", "array")
    contexts: list[tuple[str, str | None]] = []
    first_seen: dict[str, int] = {}
    pending: list[tuple[str, str, int]] = []
    raw_contexts = 0
    qcounter = 0
    for ai, article in enumerate(articles):
        apath = f"$.data[{ai}]"
        article = _expect(article, dict, apath, "object")
        title = article.get("title")
        if title is not None:
            title = _expect(title, str, f"{apath}.title", "string")
        paragraphs = _expect(article.get("paragraphs"), list, f"{apath}.paragraphs", "array")
        for pi, para in enumerate(paragraphs):
            ppath = f"{apath}.paragraphs[{pi}]"
            para = _expect(para, dict, ppath, "object")
            context = _expect(para.get("context"), str, f"{ppath}.context", "string")
            key = normalize_ws(context)
            if not key:
                raise ParseError(f"{ppath}.context: empty after trimming")
            raw_contexts += 1
            pos = first_seen.get(key)
            if pos is None:
                pos = len(contexts)
                first_seen[key] = pos
                contexts.append((context, title))
            qas = _expect(para.get("qas"), list, f"{ppath}.qas", "array")
            for qi, qa in enumerate(qas):
                qpath = f"{ppath}.qas[{qi}]"
                qa = _expect(qa, dict, qpath, "object")
                question = _expect(qa.get("question"), str, f"{qpath}.question", "string")
                if not question.strip():
                    raise ParseError(f"{qpath}.question: empty after trimming")
                qid = qa.get("id")
                if qid is None:
                    qid = f"q{qcounter:06d}"
                else:
                    qid = _expect(qid, str, f"{qpath}.id", "string")
                qcounter += 1
                pending.append((qid, question, pos))

    order = list(range(len(contexts)))
    random.Random(seed).shuffle(order)
    width = max(4, len(str(max(len(contexts) - 1, 0))))
    id_by_pos: dict[int, str] = {}
    chunks = []
    for new_idx, pos in enumerate(order):
        text, title = contexts[pos]
        cid = f"c{new_idx:0{width}d}"
        id_by_pos[pos] = cid
        chunks.append(Chunk(chunk_id=cid, text=text, source=title))
    queries = [Query(qid, question, id_by_pos[pos]) for qid, question, pos in pending]
    return Corpus(chunks=tuple(chunks), queries=tuple(queries))


def count_squad_contexts(document: Any) -> tuple[int, int]:
    """Return (raw paragraph count, distinct context count) for reporting."""
    root = _expect(document, dict, "$", "object")
    articles = _expect(root.get("data"), list, "$.data", "array")
    raw = 0
    seen: set[str] = set()
    for ai, article in enumerate(articles):
        paragraphs = _expect(
            _expect(article, dict, f"$.data[{ai}]", "object").get("paragraphs"),
            list, f"$.data[{ai}].paragraphs", "array",
        )
        for pi, para in enumerate(paragraphs):
            ppath = f"$.data[{ai}].paragraphs[{pi}]"
            context = _expect(
                _expect(para, dict, ppath, "object").get("context"),
                str, f"{ppath}.context", "string",
            )
            raw += 1
            seen.add(normalize_ws(context))
    return raw, len(seen)


def read_chunks(path: str | Path) -> list[Chunk]:
    chunks = []
    for lineno, obj in read_jsonl(path):
        where = f"{path}:{lineno}"
        text = require_field(obj, "text", str, where)
        source = obj.get("source")
        if source is not None and not isinstance(source, str):
            raise ParseError(f"{where}: field 'source' must be str or null")
        chunks.append(Chunk(require_field(obj, "chunk_id", str, where), text, source))
    return chunks


def read_queries(path: str | Path) -> list[Query]:
    queries = []
    for lineno, obj in read_jsonl(path):
        where = f"{path}:{lineno}"
        rewrite = obj.get("rewrite")
        if rewrite is not None and not isinstance(rewrite, str):
            raise ParseError(f"{where}: field 'rewrite' must be str or null")
        queries.append(
            Query(
                require_field(obj, "query_id", str, where),
                require_field(obj, "text", str, where),
                require_field(obj, "gold_chunk_id", str, where),
                rewrite,
            )
        )
    return queries


def ingest_jsonl(chunks_path: str | Path, queries_path: str | Path) -> Corpus:
    """Load a corpus from chunk and query JSONL files, validating integrity."""
    return Corpus(chunks=tuple(read_chunks(chunks_path)), queries=tuple(read_queries(queries_path)))


def write_chunks(chunks: Iterable[Chunk], path: str | Path) -> None:
    write_jsonl(
        path,
        ({"chunk_id": c.chunk_id, "text": c.text, "source": c.source} for c in chunks),
    )


def write_queries(queries: Iterable[Query], path: str | Path) -> None:
    write_jsonl(
        path,
        (
            {"query_id": q.query_id, "text": q.text, "gold_chunk_id": q.gold_chunk_id, "rewrite": q.rewrite}
            for q in queries
        ),
    )


def write_corpus(corpus: Corpus, chunks_path: str | Path, queries_path: str | Path) -> None:
    write_chunks(corpus.chunks, chunks_path)
    write_queries(corpus.queries, queries_path)


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    n = len(values)
    if n == 0:
        return 0.0, 0.0
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / n
    return mean, var ** 0.5


def corpus_stats(corpus: Corpus) -> dict[str, Any]:
    """Descriptive statistics: counts plus mean/std of queries per chunk,
    words per query, words per chunk, and sentences per chunk. Words are
    whitespace tokens; the std is the population standard deviation."""
    per_chunk_queries: dict[str, int] = {c.chunk_id: 0 for c in corpus.chunks}
    for q in corpus.queries:
        per_chunk_queries[q.gold_chunk_id] += 1
    stats = {
        "num_chunks": len(corpus.chunks),
        "num_queries": len(corpus.queries),
        "queries_per_chunk": _mean_std(list(per_chunk_queries.values())),
        "words_per_query": _mean_std([len(q.text.split()) for q in corpus.queries]),
        "words_per_chunk": _mean_std([len(c.text.split()) for c in corpus.chunks]),
        "sentences_per_chunk": _mean_std([len(split_sentences(c.text)) for c in corpus.chunks]),
    }
    return stats
