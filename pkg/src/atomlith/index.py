"""Exact cosine retrieval over chunk, atom, or question vectors.

Atom and question entries carry the chunk they came from; search scores
every entry, then deduplicates to the first (closest) hit per chunk, so a
chunk represented by many questions still occupies one result slot.
Diversity pruning drops near-duplicate questions within each chunk until
all surviving pairs are at least tau apart in cosine distance; random
sampling provides the baseline the pruning is compared against.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Query
from .errors import IntegrityError, ParseError
from .jsonl import read_jsonl, require_field
from .embedding import EmbeddingRecord, check_vector

GRANULARITIES = ("chunk", "atom", "question")

MANIFEST_NAME = "manifest.json"
VECTORS_NAME = "embeddings.jsonl"


def cosine_distance(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    """One minus cosine similarity, clamped to the valid range [0, 2].

    Identical vectors return exactly 0.0 and exactly opposite vectors
    exactly 2.0, regardless of float rounding in the norm.
    """
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.ndim != 1 or va.shape != vb.shape:
        raise ValueError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    na = math.sqrt(float(va @ va))
    nb = math.sqrt(float(vb @ vb))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine distance is undefined for zero-norm vectors")
    if np.array_equal(va, vb):
        return 0.0
    if np.array_equal(va, -vb):
        return 2.0
    d = 1.0 - float(va @ vb) / (na * nb)
    return min(max(d, 0.0), 2.0)


@dataclass(frozen=True, eq=False)
class IndexEntry:
    """One indexed vector plus the provenance needed to resolve its chunk."""

    entry_id: str
    vector: np.ndarray
    chunk_id: str
    atom_id: str | None = None
    question_id: str | None = None
    content_hash: int = 0


@dataclass(frozen=True, eq=False)
class VectorIndex:
    granularity: str
    dim: int
    embedder_tag: str
    entries: tuple[IndexEntry, ...]

    def __post_init__(self):
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"unknown granularity {self.granularity!r}")
        seen: set[str] = set()
        for e in self.entries:
            if e.entry_id in seen:
                raise IntegrityError(f"duplicate entry id {e.entry_id!r}")
            seen.add(e.entry_id)
            if e.vector.shape != (self.dim,):
                raise IntegrityError(
                    f"entry {e.entry_id} has dim {e.vector.shape[0]}, index has {self.dim}"
                )
            if self.granularity == "atom" and e.atom_id is None:
                raise IntegrityError(f"atom entry {e.entry_id} lacks atom_id")
            if self.granularity == "question" and (e.question_id is None or e.atom_id is None):
                raise IntegrityError(f"question entry {e.entry_id} lacks provenance ids")

    def __len__(self) -> int:
        return len(self.entries)

    @cached_property
    def _matrix(self) -> np.ndarray:
        return np.stack([e.vector for e in self.entries]).astype(np.float64)

    @cached_property
    def _norms(self) -> np.ndarray:
        norms = np.sqrt(np.einsum("ij,ij->i", self._matrix, self._matrix))
        if np.any(norms == 0.0):
            bad = [self.entries[i].entry_id for i in np.nonzero(norms == 0.0)[0]]
            raise IntegrityError(f"entries with zero-norm vectors: {bad}")
        return norms

    @cached_property
    def _entry_ids(self) -> np.ndarray:
        return np.array([e.entry_id for e in self.entries])

    @cached_property
    def chunk_ids(self) -> frozenset[str]:
        return frozenset(e.chunk_id for e in self.entries)


@dataclass(frozen=True)
class RankedChunks:
    """Deduplicated retrieval result: closest-first distinct chunks."""

    query_id: str
    ranked: tuple[tuple[str, float], ...]
    k: int

    def __post_init__(self):
        cids = [cid for cid, _ in self.ranked]
        if len(set(cids)) != len(cids):
            raise IntegrityError(f"ranked chunks for query {self.query_id!r} contain repeats")
        dists = [d for _, d in self.ranked]
        if any(b < a for a, b in zip(dists, dists[1:])):
            raise IntegrityError(f"ranked distances for query {self.query_id!r} decrease")
        if len(self.ranked) > self.k:
            raise IntegrityError(f"ranking for query {self.query_id!r} exceeds k={self.k}")

    def rank_of(self, chunk_id: str) -> int | None:
        """1-based rank of `chunk_id`, or None when absent."""
        for pos, (cid, _) in enumerate(self.ranked, start=1):
            if cid == chunk_id:
                return pos
        return None


def build_index(
    granularity: str,
    records: Sequence[EmbeddingRecord],
    *,
    chunk_by_atom: Mapping[str, str] | None = None,
    atom_by_question: Mapping[str, tuple[str, str]] | None = None,
) -> VectorIndex:
    """Assemble an index from embedding records of one granularity.

    Atom records need `chunk_by_atom` (atom_id -> chunk_id); question
    records need `atom_by_question` (question_id -> (atom_id, chunk_id)).
    Mixed embedder tags, mixed kinds, or unresolvable provenance raise
    IntegrityError.
    """
    if granularity not in GRANULARITIES:
        raise ValueError(f"unknown granularity {granularity!r}")
    if not records:
        raise IntegrityError("cannot build an index from zero records")
    tags = {r.embedder_tag for r in records}
    if len(tags) > 1:
        raise IntegrityError(f"mixed embedder tags in one index: {sorted(tags)}")
    kinds = {r.item_kind for r in records}
    if kinds != {granularity}:
        raise IntegrityError(f"records of kind {sorted(kinds)} cannot build a {granularity} index")
    dim = records[0].vector.shape[0]
    entries = []
    for rec in records:
        if granularity == "chunk":
            entry = IndexEntry(rec.item_id, rec.vector, rec.item_id, content_hash=rec.content_hash)
        elif granularity == "atom":
            if chunk_by_atom is None or rec.item_id not in chunk_by_atom:
                raise IntegrityError(f"no chunk mapping for atom {rec.item_id!r}")
            entry = IndexEntry(
                rec.item_id, rec.vector, chunk_by_atom[rec.item_id],
                atom_id=rec.item_id, content_hash=rec.content_hash,
            )
        else:
            if atom_by_question is None or rec.item_id not in atom_by_question:
                raise IntegrityError(f"no provenance mapping for question {rec.item_id!r}")
            atom_id, chunk_id = atom_by_question[rec.item_id]
            entry = IndexEntry(
                rec.item_id, rec.vector, chunk_id,
                atom_id=atom_id, question_id=rec.item_id, content_hash=rec.content_hash,
            )
        entries.append(entry)
    return VectorIndex(granularity=granularity, dim=dim, embedder_tag=records[0].embedder_tag, entries=tuple(entries))


def search(
    index: VectorIndex,
    query_vector: Sequence[float] | np.ndarray,
    k: int,
    *,
    query_id: str = "",
) -> RankedChunks:
    """Exact top-k distinct chunks by cosine distance.

    Every entry is scored; entries are visited in ascending (distance,
    entry_id) order and the first entry per chunk claims that chunk's slot,
    so ties break deterministically by entry id. The result holds
    min(k, number of distinct chunks) items.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not index.entries:
        raise IntegrityError("cannot search an empty index")
    q = np.asarray(query_vector, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != index.dim:
        raise ValueError(f"query vector has shape {q.shape}, index dim is {index.dim}")
    qnorm = math.sqrt(float(q @ q))
    if qnorm == 0.0:
        raise ValueError("query vector has zero norm")
    dists = 1.0 - (index._matrix @ q) / (index._norms * qnorm)
    np.clip(dists, 0.0, 2.0, out=dists)
    order = np.lexsort((index._entry_ids, dists))
    ranked: list[tuple[str, float]] = []
    taken: set[str] = set()
    for pos in order:
        cid = index.entries[pos].chunk_id
        if cid in taken:
            continue
        taken.add(cid)
        ranked.append((cid, float(dists[pos])))
        if len(ranked) == k:
            break
    return RankedChunks(query_id=query_id, ranked=tuple(ranked), k=k)


def retrieve_run(
    index: VectorIndex,
    queries: Sequence[Query],
    query_embeddings: Mapping[str, np.ndarray],
    k: int,
    *,
    use_rewrite: bool = False,
    rewrite_embeddings: Mapping[str, np.ndarray] | None = None,
) -> list[RankedChunks]:
    """Run search for every query, embedding rewrites instead when asked."""
    source = rewrite_embeddings if use_rewrite else query_embeddings
    if use_rewrite and rewrite_embeddings is None:
        raise IntegrityError("use_rewrite requires rewrite embeddings")
    assert source is not None
    missing = [q.query_id for q in queries if q.query_id not in source]
    if missing:
        raise IntegrityError(f"queries without embeddings: {missing[:10]}")
    return [search(index, source[q.query_id], k, query_id=q.query_id) for q in queries]


@dataclass(frozen=True)
class PruneConfig:
    """Diversity threshold; tau outside [0, 2] is clamped to the range."""

    tau: float

    def __post_init__(self):
        object.__setattr__(self, "tau", min(max(float(self.tau), 0.0), 2.0))


def _grouped_positions(entries: Sequence[IndexEntry]) -> dict[str, list[int]]:
    groups: dict[str, list[int]] = {}
    for pos, e in enumerate(entries):
        groups.setdefault(e.chunk_id, []).append(pos)
    return groups


def prune_questions(index: VectorIndex, config: PruneConfig) -> VectorIndex:
    """Drop near-duplicate questions within each chunk.

    While any within-chunk pair sits closer than tau, the closest such pair
    is found (ties broken by scan order over the pair matrix) and one
    member is removed: the one with the lexicographically larger
    (atom_id, question_id) key, so the earliest-generated question of the
    earliest atom survives. Cross-chunk pairs are never compared and every
    chunk keeps at least one question. Survivors keep their original order.
    """
    if index.granularity != "question":
        raise ValueError("diversity pruning applies to question indices")
    tau = config.tau
    keep = np.ones(len(index.entries), dtype=bool)
    if tau > 0.0:
        for positions in _grouped_positions(index.entries).values():
            m = len(positions)
            if m < 2:
                continue
            rows = index._matrix[positions] / index._norms[positions][:, None]
            dmat = 1.0 - rows @ rows.T
            np.clip(dmat, 0.0, 2.0, out=dmat)
            iu, ju = np.triu_indices(m, k=1)
            pair_d = dmat[iu, ju]
            keys = [
                (index.entries[p].atom_id or "", index.entries[p].question_id or "")
                for p in positions
            ]
            alive = np.ones(m, dtype=bool)
            while alive.sum() > 1:
                active = alive[iu] & alive[ju] & (pair_d < tau)
                if not active.any():
                    break
                masked = np.where(active, pair_d, np.inf)
                best = int(np.argmin(masked))
                i, j = int(iu[best]), int(ju[best])
                victim = j if keys[j] > keys[i] else i
                alive[victim] = False
            for local, pos in enumerate(positions):
                keep[pos] = bool(alive[local])
    entries = tuple(e for pos, e in enumerate(index.entries) if keep[pos])
    return VectorIndex(
        granularity=index.granularity,
        dim=index.dim,
        embedder_tag=index.embedder_tag,
        entries=entries,
    )


def sweep_tau(index: VectorIndex, tau_values: Sequence[float]) -> list[tuple[float, VectorIndex]]:
    """Prune at each tau of a strictly ascending list; retained counts are
    non-increasing along the sweep."""
    taus = [float(t) for t in tau_values]
    if not taus:
        raise ValueError("tau_values must be non-empty")
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise ValueError("tau_values must be strictly ascending")
    return [(tau, prune_questions(index, PruneConfig(tau))) for tau in taus]


def sample_questions(index: VectorIndex, fraction: float, seed: int) -> VectorIndex:
    """Keep a uniform random fraction of questions within each chunk.

    Per chunk, max(1, round(fraction * count)) questions are kept, chunks
    are visited in sorted chunk_id order under one seeded generator, and
    survivors keep their original order. fraction must be in (0, 1].
    """
    if index.granularity != "question":
        raise ValueError("sampling applies to question indices")
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    rng = random.Random(seed)
    groups = _grouped_positions(index.entries)
    kept: set[int] = set()
    for chunk_id in sorted(groups):
        positions = groups[chunk_id]
        want = max(1, int(math.floor(fraction * len(positions) + 0.5)))
        kept.update(rng.sample(positions, min(want, len(positions))))
    entries = tuple(e for pos, e in enumerate(index.entries) if pos in kept)
    return VectorIndex(
        granularity=index.granularity,
        dim=index.dim,
        embedder_tag=index.embedder_tag,
        entries=entries,
    )


def save_index(index: VectorIndex, dir_path: str | Path) -> None:
    """Write manifest.json plus embeddings.jsonl (with provenance ids)."""
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "granularity": index.granularity,
        "dim": index.dim,
        "embedder_tag": index.embedder_tag,
        "count": len(index.entries),
    }
    (dir_path / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    with (dir_path / VECTORS_NAME).open("w", encoding="utf-8", newline="\n") as fh:
        for e in index.entries:
            obj = {
                "item_id": e.entry_id,
                "item_kind": index.granularity,
                "embedder_tag": index.embedder_tag,
                "content_hash": str(e.content_hash),
                "vector": [float(x) for x in e.vector],
                "chunk_id": e.chunk_id,
                "atom_id": e.atom_id,
                "question_id": e.question_id,
            }
            fh.write(json.dumps(obj, ensure_ascii=False))
            fh.write("\n")


def load_index(dir_path: str | Path) -> VectorIndex:
    dir_path = Path(dir_path)
    manifest_path = dir_path / MANIFEST_NAME
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{manifest_path}: invalid JSON: {exc.msg}") from exc
    granularity = require_field(manifest, "granularity", str, str(manifest_path))
    dim = require_field(manifest, "dim", int, str(manifest_path))
    tag = require_field(manifest, "embedder_tag", str, str(manifest_path))
    count = require_field(manifest, "count", int, str(manifest_path))
    entries = []
    for lineno, obj in read_jsonl(dir_path / VECTORS_NAME):
        where = f"{dir_path / VECTORS_NAME}:{lineno}"
        vector = require_field(obj, "vector", list, where)
        try:
            arr = check_vector(np.asarray(vector, dtype=np.float32), dim)
        except ValueError as exc:
            raise ParseError(f"{where}: bad vector: {exc}") from None
        atom_id = obj.get("atom_id")
        question_id = obj.get("question_id")
        entries.append(
            IndexEntry(
                entry_id=require_field(obj, "item_id", str, where),
                vector=arr,
                chunk_id=require_field(obj, "chunk_id", str, where),
                atom_id=atom_id if isinstance(atom_id, str) else None,
                question_id=question_id if isinstance(question_id, str) else None,
                content_hash=int(require_field(obj, "content_hash", str, where)),
            )
        )
    if len(entries) != count:
        raise IntegrityError(
            f"{dir_path}: manifest promises {count} entries, file has {len(entries)}"
        )
    return VectorIndex(granularity=granularity, dim=dim, embedder_tag=tag, entries=tuple(entries))
