"""Embeddings for chunks, atoms, questions, and queries.

Every vector is L2-normalized float32 at creation time, so cosine distance
downstream reduces to one minus a dot product. Two embedders are provided: a
deterministic token-hashing embedder that keeps the full pipeline runnable
offline, and a remote client speaking the common embeddings-API JSON
protocol. A content-addressed cache keyed on (hash of the final embedded
text, embedder tag) makes re-runs cheap and identical texts free.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np

from .errors import IntegrityError, ParseError, ProtocolError
from .genclient import post_json_with_retries
from .jsonl import read_jsonl, require_field
from .text import fnv1a64, tokenize

logger = logging.getLogger(__name__)

ITEM_KINDS = ("chunk", "atom", "question", "query", "rewrite")
DEFAULT_DIM = 256

# Prefix convention used by instruction-tuned embedding models that expect
# queries and passages to be marked.
E5_PREFIXES: Mapping[str, str] = {
    "query": "query: ",
    "rewrite": "query: ",
    "chunk": "passage: ",
    "atom": "passage: ",
    "question": "passage: ",
}


def check_vector(values: Any, dim: int | None = None) -> np.ndarray:
    """Validate and return a finite, nonzero float32 vector."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"expected a 1-d vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"expected dim {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector has non-finite components")
    if float(np.dot(arr.astype(np.float64), arr.astype(np.float64))) <= 0.0:
        raise ValueError("vector has zero norm")
    return arr


def l2_normalize(arr: np.ndarray) -> np.ndarray:
    vec = np.asarray(arr, dtype=np.float64)
    norm = math.sqrt(float(np.dot(vec, vec)))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return (vec / norm).astype(np.float32)


@dataclass(frozen=True, eq=False)
class EmbeddingRecord:
    item_id: str
    item_kind: str
    vector: np.ndarray
    content_hash: int
    embedder_tag: str


class Embedder(Protocol):
    dim: int
    tag: str

    def render(self, kind: str, text: str) -> str: ...

    def encode(self, texts: Sequence[str]) -> np.ndarray: ...


class LocalHashEmbedder:
    """Deterministic bag-of-hashed-tokens embedder.

    Tokens are lowercased alphanumeric runs. Each token's FNV-1a 64-bit
    hash picks a component (hash mod dim) and a sign (+1 when bit 63 is
    set, else -1), accumulated over occurrences; the result is
    L2-normalized. Token order never matters, repeating every token scales
    the presum uniformly, and disjoint vocabularies land on near-orthogonal
    vectors with high probability.
    """

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.tag = f"local-fnv1a-{dim}"

    def render(self, kind: str, text: str) -> str:
        return text

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float32)
        for row, text in enumerate(texts):
            acc = np.zeros(self.dim, dtype=np.float64)
            tokens = tokenize(text)
            if not tokens:
                raise ValueError(f"text has no embeddable tokens: {text[:60]!r}")
            for tok in tokens:
                h = fnv1a64(tok)
                acc[h % self.dim] += 1.0 if (h >> 63) & 1 else -1.0
            out[row] = l2_normalize(acc)
        return out


@dataclass(frozen=True)
class RemoteEmbedderConfig:
    endpoint_url: str
    model_name: str
    dim: int
    api_key_env: str = "ATOMLITH_API_KEY"
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 0.5
    batch_size: int = 64
    kind_prefixes: Mapping[str, str] | None = None


class RemoteEmbedder:
    """Embeddings-API client: POST {model, input: [...]} to /embeddings.

    When `kind_prefixes` is set (e.g. E5_PREFIXES) the item kind selects a
    prefix prepended to the text before embedding; the prefixed text is
    what gets content-addressed, so queries and passages cache separately.
    """

    def __init__(self, config: RemoteEmbedderConfig, *, sleep: Callable[[float], None] = time.sleep):
        if config.dim < 1:
            raise ValueError("dim must be >= 1")
        if config.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self._config = config
        self._sleep = sleep
        self.dim = config.dim
        self.tag = config.model_name

    def render(self, kind: str, text: str) -> str:
        prefixes = self._config.kind_prefixes
        if not prefixes:
            return text
        return prefixes.get(kind, "") + text

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        cfg = self._config
        url = cfg.endpoint_url.rstrip("/") + "/embeddings"
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(cfg.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        out = np.zeros((len(texts), cfg.dim), dtype=np.float32)
        for start in range(0, len(texts), cfg.batch_size):
            batch = list(texts[start : start + cfg.batch_size])
            body = post_json_with_retries(
                url,
                {"model": cfg.model_name, "input": batch},
                headers=headers,
                timeout=cfg.timeout,
                max_retries=cfg.max_retries,
                backoff_base=cfg.backoff_base,
                sleep=self._sleep,
            )
            try:
                data = body["data"]
                vectors = [item["embedding"] for item in data]
            except (KeyError, TypeError) as exc:
                raise ProtocolError(f"malformed embeddings response from {url}") from exc
            if len(vectors) != len(batch):
                raise ProtocolError(
                    f"{url} returned {len(vectors)} embeddings for {len(batch)} inputs"
                )
            for offset, vec in enumerate(vectors):
                arr = np.asarray(vec, dtype=np.float64)
                if arr.ndim != 1 or arr.shape[0] != cfg.dim:
                    raise ProtocolError(
                        f"{url} returned a vector of dim {arr.shape}, expected {cfg.dim}"
                    )
                out[start + offset] = l2_normalize(arr)
        return out


def record_to_json(record: EmbeddingRecord) -> dict[str, Any]:
    return {
        "item_id": record.item_id,
        "item_kind": record.item_kind,
        "embedder_tag": record.embedder_tag,
        "content_hash": str(record.content_hash),
        "vector": [float(x) for x in record.vector],
    }


def _record_from_obj(obj: Any, where: str) -> EmbeddingRecord:
    item_kind = require_field(obj, "item_kind", str, where)
    if item_kind not in ITEM_KINDS:
        raise ParseError(f"{where}: unknown item_kind {item_kind!r}")
    raw_hash = require_field(obj, "content_hash", str, where)
    try:
        content_hash = int(raw_hash)
    except ValueError:
        raise ParseError(f"{where}: content_hash is not an integer string") from None
    if not 0 <= content_hash < (1 << 64):
        raise ParseError(f"{where}: content_hash out of unsigned 64-bit range")
    vector = require_field(obj, "vector", list, where)
    try:
        arr = check_vector(np.asarray(vector, dtype=np.float32))
    except ValueError as exc:
        raise ParseError(f"{where}: bad vector: {exc}") from None
    return EmbeddingRecord(
        item_id=require_field(obj, "item_id", str, where),
        item_kind=item_kind,
        vector=arr,
        content_hash=content_hash,
        embedder_tag=require_field(obj, "embedder_tag", str, where),
    )


def write_records(path: str | Path, records: Iterable[EmbeddingRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_json(rec), ensure_ascii=False))
            fh.write("\n")


def read_records(path: str | Path) -> list[EmbeddingRecord]:
    return [_record_from_obj(obj, f"{path}:{lineno}") for lineno, obj in read_jsonl(path)]


class EmbeddingCache:
    """Content-addressed vector cache persisted as a JSONL file.

    The lookup key is (content_hash of the final embedded text, embedder
    tag): identical text re-embeds to the identical stored vector no matter
    which item asks. Corrupt lines are dropped on load (logged) and the
    file is rewritten clean on the next flush; clean loads append only.
    """

    def __init__(self, path: str | Path):
        self._path = Path(path)
        self._records: dict[tuple[int, str], dict[str, Any]] = {}
        self._vectors: dict[tuple[int, str], np.ndarray] = {}
        self._pending: list[dict[str, Any]] = []
        self._needs_rewrite = False
        if self._path.exists():
            self._load()

    def __len__(self) -> int:
        return len(self._records)

    def _load(self) -> None:
        dropped = 0
        with self._path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    rec = _record_from_obj(obj, f"{self._path}:{lineno}")
                except (ValueError, ParseError) as exc:
                    dropped += 1
                    logger.warning("%s:%d: dropping corrupt cache line (%s)", self._path, lineno, exc)
                    continue
                key = (rec.content_hash, rec.embedder_tag)
                self._records[key] = record_to_json(rec)
                self._vectors[key] = rec.vector
        if dropped:
            self._needs_rewrite = True

    def get(self, content_hash: int, embedder_tag: str) -> np.ndarray | None:
        return self._vectors.get((content_hash, embedder_tag))

    def put(self, record: EmbeddingRecord) -> None:
        key = (record.content_hash, record.embedder_tag)
        if key in self._records:
            return
        obj = record_to_json(record)
        self._records[key] = obj
        self._vectors[key] = record.vector
        self._pending.append(obj)

    def flush(self) -> None:
        """Persist new entries; rewrites the whole file if corruption was
        seen on load, otherwise appends."""
        if self._needs_rewrite:
            self._path.parent.mkdir(parents=True, exist_ok=True)
            with self._path.open("w", encoding="utf-8", newline="\n") as fh:
                for obj in self._records.values():
                    fh.write(json.dumps(obj, ensure_ascii=False))
                    fh.write("\n")
            self._needs_rewrite = False
        elif self._pending:
            self._path.parent.mkdir(parents=True, exist_ok=True)
            with self._path.open("a", encoding="utf-8", newline="\n") as fh:
                for obj in self._pending:
                    fh.write(json.dumps(obj, ensure_ascii=False))
                    fh.write("\n")
        self._pending = []


def embed_text(text: str, embedder: Embedder, kind: str = "query") -> np.ndarray:
    """Embed a single text; empty or token-free text raises ValueError."""
    if not text.strip():
        raise ValueError("cannot embed empty text")
    vec = embedder.encode([embedder.render(kind, text)])[0]
    return check_vector(vec, embedder.dim)


def embed_batch(
    items: Sequence[tuple[str, str, str]],
    embedder: Embedder,
    cache: EmbeddingCache | None = None,
) -> list[EmbeddingRecord]:
    """Embed (item_id, item_kind, text) triples, preserving input order.

    Cache hits are served without touching the embedder; misses are encoded
    in one batch and written back to the cache. Duplicate item ids or an
    unknown kind raise before any embedding happens.
    """
    ids = [item_id for item_id, _, _ in items]
    dup = {i for i in ids if ids.count(i) > 1} if len(set(ids)) != len(ids) else set()
    if dup:
        raise IntegrityError(f"duplicate item ids in embedding batch: {sorted(dup)}")
    prepared: list[tuple[str, int]] = []
    for item_id, kind, text in items:
        if kind not in ITEM_KINDS:
            raise ValueError(f"unknown item kind {kind!r} for item {item_id}")
        if not text.strip():
            raise ValueError(f"item {item_id} has empty text")
        final = embedder.render(kind, text)
        prepared.append((final, fnv1a64(final)))

    records: list[EmbeddingRecord | None] = [None] * len(items)
    misses: list[int] = []
    for pos, ((item_id, kind, _), (final, chash)) in enumerate(zip(items, prepared)):
        cached = cache.get(chash, embedder.tag) if cache is not None else None
        if cached is not None and cached.shape[0] == embedder.dim:
            records[pos] = EmbeddingRecord(item_id, kind, cached, chash, embedder.tag)
        else:
            misses.append(pos)
    if misses:
        vectors = embedder.encode([prepared[pos][0] for pos in misses])
        vectors = np.asarray(vectors, dtype=np.float32)
        if vectors.shape != (len(misses), embedder.dim):
            raise ProtocolError(
                f"embedder returned shape {vectors.shape}, expected {(len(misses), embedder.dim)}"
            )
        for pos, vec in zip(misses, vectors):
            item_id, kind, _ = items[pos]
            rec = EmbeddingRecord(item_id, kind, check_vector(vec, embedder.dim), prepared[pos][1], embedder.tag)
            records[pos] = rec
            if cache is not None:
                cache.put(rec)
        if cache is not None:
            cache.flush()
    return [rec for rec in records if rec is not None]
