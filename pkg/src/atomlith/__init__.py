"""Question-based retrieval over atomized chunks, with an offline-first
pipeline for building, pruning, and evaluating the index."""

__version__ = "0.1.0"

from .atomize import Atom, atomize_structured, atomize_unstructured, split_sentences
from .corpus import Chunk, Corpus, Query, corpus_stats, ingest_jsonl, ingest_squad
from .embedding import EmbeddingCache, LocalHashEmbedder, RemoteEmbedder, embed_batch, embed_text
from .errors import AtomlithError
from .evaluation import efficiency_sweep, nauc, ndcg_at_k, recall_at_k, run_comparison
from .genclient import (
    ClientConfig,
    FixedResponseClient,
    GenerationRequest,
    HttpGenerationClient,
    StubGenerationClient,
    render_prompt,
)
from .index import (
    PruneConfig,
    RankedChunks,
    VectorIndex,
    build_index,
    cosine_distance,
    load_index,
    prune_questions,
    retrieve_run,
    sample_questions,
    save_index,
    search,
    sweep_tau,
)
from .pipeline import load_pipeline_config, run_pipeline, validate_store
from .questions import SyntheticQuestion, generate_questions, rewrite_query

__all__ = [
    "__version__",
    "Atom",
    "AtomlithError",
    "Chunk",
    "ClientConfig",
    "Corpus",
    "EmbeddingCache",
    "FixedResponseClient",
    "GenerationRequest",
    "HttpGenerationClient",
    "LocalHashEmbedder",
    "PruneConfig",
    "Query",
    "RankedChunks",
    "RemoteEmbedder",
    "StubGenerationClient",
    "SyntheticQuestion",
    "VectorIndex",
    "atomize_structured",
    "atomize_unstructured",
    "build_index",
    "corpus_stats",
    "cosine_distance",
    "efficiency_sweep",
    "embed_batch",
    "embed_text",
    "generate_questions",
    "ingest_jsonl",
    "ingest_squad",
    "load_index",
    "load_pipeline_config",
    "nauc",
    "ndcg_at_k",
    "prune_questions",
    "recall_at_k",
    "render_prompt",
    "retrieve_run",
    "rewrite_query",
    "run_comparison",
    "run_pipeline",
    "sample_questions",
    "save_index",
    "search",
    "split_sentences",
    "sweep_tau",
    "validate_store",
]
