"""Shared fixture builders for the test suite.

The paraphrase corpus is built so that chunk-level retrieval is genuinely
ambiguous while question-level retrieval is not: every chunk ends with an
echo sentence that repeats the distinctive words of the NEXT chunk's first
fact twice. A query about chunk i's first fact therefore matches chunk i-1
at least as strongly as chunk i under a bag-of-tokens embedder, but the
questions generated from the gold atom share both the question template and
the full topic with the query, so the question index resolves it.
"""

from __future__ import annotations

import random

from atomlith.atomize import atomize_corpus
from atomlith.corpus import Chunk, Corpus, Query
from atomlith.embedding import LocalHashEmbedder, embed_batch
from atomlith.genclient import StubGenerationClient
from atomlith.index import build_index
from atomlith.questions import generate_corpus_questions

CONSONANTS = "bcdfghjklmnpqrstvwz"

# Five of these share a long common prefix (near-duplicates under cosine),
# five are lexically diverse; used by the pruning-efficiency fixture.
DIVERSITY_TEMPLATES = (
    "What does the passage say about {topic}?",
    "What does the passage say about {topic} overall?",
    "What does the passage say about {topic} exactly?",
    "What does the passage say about {topic} generally?",
    "What does the passage say about {topic} specifically?",
    "Which section mentions {topic}?",
    "Where is {topic} described?",
    "How is {topic} characterized here?",
    "Note the details regarding {topic}.",
    "Summarize {topic} briefly.",
)


def _word(rng: random.Random, length: int = 7) -> str:
    return "".join(rng.choice(CONSONANTS) for _ in range(length))


def build_paraphrase_corpus(
    num_chunks: int = 50,
    facts_per_chunk: int = 6,
    seed: int = 1207,
) -> Corpus:
    """Corpus of `num_chunks` chunks whose queries paraphrase atom facts.

    Each chunk holds `facts_per_chunk` fact sentences of six unique words
    plus one echo sentence repeating the next chunk's first fact twice.
    Two queries per chunk target facts 0 and 1; the fact-0 query is the one
    the echo makes ambiguous at chunk level.
    """
    rng = random.Random(seed)
    fact_words: list[list[list[str]]] = []
    for _ in range(num_chunks):
        fact_words.append([[_word(rng) for _ in range(6)] for _ in range(facts_per_chunk)])

    chunks = []
    queries = []
    for i in range(num_chunks):
        sentences = []
        for words in fact_words[i]:
            sentences.append(" ".join([words[0].capitalize()] + words[1:]) + ".")
        nxt = fact_words[(i + 1) % num_chunks][0]
        echo = "Observers again noted {0}, and {0} stayed notable.".format(" ".join(nxt))
        sentences.append(echo)
        cid = f"c{i:04d}"
        chunks.append(Chunk(chunk_id=cid, text=" ".join(sentences), source=None))
        for fact_idx in (0, 1):
            topic = " ".join(fact_words[i][fact_idx])
            queries.append(
                Query(
                    query_id=f"{cid}-query{fact_idx}",
                    text=f"Tell me what the passage says about {topic}.",
                    gold_chunk_id=cid,
                )
            )
    return Corpus(chunks=tuple(chunks), queries=tuple(queries))


def build_retrieval_setup(
    corpus: Corpus,
    *,
    dim: int = 256,
    budget: int = 5,
    templates: tuple[str, ...] | None = None,
):
    """Atomize, generate stub questions, embed, and build all three indices.

    Returns (indices, query_embeddings) where indices maps granularity name
    to a VectorIndex and query_embeddings maps query_id to vector.
    """
    atoms = atomize_corpus(corpus.chunks, "structured")
    stub = StubGenerationClient(templates) if templates else StubGenerationClient()
    questions = generate_corpus_questions(atoms, corpus.chunk_by_id, stub, budget=budget)

    embedder = LocalHashEmbedder(dim=dim)
    chunk_records = embed_batch([(c.chunk_id, "chunk", c.text) for c in corpus.chunks], embedder)
    atom_records = embed_batch([(a.atom_id, "atom", a.text) for a in atoms], embedder)
    question_records = embed_batch(
        [(q.question_id, "question", q.text) for q in questions], embedder
    )
    query_records = embed_batch(
        [(q.query_id, "query", q.text) for q in corpus.queries], embedder
    )

    indices = {
        "chunk": build_index("chunk", chunk_records),
        "atom": build_index(
            "atom", atom_records, chunk_by_atom={a.atom_id: a.chunk_id for a in atoms}
        ),
        "question": build_index(
            "question",
            question_records,
            atom_by_question={q.question_id: (q.atom_id, q.chunk_id) for q in questions},
        ),
    }
    query_embeddings = {r.item_id: r.vector for r in query_records}
    return indices, query_embeddings


def write_fixture_corpus(corpus: Corpus, chunks_path, queries_path) -> None:
    from atomlith.corpus import write_corpus

    write_corpus(corpus, chunks_path, queries_path)


def build_squad_document(
    num_articles: int = 3,
    paragraphs_per_article: int = 2,
    questions_per_paragraph: int = 2,
    seed: int = 7,
    duplicate_context: bool = False,
) -> dict:
    """Small reading-comprehension document in the nested benchmark shape."""
    rng = random.Random(seed)
    data = []
    qid = 0
    for ai in range(num_articles):
        paragraphs = []
        for pi in range(paragraphs_per_article):
            words = [_word(rng) for _ in range(12)]
            context = (
                f"{words[0].capitalize()} {words[1]} held the {words[2]} of {words[3]}. "
                f"Later the {words[4]} moved toward {words[5]} and {words[6]}."
            )
            qas = []
            for _ in range(questions_per_paragraph):
                qas.append(
                    {
                        "id": f"sq{qid:05d}",
                        "question": f"What did {words[0]} {words[1]} hold?",
                        "answers": [{"text": f"the {words[2]} of {words[3]}", "answer_start": 0}],
                    }
                )
                qid += 1
            paragraphs.append({"context": context, "qas": qas})
        data.append({"title": f"article_{ai}", "paragraphs": paragraphs})
    if duplicate_context and data and data[0]["paragraphs"]:
        clone = dict(data[0]["paragraphs"][0])
        clone = {
            "context": "  " + clone["context"].replace(" ", "  ") + " ",
            "qas": [
                {
                    "id": "sqdup00",
                    "question": "Which words were held by the duplicated opening?",
                    "answers": [],
                }
            ],
        }
        data[-1]["paragraphs"].append(clone)
    return {"version": "1.1", "data": data}
