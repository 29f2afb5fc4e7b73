import json
import math
import random

import numpy as np
import pytest

from atomlith.corpus import Query
from atomlith.embedding import EmbeddingRecord, LocalHashEmbedder, embed_batch
from atomlith.errors import IntegrityError, ParseError
from atomlith.index import (
    IndexEntry,
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


def question_index(vectors_by_chunk, dim, tag="t"):
    entries = []
    for chunk_id, vectors in vectors_by_chunk.items():
        for i, vec in enumerate(vectors):
            qid = f"{chunk_id}-a000-q{i:02d}"
            entries.append(
                IndexEntry(
                    entry_id=qid,
                    vector=np.asarray(vec, dtype=np.float32),
                    chunk_id=chunk_id,
                    atom_id=f"{chunk_id}-a000",
                    question_id=qid,
                )
            )
    return VectorIndex(granularity="question", dim=dim, embedder_tag=tag, entries=tuple(entries))


def random_atom_index(seed, *, dim=6, num_entries=30, num_chunks=8):
    """Integer-valued vectors keep float arithmetic exact for oracle checks."""
    rng = random.Random(seed)
    entries = []
    for i in range(num_entries):
        if i % 5 == 0 and i >= 5:
            vec = entries[i - 3].vector.copy()  # inject exact duplicates
        else:
            vec = np.zeros(dim, dtype=np.float32)
            while not vec.any():
                vec = np.asarray([rng.randrange(-4, 5) for _ in range(dim)], dtype=np.float32)
        eid = f"e{i:03d}"
        entries.append(
            IndexEntry(entry_id=eid, vector=vec, chunk_id=f"c{rng.randrange(num_chunks):02d}", atom_id=eid)
        )
    return VectorIndex(granularity="atom", dim=dim, embedder_tag="t", entries=tuple(entries))


def brute_force_search(entries, query, k):
    """Pure-Python reference ranking: fsum dots, tuple sort, chunk dedup."""
    q = [float(x) for x in query]
    qn = math.sqrt(math.fsum(x * x for x in q))
    scored = []
    for e in entries:
        vec = [float(x) for x in e.vector]
        dot = math.fsum(a * b for a, b in zip(vec, q))
        norm = math.sqrt(math.fsum(a * a for a in vec))
        d = min(max(1.0 - dot / (norm * qn), 0.0), 2.0)
        scored.append((d, e.entry_id, e.chunk_id))
    scored.sort()
    out, seen = [], set()
    for d, _, cid in scored:
        if cid in seen:
            continue
        seen.add(cid)
        out.append((cid, d))
        if len(out) == k:
            break
    return out


# ---------------------------------------------------------------- distance


def test_cosine_distance_exact_endpoints():
    a = np.array([0.3, -0.7, 0.2], dtype=np.float64)
    assert cosine_distance(a, a) == 0.0
    assert cosine_distance(a, -a) == 2.0
    assert cosine_distance([1.0, 0.0], [0.0, 1.0]) == 1.0


def test_cosine_distance_scale_invariant():
    d = cosine_distance([1.0, 2.0, 3.0], [2.0, 4.0, 6.0])
    assert d == pytest.approx(0.0, abs=1e-12)


def test_cosine_distance_rejects_bad_input():
    with pytest.raises(ValueError, match="mismatch"):
        cosine_distance([1.0, 0.0], [1.0, 0.0, 0.0])
    with pytest.raises(ValueError, match="zero"):
        cosine_distance([0.0, 0.0], [1.0, 0.0])


def test_cosine_distance_clamps_rounding():
    rng = np.random.default_rng(3)
    for _ in range(50):
        v = rng.normal(size=8)
        assert cosine_distance(v, 3.5 * v) >= 0.0
        assert cosine_distance(v, -2.0 * v) <= 2.0


# ---------------------------------------------------------------- structure


def test_ranked_chunks_validation():
    with pytest.raises(IntegrityError, match="repeat"):
        RankedChunks("q", (("c1", 0.1), ("c1", 0.2)), 5)
    with pytest.raises(IntegrityError, match="decrease"):
        RankedChunks("q", (("c1", 0.3), ("c2", 0.1)), 5)
    with pytest.raises(IntegrityError, match="exceeds"):
        RankedChunks("q", (("c1", 0.1), ("c2", 0.2), ("c3", 0.3)), 2)
    run = RankedChunks("q", (("c1", 0.1), ("c2", 0.2)), 5)
    assert run.rank_of("c2") == 2
    assert run.rank_of("missing") is None


def test_vector_index_validation():
    vec = np.ones(3, dtype=np.float32)
    with pytest.raises(ValueError, match="granularity"):
        VectorIndex("paragraph", 3, "t", ())
    with pytest.raises(IntegrityError, match="duplicate"):
        VectorIndex(
            "chunk", 3, "t",
            (IndexEntry("e", vec, "c1"), IndexEntry("e", vec, "c2")),
        )
    with pytest.raises(IntegrityError, match="dim"):
        VectorIndex("chunk", 4, "t", (IndexEntry("e", vec, "c1"),))
    with pytest.raises(IntegrityError, match="atom_id"):
        VectorIndex("atom", 3, "t", (IndexEntry("e", vec, "c1"),))
    with pytest.raises(IntegrityError, match="provenance"):
        VectorIndex("question", 3, "t", (IndexEntry("e", vec, "c1", atom_id="a"),))


def test_build_index_wires_provenance():
    def rec(item_id, kind):
        return EmbeddingRecord(item_id, kind, np.ones(2, dtype=np.float32), 1, "t")

    chunk_idx = build_index("chunk", [rec("c1", "chunk"), rec("c2", "chunk")])
    assert [e.chunk_id for e in chunk_idx.entries] == ["c1", "c2"]

    atom_idx = build_index("atom", [rec("a1", "atom")], chunk_by_atom={"a1": "c9"})
    assert atom_idx.entries[0].chunk_id == "c9"
    assert atom_idx.entries[0].atom_id == "a1"

    q_idx = build_index("question", [rec("q1", "question")], atom_by_question={"q1": ("a1", "c9")})
    assert q_idx.entries[0].atom_id == "a1"
    assert q_idx.entries[0].chunk_id == "c9"
    assert q_idx.entries[0].question_id == "q1"


def test_build_index_rejects_bad_input():
    vec = np.ones(2, dtype=np.float32)
    with pytest.raises(IntegrityError, match="zero records"):
        build_index("chunk", [])
    with pytest.raises(IntegrityError, match="mixed"):
        build_index(
            "chunk",
            [
                EmbeddingRecord("c1", "chunk", vec, 1, "t1"),
                EmbeddingRecord("c2", "chunk", vec, 1, "t2"),
            ],
        )
    with pytest.raises(IntegrityError, match="kind"):
        build_index("chunk", [EmbeddingRecord("a1", "atom", vec, 1, "t")])
    with pytest.raises(IntegrityError, match="mapping"):
        build_index("atom", [EmbeddingRecord("a1", "atom", vec, 1, "t")])
    with pytest.raises(ValueError, match="granularity"):
        build_index("sentence", [EmbeddingRecord("c1", "chunk", vec, 1, "t")])


# ------------------------------------------------------------------ search


def test_search_exact_match_ranks_first():
    basis = np.eye(3, dtype=np.float32)
    entries = tuple(
        IndexEntry(f"e{i}", basis[i], f"c{i + 1}", atom_id=f"e{i}") for i in range(3)
    )
    index = VectorIndex("atom", 3, "t", entries)
    run = search(index, basis[1], 3, query_id="q")
    assert run.query_id == "q"
    assert run.ranked[0] == ("c2", 0.0)
    # the two orthogonal chunks tie at 1.0 and break by entry id
    assert [cid for cid, _ in run.ranked] == ["c2", "c1", "c3"]
    assert [d for _, d in run.ranked] == [0.0, 1.0, 1.0]


def test_search_matches_pure_python_oracle():
    for seed in range(20):
        index = random_atom_index(seed)
        rng = random.Random(1000 + seed)
        query = [rng.randrange(-4, 5) for _ in range(index.dim)]
        if not any(query):
            query[0] = 1
        for k in (1, 3, 7, 50):
            expected = brute_force_search(index.entries, query, k)
            got = search(index, np.asarray(query, dtype=np.float64), k)
            assert list(got.ranked) == expected


def test_search_tie_breaks_by_entry_id():
    vec = np.array([1.0, 1.0], dtype=np.float32)
    entries = (
        IndexEntry("b", vec.copy(), "cB", atom_id="b"),
        IndexEntry("a", vec.copy(), "cA", atom_id="a"),
    )
    index = VectorIndex("atom", 2, "t", entries)
    run = search(index, vec, 2)
    assert [cid for cid, _ in run.ranked] == ["cA", "cB"]


def test_search_dedups_chunks():
    vecs = [[1.0, float(i)] for i in range(6)]
    entries = tuple(
        IndexEntry(f"e{i}", np.asarray(v, dtype=np.float32), f"c{i % 2}", atom_id=f"e{i}")
        for i, v in enumerate(vecs)
    )
    index = VectorIndex("atom", 2, "t", entries)
    run = search(index, np.array([1.0, 0.0]), 5)
    assert len(run.ranked) == 2  # only two distinct chunks exist
    assert {cid for cid, _ in run.ranked} == {"c0", "c1"}


def test_search_input_errors():
    index = random_atom_index(0)
    with pytest.raises(ValueError, match="k must be"):
        search(index, np.ones(index.dim), 0)
    with pytest.raises(ValueError, match="shape"):
        search(index, np.ones(index.dim + 1), 1)
    with pytest.raises(ValueError, match="zero norm"):
        search(index, np.zeros(index.dim), 1)
    empty = VectorIndex("chunk", 4, "t", ())
    with pytest.raises(IntegrityError, match="empty"):
        search(empty, np.ones(4), 1)


def test_search_rejects_zero_norm_entries():
    entries = (
        IndexEntry("e0", np.ones(2, dtype=np.float32), "c0", atom_id="e0"),
        IndexEntry("e1", np.zeros(2, dtype=np.float32), "c1", atom_id="e1"),
    )
    index = VectorIndex("atom", 2, "t", entries)
    with pytest.raises(IntegrityError, match="e1"):
        search(index, np.ones(2), 1)


def test_retrieve_run_per_query_and_rewrites():
    index = random_atom_index(2)
    queries = [Query("q1", "one", "c00"), Query("q2", "two", "c01")]
    embeds = {
        "q1": np.ones(index.dim, dtype=np.float64),
        "q2": np.arange(1, index.dim + 1, dtype=np.float64),
    }
    runs = retrieve_run(index, queries, embeds, 3)
    assert [r.query_id for r in runs] == ["q1", "q2"]

    same = retrieve_run(index, queries, embeds, 3, use_rewrite=True, rewrite_embeddings=embeds)
    for a, b in zip(runs, same):
        assert a.ranked == b.ranked

    with pytest.raises(IntegrityError, match="rewrite"):
        retrieve_run(index, queries, embeds, 3, use_rewrite=True)
    with pytest.raises(IntegrityError, match="q2"):
        retrieve_run(index, queries, {"q1": embeds["q1"]}, 3)


# ----------------------------------------------------------------- pruning


def test_prune_config_clamps_tau():
    assert PruneConfig(-1.0).tau == 0.0
    assert PruneConfig(5.0).tau == 2.0
    assert PruneConfig(0.3).tau == 0.3


def test_prune_known_geometry():
    """Vectors built by Cholesky so pairwise similarities are exactly the
    Gram entries: d(q0,q1)=0.1, d(q0,q2)=0.8, d(q1,q2)=0.9."""
    gram = np.array([[1.0, 0.9, 0.2], [0.9, 1.0, 0.1], [0.2, 0.1, 1.0]])
    rows = np.linalg.cholesky(gram)
    index = question_index({"c0": [rows[0], rows[1], rows[2]]}, dim=3)

    pruned = prune_questions(index, PruneConfig(0.5))
    assert [e.question_id for e in pruned.entries] == ["c0-a000-q00", "c0-a000-q02"]
    survivors = [e.vector for e in pruned.entries]
    assert cosine_distance(survivors[0], survivors[1]) >= 0.5

    harsher = prune_questions(index, PruneConfig(0.95))
    assert [e.question_id for e in harsher.entries] == ["c0-a000-q00"]


def test_prune_tau_zero_keeps_everything():
    index = question_index({"c0": [[1.0, 0.0], [1.0, 0.001]]}, dim=2)
    out = prune_questions(index, PruneConfig(0.0))
    assert out.entries == index.entries


def test_prune_tau_two_keeps_one_per_chunk():
    rng = np.random.default_rng(8)
    vecs = {f"c{i}": [rng.normal(size=4) for _ in range(5)] for i in range(3)}
    index = question_index(vecs, dim=4)
    out = prune_questions(index, PruneConfig(2.0))
    per_chunk = {}
    for e in out.entries:
        per_chunk[e.chunk_id] = per_chunk.get(e.chunk_id, 0) + 1
    assert per_chunk == {"c0": 1, "c1": 1, "c2": 1}
    # the earliest question of the earliest atom survives
    assert all(e.question_id.endswith("q00") for e in out.entries)


def test_prune_victim_is_larger_provenance_key():
    vec = np.array([1.0, 0.0], dtype=np.float32)
    entries = (
        IndexEntry("x", vec.copy(), "c0", atom_id="c0-a001", question_id="c0-a001-q00"),
        IndexEntry("y", vec.copy(), "c0", atom_id="c0-a000", question_id="c0-a000-q07"),
    )
    index = VectorIndex("question", 2, "t", entries)
    out = prune_questions(index, PruneConfig(0.5))
    assert [e.entry_id for e in out.entries] == ["y"]


def test_prune_contract_on_random_indices():
    for seed in range(8):
        rng = np.random.default_rng(seed)
        vecs = {f"c{i}": [rng.normal(size=6) for _ in range(rng.integers(1, 9))] for i in range(5)}
        index = question_index(vecs, dim=6)
        for tau in (0.1, 0.4, 0.8, 1.2):
            out = prune_questions(index, PruneConfig(tau))
            again = prune_questions(index, PruneConfig(tau))
            assert [e.entry_id for e in out.entries] == [e.entry_id for e in again.entries]
            assert out.chunk_ids == index.chunk_ids  # every chunk keeps >= 1
            groups = {}
            for e in out.entries:
                groups.setdefault(e.chunk_id, []).append(e.vector)
            for group in groups.values():
                for i in range(len(group)):
                    for j in range(i + 1, len(group)):
                        assert cosine_distance(group[i], group[j]) >= tau - 1e-9
            # survivors keep their original relative order
            kept = [e.entry_id for e in out.entries]
            original = [e.entry_id for e in index.entries if e.entry_id in set(kept)]
            assert kept == original


def test_prune_rejects_non_question_index():
    index = random_atom_index(1)
    with pytest.raises(ValueError, match="question"):
        prune_questions(index, PruneConfig(0.5))


def test_sweep_tau_counts_non_increasing():
    rng = np.random.default_rng(11)
    vecs = {f"c{i}": [rng.normal(size=5) for _ in range(6)] for i in range(4)}
    index = question_index(vecs, dim=5)
    swept = sweep_tau(index, [0.1, 0.5, 0.9, 1.3])
    counts = [len(sub) for _, sub in swept]
    assert all(b <= a for a, b in zip(counts, counts[1:]))
    assert counts[0] <= len(index)
    with pytest.raises(ValueError, match="ascending"):
        sweep_tau(index, [0.5, 0.5])
    with pytest.raises(ValueError, match="non-empty"):
        sweep_tau(index, [])


# ---------------------------------------------------------------- sampling


def test_sample_fraction_one_is_identity():
    rng = np.random.default_rng(4)
    vecs = {f"c{i}": [rng.normal(size=3) for _ in range(4)] for i in range(3)}
    index = question_index(vecs, dim=3)
    out = sample_questions(index, 1.0, seed=9)
    assert [e.entry_id for e in out.entries] == [e.entry_id for e in index.entries]


def test_sample_counts_round_half_up_with_floor_one():
    rng = np.random.default_rng(5)
    index = question_index({"c0": [rng.normal(size=3) for _ in range(10)]}, dim=3)
    assert len(sample_questions(index, 0.5, seed=1)) == 5
    assert len(sample_questions(index, 0.25, seed=1)) == 3  # 2.5 rounds up
    assert len(sample_questions(index, 0.01, seed=1)) == 1  # never empties a chunk


def test_sample_is_seed_deterministic():
    rng = np.random.default_rng(6)
    index = question_index({"c0": [rng.normal(size=3) for _ in range(30)]}, dim=3)
    a = [e.entry_id for e in sample_questions(index, 0.5, seed=42).entries]
    b = [e.entry_id for e in sample_questions(index, 0.5, seed=42).entries]
    c = [e.entry_id for e in sample_questions(index, 0.5, seed=43).entries]
    assert a == b
    assert a != c


def test_sample_input_errors():
    index = question_index({"c0": [[1.0, 0.0]]}, dim=2)
    with pytest.raises(ValueError, match="fraction"):
        sample_questions(index, 0.0, seed=1)
    with pytest.raises(ValueError, match="fraction"):
        sample_questions(index, 1.5, seed=1)
    with pytest.raises(ValueError, match="question"):
        sample_questions(random_atom_index(3), 0.5, seed=1)


# ------------------------------------------------------------- persistence


def test_save_load_roundtrip(tmp_path):
    emb = LocalHashEmbedder(dim=8)
    records = embed_batch(
        [(f"c0-a000-q{i:02d}", "question", f"question number {i} asks something") for i in range(5)],
        emb,
    )
    index = build_index(
        "question", records,
        atom_by_question={r.item_id: ("c0-a000", "c0") for r in records},
    )
    save_index(index, tmp_path / "qidx")

    manifest = json.loads((tmp_path / "qidx" / "manifest.json").read_text(encoding="utf-8"))
    assert manifest == {
        "granularity": "question",
        "dim": 8,
        "embedder_tag": emb.tag,
        "count": 5,
    }

    loaded = load_index(tmp_path / "qidx")
    assert loaded.granularity == index.granularity
    assert loaded.dim == index.dim
    assert loaded.embedder_tag == index.embedder_tag
    for a, b in zip(index.entries, loaded.entries):
        assert a.entry_id == b.entry_id
        assert a.chunk_id == b.chunk_id
        assert a.atom_id == b.atom_id
        assert a.question_id == b.question_id
        assert a.content_hash == b.content_hash
        assert np.array_equal(a.vector, b.vector)


def test_load_rejects_count_mismatch(tmp_path):
    index = question_index({"c0": [[1.0, 0.0], [0.0, 1.0]]}, dim=2)
    save_index(index, tmp_path / "idx")
    vectors_path = tmp_path / "idx" / "embeddings.jsonl"
    lines = vectors_path.read_text(encoding="utf-8").splitlines()
    vectors_path.write_text(lines[0] + "\n", encoding="utf-8")
    with pytest.raises(IntegrityError, match="promises 2"):
        load_index(tmp_path / "idx")


def test_load_rejects_corrupt_manifest(tmp_path):
    index = question_index({"c0": [[1.0, 0.0]]}, dim=2)
    save_index(index, tmp_path / "idx")
    (tmp_path / "idx" / "manifest.json").write_text("{not json", encoding="utf-8")
    with pytest.raises(ParseError, match="manifest.json"):
        load_index(tmp_path / "idx")
