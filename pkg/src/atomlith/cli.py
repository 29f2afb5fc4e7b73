"""Command-line entry points.

Exit codes: 0 success, 2 configuration or input error, 3 stage or transport
failure, 4 validation findings.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .atomize import atomize_corpus, read_atoms, write_atoms
from .corpus import (
    corpus_stats,
    count_squad_contexts,
    ingest_jsonl,
    ingest_squad,
    read_chunks,
    read_queries,
    write_corpus,
    write_queries,
)
from .embedding import (
    E5_PREFIXES,
    EmbeddingCache,
    LocalHashEmbedder,
    RemoteEmbedder,
    RemoteEmbedderConfig,
    embed_batch,
    read_records,
    write_records,
)
from .errors import (
    ConfigError,
    GenerationError,
    IntegrityError,
    ParseError,
    ProtocolError,
    StageFailure,
    TransportError,
)
from .evaluation import efficiency_sweep, run_comparison
from .genclient import ClientConfig, HttpGenerationClient, StubGenerationClient
from .index import (
    PruneConfig,
    build_index,
    load_index,
    prune_questions,
    retrieve_run,
    sample_questions,
    save_index,
)
from .pipeline import load_pipeline_config, run_pipeline, validate_store
from .questions import generate_corpus_questions, read_questions, rewrite_queries, write_questions

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3
EXIT_FINDINGS = 4


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part.strip()]


def _float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def _make_generator(args: argparse.Namespace):
    if args.generator == "stub":
        return StubGenerationClient()
    if not args.endpoint_url or not args.model:
        raise ConfigError("--generator http requires --endpoint-url and --model")
    return HttpGenerationClient(
        ClientConfig(
            endpoint_url=args.endpoint_url,
            model_name=args.model,
            api_key_env=args.api_key_env,
            timeout=args.timeout,
            max_retries=args.max_retries,
            max_in_flight=args.max_in_flight,
        )
    )


def _add_generator_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--generator", choices=("stub", "http"), default="stub")
    parser.add_argument("--endpoint-url", default="")
    parser.add_argument("--model", default="")
    parser.add_argument("--api-key-env", default="ATOMLITH_API_KEY")
    parser.add_argument("--timeout", type=float, default=60.0)
    parser.add_argument("--max-retries", type=int, default=3)
    parser.add_argument("--max-in-flight", type=int, default=4)
    parser.add_argument("--max-workers", type=int, default=1)


def _make_embedder(args: argparse.Namespace):
    if args.embedder == "local":
        return LocalHashEmbedder(dim=args.dim)
    if not args.endpoint_url or not args.model:
        raise ConfigError("--embedder remote requires --endpoint-url and --model")
    prefixes = E5_PREFIXES if args.prefix_style == "e5" else None
    return RemoteEmbedder(
        RemoteEmbedderConfig(
            endpoint_url=args.endpoint_url,
            model_name=args.model,
            dim=args.dim,
            api_key_env=args.api_key_env,
            kind_prefixes=prefixes,
        )
    )


def cmd_ingest_squad(args: argparse.Namespace) -> int:
    document = json.loads(Path(args.json).read_text(encoding="utf-8"))
    raw, distinct = count_squad_contexts(document)
    corpus = ingest_squad(document, seed=args.seed)
    out = Path(args.out)
    write_corpus(corpus, out / "chunks.jsonl", out / "queries.jsonl")
    print(f"contexts: {raw} raw, {distinct} distinct after dedup")
    print(f"chunks: {len(corpus.chunks)}")
    print(f"queries: {len(corpus.queries)}")
    if args.stats:
        for name, value in corpus_stats(corpus).items():
            if isinstance(value, tuple):
                print(f"{name}: mean={value[0]:.1f} std={value[1]:.1f}")
            else:
                print(f"{name}: {value}")
    return EXIT_OK


def cmd_ingest_jsonl(args: argparse.Namespace) -> int:
    corpus = ingest_jsonl(args.chunks, args.queries)
    out = Path(args.out)
    write_corpus(corpus, out / "chunks.jsonl", out / "queries.jsonl")
    print(f"chunks: {len(corpus.chunks)}")
    print(f"queries: {len(corpus.queries)}")
    return EXIT_OK


def cmd_atomize(args: argparse.Namespace) -> int:
    chunks = read_chunks(args.chunks)
    generator = _make_generator(args) if args.mode == "llm" else None
    atoms = atomize_corpus(
        chunks,
        mode="unstructured" if args.mode == "llm" else "structured",
        generator=generator,
        max_atoms=args.max_atoms,
        max_workers=args.max_workers,
    )
    write_atoms(args.out, atoms)
    print(f"atoms: {len(atoms)} from {len(chunks)} chunks")
    return EXIT_OK


def cmd_genq(args: argparse.Namespace) -> int:
    atoms = read_atoms(args.atoms)
    chunks = {c.chunk_id: c for c in read_chunks(args.chunks)}
    generator = _make_generator(args)
    questions = generate_corpus_questions(
        atoms,
        chunks,
        generator,
        budget=args.budget,
        temperature=args.temperature,
        max_workers=args.max_workers,
    )
    write_questions(args.out, questions)
    print(f"questions: {len(questions)} from {len(atoms)} atoms (budget {args.budget})")
    return EXIT_OK


def cmd_rewrite_hyde(args: argparse.Namespace) -> int:
    queries = read_queries(args.queries)
    generator = _make_generator(args)
    rewritten = rewrite_queries(queries, generator, max_workers=args.max_workers)
    write_queries(rewritten, args.out)
    print(f"rewrites: {len(rewritten)}")
    return EXIT_OK


def cmd_embed(args: argparse.Namespace) -> int:
    target = args.target
    if target == "chunks":
        items = [(c.chunk_id, "chunk", c.text) for c in read_chunks(args.input_path)]
    elif target == "atoms":
        items = [(a.atom_id, "atom", a.text) for a in read_atoms(args.input_path)]
    elif target == "questions":
        items = [(q.question_id, "question", q.text) for q in read_questions(args.input_path)]
    elif target == "queries":
        items = [(q.query_id, "query", q.text) for q in read_queries(args.input_path)]
    else:
        queries = read_queries(args.input_path)
        items = [(q.query_id, "rewrite", q.rewrite) for q in queries if q.rewrite]
        if len(items) < len(queries):
            logger.warning("%d queries lack rewrites and were skipped", len(queries) - len(items))
    embedder = _make_embedder(args)
    cache = EmbeddingCache(args.cache) if args.cache else None
    records = embed_batch(items, embedder, cache)
    write_records(args.out, records)
    print(f"embedded: {len(records)} {target} ({embedder.tag})")
    return EXIT_OK


def cmd_build_index(args: argparse.Namespace) -> int:
    records = read_records(args.embeddings)
    chunk_by_atom = None
    atom_by_question = None
    if args.granularity == "atom":
        if not args.atoms:
            raise ConfigError("--granularity atom requires --atoms")
        chunk_by_atom = {a.atom_id: a.chunk_id for a in read_atoms(args.atoms)}
    elif args.granularity == "question":
        if not args.questions:
            raise ConfigError("--granularity question requires --questions")
        atom_by_question = {
            q.question_id: (q.atom_id, q.chunk_id) for q in read_questions(args.questions)
        }
    index = build_index(
        args.granularity, records, chunk_by_atom=chunk_by_atom, atom_by_question=atom_by_question
    )
    save_index(index, args.out)
    print(f"index: {len(index)} {args.granularity} entries -> {args.out}")
    return EXIT_OK


def cmd_retrieve(args: argparse.Namespace) -> int:
    index = load_index(args.index)
    queries = read_queries(args.queries)
    query_embeddings = {r.item_id: r.vector for r in read_records(args.query_embeddings)}
    rewrite_embeddings = None
    if args.rewrite_embeddings:
        rewrite_embeddings = {r.item_id: r.vector for r in read_records(args.rewrite_embeddings)}
    runs = retrieve_run(
        index,
        queries,
        query_embeddings,
        args.k,
        use_rewrite=args.use_rewrite,
        rewrite_embeddings=rewrite_embeddings,
    )
    lines = [
        json.dumps(
            {
                "query_id": run.query_id,
                "ranked": [{"chunk_id": cid, "distance": dist} for cid, dist in run.ranked],
            },
            ensure_ascii=False,
        )
        for run in runs
    ]
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        for line in lines:
            print(line)
    return EXIT_OK


def cmd_prune(args: argparse.Namespace) -> int:
    index = load_index(args.index)
    pruned = prune_questions(index, PruneConfig(tau=args.tau))
    save_index(pruned, args.out)
    print(f"pruned: kept {len(pruned)} of {len(index)} questions at tau={args.tau:g}")
    return EXIT_OK


def cmd_sample(args: argparse.Namespace) -> int:
    index = load_index(args.index)
    sampled = sample_questions(index, args.fraction, args.seed)
    save_index(sampled, args.out)
    print(f"sampled: kept {len(sampled)} of {len(index)} questions at fraction={args.fraction:g}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    store = Path(args.store)
    corpus = ingest_jsonl(store / "corpus" / "chunks.jsonl", store / "corpus" / "queries.jsonl")
    labels = args.index or ["chunk", "atom", "question"]
    indices = {label: load_index(store / "indices" / label) for label in labels}
    query_embeddings = {
        r.item_id: r.vector for r in read_records(store / "embeddings" / "queries.jsonl")
    }
    variants = ["text"]
    rewrite_embeddings = None
    if args.hyde:
        rewrite_embeddings = {
            r.item_id: r.vector for r in read_records(store / "embeddings" / "rewrites.jsonl")
        }
        variants.append("hyde")
    reports = run_comparison(
        corpus,
        indices,
        query_embeddings,
        ks=args.ks,
        ndcg_ks=args.ndcg_ks,
        variants=variants,
        rewrite_embeddings=rewrite_embeddings,
        csv_path=args.out or None,
        dataset=args.dataset,
    )
    for report in reports:
        parts = [f"R@{k}={v:.3f}" for k, v in report.r_at.items()]
        parts += [f"nDCG@{k}={v:.3f}" for k, v in report.ndcg_at.items()]
        print(f"{report.label}/{report.query_variant}: {' '.join(parts)}")
    return EXIT_OK


def cmd_eval_sweep(args: argparse.Namespace) -> int:
    store = Path(args.store)
    corpus = ingest_jsonl(store / "corpus" / "chunks.jsonl", store / "corpus" / "queries.jsonl")
    index = load_index(store / "indices" / args.index)
    query_embeddings = {
        r.item_id: r.vector for r in read_records(store / "embeddings" / "queries.jsonl")
    }
    curves = efficiency_sweep(
        index,
        corpus,
        query_embeddings,
        fractions=args.fractions,
        seeds=args.seeds,
        tau_values=args.taus,
        ks=args.ks,
        csv_path=args.out or None,
    )
    for curve in curves:
        print(f"{curve.strategy}/{curve.metric}: nAUC={curve.nauc:.4f} over {len(curve.points)} points")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    config = load_pipeline_config(args.config)
    out = run_pipeline(config)
    print(f"pipeline complete: {out}")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    report = validate_store(args.store, question_budget=args.budget)
    for name, value in sorted(report.counts.items()):
        print(f"{name}: {value}")
    if report.ok:
        print("store is consistent")
        return EXIT_OK
    for f in report.findings:
        print(f"[{f.kind}] {f.message}")
    print(f"{len(report.findings)} finding(s)")
    return EXIT_FINDINGS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atomlith", description=__doc__)
    parser.add_argument("--version", action="version", version=f"atomlith {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest-squad", help="restructure a reading-comprehension JSON corpus")
    p.add_argument("--json", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--stats", action="store_true", help="print corpus statistics")
    p.set_defaults(fn=cmd_ingest_squad)

    p = sub.add_parser("ingest-jsonl", help="load chunks.jsonl + queries.jsonl")
    p.add_argument("--chunks", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ingest_jsonl)

    p = sub.add_parser("atomize", help="split chunks into atoms")
    p.add_argument("--chunks", required=True)
    p.add_argument("--mode", choices=("structured", "llm"), default="structured")
    p.add_argument("--max-atoms", type=int, default=50)
    p.add_argument("--out", required=True)
    _add_generator_args(p)
    p.set_defaults(fn=cmd_atomize)

    p = sub.add_parser("genq", help="generate synthetic questions per atom")
    p.add_argument("--atoms", required=True)
    p.add_argument("--chunks", required=True)
    p.add_argument("--budget", type=int, default=15)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--out", required=True)
    _add_generator_args(p)
    p.set_defaults(fn=cmd_genq)

    p = sub.add_parser("rewrite-hyde", help="rewrite queries into answer form")
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    _add_generator_args(p)
    p.set_defaults(fn=cmd_rewrite_hyde)

    p = sub.add_parser("embed", help="embed a corpus artifact")
    p.add_argument("--target", choices=("chunks", "atoms", "questions", "queries", "rewrites"), required=True)
    p.add_argument("--in", dest="input_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cache", default="")
    p.add_argument("--embedder", choices=("local", "remote"), default="local")
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--endpoint-url", default="")
    p.add_argument("--model", default="")
    p.add_argument("--api-key-env", default="ATOMLITH_API_KEY")
    p.add_argument("--prefix-style", choices=("none", "e5"), default="none")
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("build-index", help="assemble a searchable index from embeddings")
    p.add_argument("--granularity", choices=("chunk", "atom", "question"), required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--atoms", default="")
    p.add_argument("--questions", default="")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_build_index)

    p = sub.add_parser("retrieve", help="run top-k retrieval for every query")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--query-embeddings", required=True)
    p.add_argument("--rewrite-embeddings", default="")
    p.add_argument("--use-rewrite", action="store_true")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--out", default="")
    p.set_defaults(fn=cmd_retrieve)

    p = sub.add_parser("prune", help="drop near-duplicate questions per chunk")
    p.add_argument("--index", required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_prune)

    p = sub.add_parser("sample", help="keep a random fraction of questions per chunk")
    p.add_argument("--index", required=True)
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("eval", help="score indices against gold labels")
    p.add_argument("--store", required=True)
    p.add_argument("--index", action="append", default=None, metavar="LABEL")
    p.add_argument("--ks", type=_int_list, default=[1, 2, 5])
    p.add_argument("--ndcg-ks", type=_int_list, default=[])
    p.add_argument("--hyde", action="store_true")
    p.add_argument("--dataset", default="corpus")
    p.add_argument("--out", default="")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("eval-sweep", help="recall vs retained-question fraction")
    p.add_argument("--store", required=True)
    p.add_argument("--index", default="question")
    p.add_argument("--fractions", type=_float_list, default=[0.1, 0.25, 0.5, 0.75, 1.0])
    p.add_argument("--seeds", type=_int_list, default=[1, 2, 3])
    p.add_argument("--taus", type=_float_list, default=[0.05, 0.1, 0.2, 0.35, 0.5, 0.8])
    p.add_argument("--ks", type=_int_list, default=[1])
    p.add_argument("--out", default="")
    p.set_defaults(fn=cmd_eval_sweep)

    p = sub.add_parser("run", help="run the full pipeline from a TOML config")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("validate", help="check a store for integrity findings")
    p.add_argument("--store", required=True)
    p.add_argument("--budget", type=int, default=None)
    p.set_defaults(fn=cmd_validate)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.fn(args)
    except (ConfigError, ParseError, IntegrityError, ValueError) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        logger.error("file not found: %s", exc.filename or exc)
        return EXIT_CONFIG
    except StageFailure as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG if isinstance(exc.cause, ConfigError) else EXIT_STAGE
    except (TransportError, ProtocolError, GenerationError) as exc:
        logger.error("%s", exc)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
