"""End-to-end experiment pipeline driven by a TOML config.

Eight stages run in order: ingest, atomize, genq, rewrite, embed, index,
prune, eval. Every stage writes its artifacts under the output directory and
records a fingerprint (config slice plus input-file hashes) in
manifest.json; a re-run skips stages whose fingerprint is unchanged and
whose outputs still exist. Stage outputs are deterministic byte-for-byte
under the offline stub generator and local embedder, so only the manifest
(which carries wall-clock timings) differs between identical runs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .atomize import atomize_corpus, read_atoms, write_atoms
from .corpus import count_squad_contexts, ingest_jsonl, ingest_squad, write_corpus, write_queries
from .embedding import (
    E5_PREFIXES,
    EmbeddingCache,
    Embedder,
    LocalHashEmbedder,
    RemoteEmbedder,
    RemoteEmbedderConfig,
    embed_batch,
    read_records,
    write_records,
)
from .errors import ConfigError, ParseError, StageFailure
from .genclient import ClientConfig, GenerationClient, HttpGenerationClient, StubGenerationClient
from .evaluation import run_comparison
from .index import build_index, load_index, save_index, sweep_tau
from .jsonl import read_jsonl
from .questions import (
    DEFAULT_QUESTION_BUDGET,
    generate_corpus_questions,
    read_questions,
    rewrite_queries,
    write_questions,
)
from .text import normalize_ws

logger = logging.getLogger(__name__)

STAGES = ("ingest", "atomize", "genq", "rewrite", "embed", "index", "prune", "eval")

_ENV_REF = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def _interpolate(value: Any) -> Any:
    if isinstance(value, str):
        def sub(match: re.Match[str]) -> str:
            name = match.group(1)
            if name not in os.environ:
                raise ConfigError(f"config references undefined environment variable {name!r}")
            return os.environ[name]

        return _ENV_REF.sub(sub, value)
    if isinstance(value, dict):
        return {k: _interpolate(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_interpolate(v) for v in value]
    return value


@dataclass(frozen=True)
class PipelineConfig:
    """Resolved pipeline configuration plus the directory it was loaded from."""

    raw: Mapping[str, Any]
    base_dir: Path

    @property
    def out_dir(self) -> Path:
        return self._path(self.raw["output"]["dir"])

    def _path(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else self.base_dir / path

    def section(self, name: str) -> dict[str, Any]:
        return dict(self.raw.get(name, {}))

    def config_hash(self) -> str:
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _require(section: Mapping[str, Any], key: str, kind: type, where: str) -> Any:
    if key not in section:
        raise ConfigError(f"config section [{where}] is missing {key!r}")
    value = section[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"config [{where}].{key} must be {kind.__name__}")
    return value


def load_pipeline_config(path: str | Path) -> PipelineConfig:
    """Parse and validate a TOML pipeline config.

    ``${VAR}`` references in string values are replaced from the
    environment (undefined variables are a config error). Relative paths
    are resolved against the config file's directory.
    """
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    raw = _interpolate(raw)
    config = PipelineConfig(raw=raw, base_dir=path.parent.resolve())
    _validate_config(config)
    return config


def _validate_config(config: PipelineConfig) -> None:
    raw = config.raw
    corpus = raw.get("corpus")
    if not isinstance(corpus, dict):
        raise ConfigError("config needs a [corpus] section")
    has_squad = "squad_json" in corpus
    has_jsonl = "chunks" in corpus and "queries" in corpus
    if has_squad == has_jsonl:
        raise ConfigError("[corpus] needs either squad_json or both chunks and queries")
    output = raw.get("output")
    if not isinstance(output, dict) or not isinstance(output.get("dir"), str):
        raise ConfigError("config needs [output].dir")

    atomize = config.section("atomize")
    mode = atomize.get("mode", "structured")
    if mode not in ("structured", "llm"):
        raise ConfigError(f"[atomize].mode must be 'structured' or 'llm', got {mode!r}")
    if int(atomize.get("max_atoms", 50)) < 1:
        raise ConfigError("[atomize].max_atoms must be >= 1")

    questions = config.section("questions")
    if int(questions.get("budget", DEFAULT_QUESTION_BUDGET)) < 1:
        raise ConfigError("[questions].budget must be >= 1")

    generation = config.section("generation")
    gen_kind = generation.get("kind", "stub")
    if gen_kind not in ("stub", "http"):
        raise ConfigError(f"[generation].kind must be 'stub' or 'http', got {gen_kind!r}")
    if gen_kind == "http":
        _require(generation, "endpoint_url", str, "generation")
        _require(generation, "model_name", str, "generation")

    embedding = config.section("embedding")
    emb_kind = embedding.get("kind", "local")
    if emb_kind not in ("local", "remote"):
        raise ConfigError(f"[embedding].kind must be 'local' or 'remote', got {emb_kind!r}")
    if int(embedding.get("dim", 256)) < 1:
        raise ConfigError("[embedding].dim must be >= 1")
    if emb_kind == "remote":
        _require(embedding, "endpoint_url", str, "embedding")
        _require(embedding, "model_name", str, "embedding")
    if embedding.get("prefix_style", "none") not in ("none", "e5"):
        raise ConfigError("[embedding].prefix_style must be 'none' or 'e5'")

    prune = config.section("prune")
    taus = prune.get("taus", [0.2, 0.35, 0.5])
    if not isinstance(taus, list) or not taus:
        raise ConfigError("[prune].taus must be a non-empty list")
    if any(not isinstance(t, (int, float)) or isinstance(t, bool) for t in taus):
        raise ConfigError("[prune].taus must be numbers")
    if any(float(b) <= float(a) for a, b in zip(taus, taus[1:])):
        raise ConfigError("[prune].taus must be strictly ascending")

    eval_cfg = config.section("eval")
    ks = eval_cfg.get("ks", [1, 2, 5])
    if not isinstance(ks, list) or not ks or any(not isinstance(k, int) or k < 1 for k in ks):
        raise ConfigError("[eval].ks must be a non-empty list of positive integers")


def _file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _fingerprint(config_slice: Mapping[str, Any], input_paths: Sequence[Path]) -> str:
    inputs = {}
    for p in input_paths:
        inputs[p.name] = _file_sha256(p) if p.exists() else "missing"
    blob = json.dumps({"config": config_slice, "inputs": inputs}, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _make_generator(config: PipelineConfig) -> GenerationClient:
    section = config.section("generation")
    if section.get("kind", "stub") == "stub":
        return StubGenerationClient()
    return HttpGenerationClient(
        ClientConfig(
            endpoint_url=section["endpoint_url"],
            model_name=section["model_name"],
            api_key_env=section.get("api_key_env", "ATOMLITH_API_KEY"),
            timeout=float(section.get("timeout", 60.0)),
            max_retries=int(section.get("max_retries", 3)),
            backoff_base=float(section.get("backoff_base", 0.5)),
            max_in_flight=int(section.get("max_in_flight", 4)),
        )
    )


def _make_embedder(config: PipelineConfig) -> Embedder:
    section = config.section("embedding")
    if section.get("kind", "local") == "local":
        return LocalHashEmbedder(dim=int(section.get("dim", 256)))
    prefixes = E5_PREFIXES if section.get("prefix_style", "none") == "e5" else None
    return RemoteEmbedder(
        RemoteEmbedderConfig(
            endpoint_url=section["endpoint_url"],
            model_name=section["model_name"],
            dim=int(section.get("dim", 256)),
            api_key_env=section.get("api_key_env", "ATOMLITH_API_KEY"),
            timeout=float(section.get("timeout", 60.0)),
            max_retries=int(section.get("max_retries", 3)),
            backoff_base=float(section.get("backoff_base", 0.5)),
            batch_size=int(section.get("batch_size", 64)),
            kind_prefixes=prefixes,
        )
    )


class Pipeline:
    """Executes the stage graph for one config, tracking a manifest."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.out = config.out_dir
        self.manifest_path = self.out / "manifest.json"
        self.manifest: dict[str, Any] = {
            "tool": "atomlith",
            "version": __version__,
            "config_hash": config.config_hash(),
            "config": dict(config.raw),
            "stages": {},
        }
        self._previous: dict[str, Any] = {}
        if self.manifest_path.exists():
            try:
                old = json.loads(self.manifest_path.read_text(encoding="utf-8"))
                if old.get("config_hash") == self.manifest["config_hash"]:
                    self._previous = old.get("stages", {})
            except (ValueError, OSError):
                logger.warning("ignoring unreadable manifest at %s", self.manifest_path)

    # Artifact paths -------------------------------------------------------

    @property
    def chunks_path(self) -> Path:
        return self.out / "corpus" / "chunks.jsonl"

    @property
    def queries_path(self) -> Path:
        return self.out / "corpus" / "queries.jsonl"

    @property
    def rewritten_path(self) -> Path:
        return self.out / "corpus" / "queries_rewritten.jsonl"

    @property
    def atoms_path(self) -> Path:
        return self.out / "atoms.jsonl"

    @property
    def questions_path(self) -> Path:
        return self.out / "questions.jsonl"

    def embeddings_path(self, name: str) -> Path:
        return self.out / "embeddings" / f"{name}.jsonl"

    def index_dir(self, label: str) -> Path:
        return self.out / "indices" / label

    @property
    def report_path(self) -> Path:
        return self.out / "eval" / "report.csv"

    @property
    def cache_path(self) -> Path:
        return self.out / "cache" / "embeddings.jsonl"

    # Stage plumbing -------------------------------------------------------

    def _hyde_enabled(self) -> bool:
        return bool(self.config.section("hyde").get("enabled", True))

    def _should_skip(self, stage: str, fingerprint: str, outputs: Sequence[Path]) -> bool:
        prev = self._previous.get(stage)
        if not prev or prev.get("status") != "ok" or prev.get("fingerprint") != fingerprint:
            return False
        return all(p.exists() for p in outputs)

    def _record(self, stage: str, status: str, fingerprint: str, outputs: Sequence[Path], seconds: float, error: str | None = None) -> None:
        entry: dict[str, Any] = {
            "status": status,
            "fingerprint": fingerprint,
            "outputs": [str(p.relative_to(self.out)) for p in outputs],
            "seconds": round(seconds, 6),
        }
        if error:
            entry["error"] = error
        self.manifest["stages"][stage] = entry

    def _write_manifest(self) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest_path.write_text(
            json.dumps(self.manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def run(self) -> Path:
        """Run all stages; raises StageFailure on the first failing stage."""
        plan = [
            ("ingest", self._stage_ingest),
            ("atomize", self._stage_atomize),
            ("genq", self._stage_genq),
            ("rewrite", self._stage_rewrite),
            ("embed", self._stage_embed),
            ("index", self._stage_index),
            ("prune", self._stage_prune),
            ("eval", self._stage_eval),
        ]
        self.out.mkdir(parents=True, exist_ok=True)
        for name, fn in plan:
            started = time.perf_counter()
            fingerprint, outputs = fn(dry=True)
            if self._should_skip(name, fingerprint, outputs):
                self._record(name, "skipped", fingerprint, outputs, time.perf_counter() - started)
                logger.info("stage %s: skipped (inputs unchanged)", name)
                continue
            try:
                fn(dry=False)
            except Exception as exc:
                self._record(name, "failed", fingerprint, outputs, time.perf_counter() - started, error=str(exc))
                self._write_manifest()
                raise StageFailure(name, exc) from exc
            self._record(name, "ok", fingerprint, outputs, time.perf_counter() - started)
            logger.info("stage %s: ok (%.2fs)", name, self.manifest["stages"][name]["seconds"])
        self._write_manifest()
        return self.out

    # Stages ---------------------------------------------------------------

    def _stage_ingest(self, dry: bool) -> tuple[str, list[Path]]:
        section = self.config.section("corpus")
        outputs = [self.chunks_path, self.queries_path]
        if "squad_json" in section:
            src = self.config._path(section["squad_json"])
            fingerprint = _fingerprint({"corpus": section}, [src])
            if dry:
                return fingerprint, outputs
            try:
                document = json.loads(src.read_text(encoding="utf-8"))
            except FileNotFoundError:
                raise ConfigError(f"corpus file not found: {src}") from None
            except json.JSONDecodeError as exc:
                raise ParseError(f"{src}: invalid JSON: {exc.msg}") from exc
            raw, distinct = count_squad_contexts(document)
            corpus = ingest_squad(document, seed=int(section.get("seed", 0)))
            logger.info(
                "ingested %d contexts (%d distinct after dedup), %d queries",
                raw, distinct, len(corpus.queries),
            )
        else:
            chunks_src = self.config._path(section["chunks"])
            queries_src = self.config._path(section["queries"])
            fingerprint = _fingerprint({"corpus": section}, [chunks_src, queries_src])
            if dry:
                return fingerprint, outputs
            if not chunks_src.exists() or not queries_src.exists():
                raise ConfigError(f"corpus files not found: {chunks_src}, {queries_src}")
            corpus = ingest_jsonl(chunks_src, queries_src)
        write_corpus(corpus, self.chunks_path, self.queries_path)
        return fingerprint, outputs

    def _stage_atomize(self, dry: bool) -> tuple[str, list[Path]]:
        section = self.config.section("atomize")
        mode = section.get("mode", "structured")
        slice_: dict[str, Any] = {"atomize": section}
        if mode == "llm":
            slice_["generation"] = self.config.section("generation")
        fingerprint = _fingerprint(slice_, [self.chunks_path])
        outputs = [self.atoms_path]
        if dry:
            return fingerprint, outputs
        corpus = ingest_jsonl(self.chunks_path, self.queries_path)
        generator = _make_generator(self.config) if mode == "llm" else None
        atoms = atomize_corpus(
            corpus.chunks,
            mode="unstructured" if mode == "llm" else "structured",
            generator=generator,
            max_atoms=int(section.get("max_atoms", 50)),
            max_workers=int(section.get("max_workers", 1)),
        )
        write_atoms(self.atoms_path, atoms)
        return fingerprint, outputs

    def _stage_genq(self, dry: bool) -> tuple[str, list[Path]]:
        section = self.config.section("questions")
        slice_ = {"questions": section, "generation": self.config.section("generation")}
        fingerprint = _fingerprint(slice_, [self.atoms_path, self.chunks_path])
        outputs = [self.questions_path]
        if dry:
            return fingerprint, outputs
        corpus = ingest_jsonl(self.chunks_path, self.queries_path)
        atoms = read_atoms(self.atoms_path)
        generator = _make_generator(self.config)
        questions = generate_corpus_questions(
            atoms,
            corpus.chunk_by_id,
            generator,
            budget=int(section.get("budget", DEFAULT_QUESTION_BUDGET)),
            temperature=float(section.get("temperature", 1.0)),
            max_workers=int(section.get("max_workers", 1)),
        )
        write_questions(self.questions_path, questions)
        return fingerprint, outputs

    def _stage_rewrite(self, dry: bool) -> tuple[str, list[Path]]:
        enabled = self._hyde_enabled()
        slice_ = {"hyde": {"enabled": enabled}}
        if enabled:
            slice_["generation"] = self.config.section("generation")
        fingerprint = _fingerprint(slice_, [self.queries_path])
        outputs = [self.rewritten_path]
        if dry:
            return fingerprint, outputs
        corpus = ingest_jsonl(self.chunks_path, self.queries_path)
        if enabled:
            generator = _make_generator(self.config)
            queries = rewrite_queries(
                list(corpus.queries),
                generator,
                max_workers=int(self.config.section("hyde").get("max_workers", 1)),
            )
        else:
            queries = list(corpus.queries)
        write_queries(queries, self.rewritten_path)
        return fingerprint, outputs

    def _stage_embed(self, dry: bool) -> tuple[str, list[Path]]:
        section = self.config.section("embedding")
        inputs = [self.chunks_path, self.atoms_path, self.questions_path, self.rewritten_path]
        fingerprint = _fingerprint({"embedding": section, "hyde": {"enabled": self._hyde_enabled()}}, inputs)
        outputs = [
            self.embeddings_path("chunks"),
            self.embeddings_path("atoms"),
            self.embeddings_path("questions"),
            self.embeddings_path("queries"),
        ]
        if self._hyde_enabled():
            outputs.append(self.embeddings_path("rewrites"))
        if dry:
            return fingerprint, outputs
        corpus = ingest_jsonl(self.chunks_path, self.rewritten_path)
        atoms = read_atoms(self.atoms_path)
        questions = read_questions(self.questions_path)
        embedder = _make_embedder(self.config)
        cache = EmbeddingCache(self.cache_path)
        jobs: list[tuple[str, list[tuple[str, str, str]]]] = [
            ("chunks", [(c.chunk_id, "chunk", c.text) for c in corpus.chunks]),
            ("atoms", [(a.atom_id, "atom", a.text) for a in atoms]),
            ("questions", [(q.question_id, "question", q.text) for q in questions]),
            ("queries", [(q.query_id, "query", q.text) for q in corpus.queries]),
        ]
        if self._hyde_enabled():
            rewrites = [(q.query_id, "rewrite", q.rewrite) for q in corpus.queries if q.rewrite]
            skipped = len(corpus.queries) - len(rewrites)
            if skipped:
                logger.warning("%d queries have no rewrite; skipping their rewrite embeddings", skipped)
            jobs.append(("rewrites", rewrites))
        for name, items in jobs:
            records = embed_batch(items, embedder, cache)
            write_records(self.embeddings_path(name), records)
        return fingerprint, outputs

    def _stage_index(self, dry: bool) -> tuple[str, list[Path]]:
        inputs = [
            self.embeddings_path("chunks"),
            self.embeddings_path("atoms"),
            self.embeddings_path("questions"),
            self.atoms_path,
            self.questions_path,
        ]
        fingerprint = _fingerprint({}, inputs)
        outputs = [
            self.index_dir("chunk") / "manifest.json",
            self.index_dir("atom") / "manifest.json",
            self.index_dir("question") / "manifest.json",
        ]
        if dry:
            return fingerprint, outputs
        atoms = read_atoms(self.atoms_path)
        questions = read_questions(self.questions_path)
        chunk_by_atom = {a.atom_id: a.chunk_id for a in atoms}
        atom_by_question = {q.question_id: (q.atom_id, q.chunk_id) for q in questions}
        save_index(
            build_index("chunk", read_records(self.embeddings_path("chunks"))),
            self.index_dir("chunk"),
        )
        save_index(
            build_index("atom", read_records(self.embeddings_path("atoms")), chunk_by_atom=chunk_by_atom),
            self.index_dir("atom"),
        )
        save_index(
            build_index(
                "question",
                read_records(self.embeddings_path("questions")),
                atom_by_question=atom_by_question,
            ),
            self.index_dir("question"),
        )
        return fingerprint, outputs

    def _tau_labels(self) -> list[tuple[float, str]]:
        taus = [float(t) for t in self.config.section("prune").get("taus", [0.2, 0.35, 0.5])]
        return [(tau, f"question-tau-{tau:g}") for tau in taus]

    def _stage_prune(self, dry: bool) -> tuple[str, list[Path]]:
        section = self.config.section("prune")
        inputs = [self.index_dir("question") / "embeddings.jsonl"]
        fingerprint = _fingerprint({"prune": section}, inputs)
        outputs = [self.index_dir(label) / "manifest.json" for _, label in self._tau_labels()]
        if dry:
            return fingerprint, outputs
        question_index = load_index(self.index_dir("question"))
        labels = dict(self._tau_labels())
        for tau, pruned in sweep_tau(question_index, [t for t, _ in self._tau_labels()]):
            save_index(pruned, self.index_dir(labels[tau]))
            logger.info("tau=%g retained %d of %d questions", tau, len(pruned), len(question_index))
        return fingerprint, outputs

    def _stage_eval(self, dry: bool) -> tuple[str, list[Path]]:
        section = self.config.section("eval")
        labels = ["chunk", "atom", "question"] + [label for _, label in self._tau_labels()]
        inputs = [self.index_dir(label) / "embeddings.jsonl" for label in labels]
        inputs += [self.embeddings_path("queries")]
        if self._hyde_enabled():
            inputs.append(self.embeddings_path("rewrites"))
        fingerprint = _fingerprint({"eval": section, "hyde": {"enabled": self._hyde_enabled()}}, inputs)
        outputs = [self.report_path]
        if dry:
            return fingerprint, outputs
        corpus = ingest_jsonl(self.chunks_path, self.queries_path)
        indices = {label: load_index(self.index_dir(label)) for label in labels}
        query_embeddings = {
            r.item_id: r.vector for r in read_records(self.embeddings_path("queries"))
        }
        rewrite_embeddings = None
        variants: list[str] = ["text"]
        if self._hyde_enabled():
            rewrite_embeddings = {
                r.item_id: r.vector for r in read_records(self.embeddings_path("rewrites"))
            }
            variants.append("hyde")
        run_comparison(
            corpus,
            indices,
            query_embeddings,
            ks=[int(k) for k in section.get("ks", [1, 2, 5])],
            ndcg_ks=[int(k) for k in section.get("ndcg_ks", [])],
            variants=variants,
            rewrite_embeddings=rewrite_embeddings,
            csv_path=self.report_path,
            dataset=str(self.config.section("output").get("dataset", "corpus")),
        )
        return fingerprint, outputs


def run_pipeline(config: PipelineConfig) -> Path:
    return Pipeline(config).run()


@dataclass(frozen=True)
class Finding:
    kind: str
    message: str


@dataclass
class ValidationReport:
    findings: list[Finding] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.findings


def validate_store(store_dir: str | Path, question_budget: int | None = None) -> ValidationReport:
    """Check referential integrity of a pipeline output directory.

    Validates whatever artifacts are present: ids resolve across files,
    no duplicates, embedding dims are consistent per embedder tag, and the
    question count respects the per-atom generation budget. Findings are
    collected rather than raised; unreadable files still raise I/O errors.
    """
    store = Path(store_dir)
    report = ValidationReport()

    def finding(kind: str, message: str) -> None:
        report.findings.append(Finding(kind, message))

    chunks_path = store / "corpus" / "chunks.jsonl"
    queries_path = store / "corpus" / "queries.jsonl"
    atoms_path = store / "atoms.jsonl"
    questions_path = store / "questions.jsonl"

    budget = question_budget
    manifest_path = store / "manifest.json"
    if budget is None and manifest_path.exists():
        try:
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
            budget = int(manifest.get("config", {}).get("questions", {}).get("budget", DEFAULT_QUESTION_BUDGET))
        except (ValueError, TypeError):
            finding("manifest", f"{manifest_path}: unreadable manifest")
    if budget is None:
        budget = DEFAULT_QUESTION_BUDGET

    chunk_ids: set[str] = set()
    if chunks_path.exists():
        seen_text: set[str] = set()
        for lineno, obj in read_jsonl(chunks_path):
            where = f"{chunks_path}:{lineno}"
            cid = obj.get("chunk_id")
            text = obj.get("text")
            if not isinstance(cid, str) or not isinstance(text, str):
                finding("parse", f"{where}: malformed chunk record")
                continue
            if cid in chunk_ids:
                finding("duplicate", f"{where}: duplicate chunk_id {cid!r}")
            chunk_ids.add(cid)
            key = normalize_ws(text)
            if not key:
                finding("empty", f"{where}: chunk {cid!r} has empty text")
            elif key in seen_text:
                finding("duplicate", f"{where}: chunk {cid!r} duplicates another chunk's text")
            else:
                seen_text.add(key)
        report.counts["chunks"] = len(chunk_ids)

    if queries_path.exists():
        qids: set[str] = set()
        n = 0
        for lineno, obj in read_jsonl(queries_path):
            where = f"{queries_path}:{lineno}"
            qid = obj.get("query_id")
            gold = obj.get("gold_chunk_id")
            if not isinstance(qid, str) or not isinstance(gold, str):
                finding("parse", f"{where}: malformed query record")
                continue
            n += 1
            if qid in qids:
                finding("duplicate", f"{where}: duplicate query_id {qid!r}")
            qids.add(qid)
            if chunk_ids and gold not in chunk_ids:
                finding("dangling", f"{where}: query {qid!r} points at unknown chunk {gold!r}")
        report.counts["queries"] = n

    atom_ids: dict[str, str] = {}
    if atoms_path.exists():
        seen_keys: set[tuple[str, str, int]] = set()
        for lineno, obj in read_jsonl(atoms_path):
            where = f"{atoms_path}:{lineno}"
            aid = obj.get("atom_id")
            cid = obj.get("chunk_id")
            kind = obj.get("kind")
            index = obj.get("index")
            if not isinstance(aid, str) or not isinstance(cid, str) or not isinstance(index, int):
                finding("parse", f"{where}: malformed atom record")
                continue
            if aid in atom_ids:
                finding("duplicate", f"{where}: duplicate atom_id {aid!r}")
            atom_ids[aid] = cid
            if chunk_ids and cid not in chunk_ids:
                finding("orphan", f"{where}: atom {aid!r} references unknown chunk {cid!r}")
            key = (cid, str(kind), index)
            if key in seen_keys:
                finding("duplicate", f"{where}: repeated (chunk, kind, index) {key}")
            seen_keys.add(key)
        report.counts["atoms"] = len(atom_ids)

    question_count = 0
    per_atom: dict[str, int] = {}
    if questions_path.exists():
        qidset: set[str] = set()
        for lineno, obj in read_jsonl(questions_path):
            where = f"{questions_path}:{lineno}"
            qid = obj.get("question_id")
            aid = obj.get("atom_id")
            cid = obj.get("chunk_id")
            if not isinstance(qid, str) or not isinstance(aid, str) or not isinstance(cid, str):
                finding("parse", f"{where}: malformed question record")
                continue
            question_count += 1
            if qid in qidset:
                finding("duplicate", f"{where}: duplicate question_id {qid!r}")
            qidset.add(qid)
            per_atom[aid] = per_atom.get(aid, 0) + 1
            if atom_ids:
                if aid not in atom_ids:
                    finding("orphan", f"{where}: question {qid!r} references unknown atom {aid!r}")
                elif atom_ids[aid] != cid:
                    finding(
                        "orphan",
                        f"{where}: question {qid!r} says chunk {cid!r} but atom {aid!r} belongs to {atom_ids[aid]!r}",
                    )
        report.counts["questions"] = question_count
        over = {aid: n for aid, n in per_atom.items() if n > budget}
        for aid, n in sorted(over.items()):
            finding("budget", f"atom {aid!r} has {n} questions, budget is {budget}")
        if atoms_path.exists() and question_count > budget * max(len(atom_ids), 1):
            finding(
                "budget",
                f"store holds {question_count} questions for {len(atom_ids)} atoms (budget {budget})",
            )

    dims_by_tag: dict[str, set[int]] = {}
    embeddings_dir = store / "embeddings"
    if embeddings_dir.is_dir():
        for path in sorted(embeddings_dir.glob("*.jsonl")):
            for lineno, obj in read_jsonl(path):
                vector = obj.get("vector")
                tag = obj.get("embedder_tag")
                if not isinstance(vector, list) or not isinstance(tag, str):
                    finding("parse", f"{path}:{lineno}: malformed embedding record")
                    continue
                dims_by_tag.setdefault(tag, set()).add(len(vector))
    indices_dir = store / "indices"
    if indices_dir.is_dir():
        for manifest_file in sorted(indices_dir.glob("*/manifest.json")):
            try:
                m = json.loads(manifest_file.read_text(encoding="utf-8"))
            except ValueError:
                finding("parse", f"{manifest_file}: invalid JSON")
                continue
            tag = m.get("embedder_tag")
            dim = m.get("dim")
            if isinstance(tag, str) and isinstance(dim, int):
                dims_by_tag.setdefault(tag, set()).add(dim)
    for tag, dims in sorted(dims_by_tag.items()):
        if len(dims) > 1:
            finding("dim", f"embedder {tag!r} appears with mixed dims {sorted(dims)}")

    return report
