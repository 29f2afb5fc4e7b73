"""Retrieval quality metrics and the comparison/efficiency harnesses.

Metrics operate on deduplicated chunk rankings: recall@k is the fraction of
queries whose gold chunk appears in the top k, nDCG@k awards 1/log2(rank+1)
when the gold chunk is ranked within k (the ideal ranking places it first,
so the normalizer is 1), and nAUC is the trapezoidal area under a curve
whose x axis has been affinely rescaled to [0, 1].
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus
from .errors import IntegrityError
from .index import RankedChunks, VectorIndex, retrieve_run, sample_questions, sweep_tau

logger = logging.getLogger(__name__)

COMPARISON_CSV_COLUMNS = ("dataset", "embedder_tag", "granularity", "query_variant", "metric", "value")
EFFICIENCY_CSV_COLUMNS = ("strategy", "metric", "fraction", "recall", "nauc")


def _gold_rank(run: RankedChunks, gold: Mapping[str, str], k: int) -> int | None:
    if run.query_id not in gold:
        raise IntegrityError(f"no gold label for query {run.query_id!r}")
    if k > run.k:
        raise ValueError(f"k={k} exceeds the run's retrieval depth {run.k}")
    rank = run.rank_of(gold[run.query_id])
    return rank if rank is not None and rank <= k else None


def recall_at_k(runs: Sequence[RankedChunks], gold: Mapping[str, str], k: int) -> float:
    """Fraction of queries whose gold chunk is among the top k."""
    if not runs:
        raise ValueError("recall over zero queries is undefined")
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = sum(1 for run in runs if _gold_rank(run, gold, k) is not None)
    return hits / len(runs)


def ndcg_at_k(runs: Sequence[RankedChunks], gold: Mapping[str, str], k: int) -> float:
    """Mean nDCG@k with a single relevant chunk per query."""
    if not runs:
        raise ValueError("nDCG over zero queries is undefined")
    if k < 1:
        raise ValueError("k must be >= 1")
    total = 0.0
    for run in runs:
        rank = _gold_rank(run, gold, k)
        if rank is not None:
            total += 1.0 / math.log2(rank + 1)
    return total / len(runs)


def nauc(points: Sequence[tuple[float, float]]) -> float:
    """Trapezoidal area under a curve after rescaling x to [0, 1].

    Needs at least two points with strictly increasing x; the rescale makes
    the result invariant to affine transforms of the x axis, so curves
    measured over different retained-question ranges stay comparable.
    """
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 2:
        raise ValueError("nauc needs at least two points")
    xs = [x for x, _ in pts]
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise ValueError("nauc needs strictly increasing x values")
    span = xs[-1] - xs[0]
    area = 0.0
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        area += (x1 - x0) / span * (y0 + y1) / 2.0
    return area


@dataclass(frozen=True)
class MetricReport:
    label: str
    query_variant: str
    r_at: Mapping[int, float]
    ndcg_at: Mapping[int, float]
    num_queries: int


@dataclass(frozen=True)
class EfficiencyCurve:
    strategy: str
    metric: str
    points: tuple[tuple[float, float], ...]
    nauc: float


def run_comparison(
    corpus: Corpus,
    indices: Mapping[str, VectorIndex],
    query_embeddings: Mapping[str, np.ndarray],
    ks: Sequence[int],
    *,
    ndcg_ks: Sequence[int] = (),
    variants: Sequence[str] = ("text",),
    rewrite_embeddings: Mapping[str, np.ndarray] | None = None,
    csv_path: str | Path | None = None,
    dataset: str = "corpus",
) -> list[MetricReport]:
    """Evaluate each labeled index under each query variant.

    Variants are "text" (embed the query itself) and "hyde" (embed the
    rewrite); requesting "hyde" without rewrite embeddings raises. One
    retrieval pass at the largest k serves all metric cutoffs. When
    `csv_path` is given a long-format table is written with one row per
    (index, variant, metric).
    """
    if not ks:
        raise ValueError("at least one recall cutoff is required")
    for variant in variants:
        if variant not in ("text", "hyde"):
            raise ValueError(f"unknown query variant {variant!r}")
        if variant == "hyde" and rewrite_embeddings is None:
            raise IntegrityError("hyde variant requested without rewrite embeddings")
    max_k = max(list(ks) + list(ndcg_ks))
    gold = corpus.gold_by_query_id
    reports = []
    rows: list[tuple[str, str, str, str, str, float]] = []
    for label, index in indices.items():
        for variant in variants:
            runs = retrieve_run(
                index,
                corpus.queries,
                query_embeddings,
                max_k,
                use_rewrite=(variant == "hyde"),
                rewrite_embeddings=rewrite_embeddings,
            )
            r_at = {k: recall_at_k(runs, gold, k) for k in ks}
            ndcg = {k: ndcg_at_k(runs, gold, k) for k in ndcg_ks}
            reports.append(
                MetricReport(
                    label=label,
                    query_variant=variant,
                    r_at=r_at,
                    ndcg_at=ndcg,
                    num_queries=len(runs),
                )
            )
            for k in ks:
                rows.append((dataset, index.embedder_tag, label, variant, f"R@{k}", r_at[k]))
            for k in ndcg_ks:
                rows.append((dataset, index.embedder_tag, label, variant, f"nDCG@{k}", ndcg[k]))
    if csv_path is not None:
        _write_csv(csv_path, COMPARISON_CSV_COLUMNS, rows)
    return reports


def efficiency_sweep(
    question_index: VectorIndex,
    corpus: Corpus,
    query_embeddings: Mapping[str, np.ndarray],
    *,
    fractions: Sequence[float],
    seeds: Sequence[int],
    tau_values: Sequence[float],
    ks: Sequence[int],
    csv_path: str | Path | None = None,
) -> list[EfficiencyCurve]:
    """Recall versus retained-question fraction, pruned against random.

    Random points average recall over `seeds` at each requested fraction.
    Pruned points come from the tau sweep: each tau maps to the fraction of
    questions it retains (taus landing on an already-seen fraction are
    dropped, keeping the smallest such tau). Each strategy yields one curve
    per cutoff k with its nAUC.
    """
    if question_index.granularity != "question":
        raise ValueError("efficiency sweeps run on question indices")
    if not fractions or any(b <= a for a, b in zip(fractions, fractions[1:])):
        raise ValueError("fractions must be non-empty and strictly ascending")
    if not seeds:
        raise ValueError("at least one sampling seed is required")
    if not ks:
        raise ValueError("at least one recall cutoff is required")
    total = len(question_index)
    gold = corpus.gold_by_query_id
    max_k = max(ks)

    random_points: dict[int, list[tuple[float, float]]] = {k: [] for k in ks}
    for fraction in fractions:
        sums = {k: 0.0 for k in ks}
        for seed in seeds:
            sub = sample_questions(question_index, fraction, seed)
            runs = retrieve_run(sub, corpus.queries, query_embeddings, max_k)
            for k in ks:
                sums[k] += recall_at_k(runs, gold, k)
        for k in ks:
            random_points[k].append((fraction, sums[k] / len(seeds)))

    pruned_points: dict[int, list[tuple[float, float]]] = {k: [] for k in ks}
    seen_fractions: set[float] = set()
    for tau, pruned in sweep_tau(question_index, tau_values):
        fraction = len(pruned) / total
        if fraction in seen_fractions:
            logger.debug("tau=%.3f repeats fraction %.4f; skipping", tau, fraction)
            continue
        seen_fractions.add(fraction)
        runs = retrieve_run(pruned, corpus.queries, query_embeddings, max_k)
        for k in ks:
            pruned_points[k].append((fraction, recall_at_k(runs, gold, k)))

    curves = []
    rows: list[tuple[str, str, float, float, float]] = []
    for strategy, point_map in (("random", random_points), ("pruned", pruned_points)):
        for k in ks:
            pts = sorted(point_map[k])
            curve = EfficiencyCurve(
                strategy=strategy,
                metric=f"R@{k}",
                points=tuple(pts),
                nauc=nauc(pts),
            )
            curves.append(curve)
            for fraction, recall in pts:
                rows.append((strategy, curve.metric, fraction, recall, curve.nauc))
    if csv_path is not None:
        _write_csv(csv_path, EFFICIENCY_CSV_COLUMNS, rows)
    return curves


def _write_csv(path: str | Path, columns: Sequence[str], rows: Sequence[tuple]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)
