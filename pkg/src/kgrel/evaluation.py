"""Ranking metrics and per-relation independent-prediction statistics."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .data import TEST, TRAIN, VALID, RelationTaxonomy, TripleStore
from .models import ModelParams, score_objects_batch, score_subjects_batch, sigmoid
from .workers import worker_count

HIST_RESOLUTION = 1000
CLASSES = ("train", "test", "other")


@dataclass(frozen=True)
class EvalConfig:
    ks: tuple[int, ...] = (10,)
    filtered: bool = True
    split: str = "test"

    def __post_init__(self):
        object.__setattr__(self, "ks", tuple(sorted(set(int(k) for k in self.ks))))
        if not self.ks or min(self.ks) < 1:
            raise ValueError("cutoffs must be positive")
        if self.split not in ("valid", "test"):
            raise ValueError("split must be 'valid' or 'test'")

    def to_dict(self) -> dict:
        return {
            "ks": list(self.ks),
            "filtered": self.filtered,
            "split": self.split,
            "tie_breaking": "pessimistic",
        }


class RankRecord(NamedTuple):
    triple: tuple[int, int, int]
    subject_rank: int
    object_rank: int


def _rank(row: np.ndarray, target: int, exclude: Iterable[int]) -> int:
    """1 + number of competitors scoring at least as high as ``target``."""
    true_score = row[target]
    competitors = row >= true_score
    competitors[target] = False
    for e in exclude:
        competitors[e] = False
    return 1 + int(np.count_nonzero(competitors))


def _known_objects(store: TripleStore, s: int, r: int) -> frozenset[int]:
    return store.sr_index.get((s, r), frozenset())


def _known_subjects(store: TripleStore, r: int, o: int) -> frozenset[int]:
    return store.ro_index.get((r, o), frozenset())


def rank_triple(params: ModelParams, triple, store: TripleStore, filtered: bool = True) -> RankRecord:
    """Subject- and object-side ranks of one triple among all ``n_e`` corruptions.

    Ties count against the true triple. With ``filtered`` set, corruptions
    that are known true triples in any split are left out.
    """
    return rank_triples(params, np.asarray(triple).reshape(1, 3), store, filtered)[0]


def rank_triples(
    params: ModelParams,
    triples: np.ndarray,
    store: TripleStore,
    filtered: bool = True,
    chunk: int = 256,
    workers: int | None = None,
) -> list[RankRecord]:
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)

    def run(lo: int) -> list[RankRecord]:
        part = triples[lo:lo + chunk]
        obj_scores = score_objects_batch(params, part[:, 0], part[:, 1])
        subj_scores = score_subjects_batch(params, part[:, 1], part[:, 2])
        out = []
        for q, (s, r, o) in enumerate(part.tolist()):
            obj_ex = _known_objects(store, s, r) if filtered else ()
            subj_ex = _known_subjects(store, r, o) if filtered else ()
            out.append(RankRecord(
                (s, r, o),
                _rank(subj_scores[q], s, subj_ex),
                _rank(obj_scores[q], o, obj_ex),
            ))
        return out

    starts = range(0, len(triples), chunk)
    n_workers = worker_count(workers)
    if n_workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(lo) for lo in starts]
    return [rec for part in parts for rec in part]


@dataclass
class RelationMetrics:
    relation: int
    name: str
    rtype: str
    train_pct: float
    count: int
    hits: dict[int, float]
    mrr: float


@dataclass
class MetricsReport:
    rows: list[RelationMetrics]
    overall: RelationMetrics
    config: dict
    ranks: np.ndarray = field(repr=False)  # (n, 2) subject/object ranks of the split triples

    def to_records(self) -> list[dict]:
        out = []
        for row in self.rows + [self.overall]:
            rec = {
                "relation": row.name,
                "type": row.rtype,
                "train_pct": row.train_pct,
                "count": row.count,
            }
            for k, v in row.hits.items():
                rec[f"hits@{k}"] = v
            rec["mrr"] = row.mrr
            out.append(rec)
        return out


def _aggregate(ranks: np.ndarray, ks: Sequence[int]) -> tuple[dict[int, float], float]:
    flat = ranks.reshape(-1)
    hits = {k: float(np.mean(flat <= k)) for k in ks}
    return hits, float(np.mean(1.0 / flat))


def ranking_report(
    params: ModelParams,
    store: TripleStore,
    taxonomy: RelationTaxonomy | None = None,
    config: EvalConfig = EvalConfig(),
    relation_names: Sequence[str] | None = None,
    hidden: Iterable[int] = (),
    workers: int | None = None,
) -> MetricsReport:
    """Per-relation and overall hits@k and MRR on ``config.split``.

    Each triple contributes its subject-side and object-side rank. The
    overall row pools every triple of the split, including relations in
    ``hidden``, which are only left out of the per-relation rows.
    """
    triples = store.split(config.split)
    records = rank_triples(params, triples, store, config.filtered, workers=workers)
    ranks = np.array([[rec.subject_rank, rec.object_rank] for rec in records], dtype=np.int64).reshape(-1, 2)
    names = relation_names or [str(i) for i in range(store.n_relations)]
    train_counts = store.relation_counts("train")
    n_train = max(len(store.train), 1)
    hidden = set(hidden)

    rows = []
    rel_col = triples[:, 1]
    for rel in np.unique(rel_col).tolist():
        if rel in hidden:
            continue
        mask = rel_col == rel
        hits, mrr = _aggregate(ranks[mask], config.ks)
        rows.append(RelationMetrics(
            rel, names[rel], taxonomy.get(rel) if taxonomy else "",
            float(train_counts[rel] / n_train), int(mask.sum()), hits, mrr,
        ))
    if len(ranks):
        hits, mrr = _aggregate(ranks, config.ks)
    else:
        hits, mrr = {k: float("nan") for k in config.ks}, float("nan")
    overall = RelationMetrics(-1, "all", "", 1.0, len(triples), hits, mrr)
    return MetricsReport(rows, overall, config.to_dict(), ranks)


@dataclass
class RelationPredictions:
    relation: int
    name: str
    rtype: str
    n_pairs: int
    n_train_true: int
    n_train_positive: int
    n_test_true: int
    n_test_positive: int
    n_other_positive: int
    histogram: np.ndarray  # (3, resolution) counts for train / test / other

    @property
    def train_accuracy(self) -> float:
        return self.n_train_positive / self.n_train_true if self.n_train_true else float("nan")

    @property
    def test_accuracy(self) -> float:
        return self.n_test_positive / self.n_test_true if self.n_test_true else float("nan")

    @property
    def avg_other_truths(self) -> float:
        return self.n_other_positive / self.n_pairs if self.n_pairs else float("nan")


@dataclass
class PredictionStats:
    rows: list[RelationPredictions]
    overall: RelationPredictions
    threshold: float
    resolution: int

    def to_records(self) -> list[dict]:
        return [
            {
                "relation": row.name,
                "type": row.rtype,
                "pairs": row.n_pairs,
                "n_train": row.n_train_true,
                "n_test": row.n_test_true,
                "train_accuracy": row.train_accuracy,
                "test_accuracy": row.test_accuracy,
                "avg_other_truths": row.avg_other_truths,
            }
            for row in self.rows + [self.overall]
        ]


def _bin_index(prob: np.ndarray, bins: int) -> np.ndarray:
    return np.minimum((prob * bins).astype(np.int64), bins - 1)


def prediction_stats(
    params: ModelParams,
    store: TripleStore,
    threshold: float = 0.5,
    taxonomy: RelationTaxonomy | None = None,
    relation_names: Sequence[str] | None = None,
    hidden: Iterable[int] = (),
    resolution: int = HIST_RESOLUTION,
    chunk: int = 128,
) -> PredictionStats:
    """Classify every object candidate of each test-split ``(s, r)`` pair.

    Candidates are split into known training truths, known validation/test
    truths (not also in training) and other triples. A candidate counts as a
    positive prediction when ``sigmoid(score) > threshold``.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    names = relation_names or [str(i) for i in range(store.n_relations)]
    hidden = set(hidden)
    pairs = np.unique(store.test[:, :2], axis=0) if len(store.test) else np.zeros((0, 2), np.int64)
    n_rel = store.n_relations
    counts = np.zeros((n_rel, 6), dtype=np.int64)  # pairs, train, train+, test, test+, other+
    hist = np.zeros((n_rel, 3, resolution), dtype=np.int64)

    for lo in range(0, len(pairs), chunk):
        part = pairs[lo:lo + chunk]
        probs = sigmoid(score_objects_batch(params, part[:, 0], part[:, 1]))
        for q, (s, r) in enumerate(part.tolist()):
            p = probs[q]
            cls = np.full(len(p), 2, dtype=np.int64)
            for o in store.sr_index.get((s, r), ()):
                flags = store.flags(s, r, o)
                if flags & TRAIN:
                    cls[o] = 0
                elif flags & (VALID | TEST):
                    cls[o] = 1
            positive = p > threshold
            c = counts[r]
            c[0] += 1
            c[1] += np.count_nonzero(cls == 0)
            c[2] += np.count_nonzero(positive & (cls == 0))
            c[3] += np.count_nonzero(cls == 1)
            c[4] += np.count_nonzero(positive & (cls == 1))
            c[5] += np.count_nonzero(positive & (cls == 2))
            np.add.at(hist[r], (cls, _bin_index(p, resolution)), 1)

    def make(rel, name, rtype, c, h):
        return RelationPredictions(rel, name, rtype, *(int(x) for x in c), h)

    rows = [
        make(rel, names[rel], taxonomy.get(rel) if taxonomy else "", counts[rel], hist[rel])
        for rel in np.unique(pairs[:, 1]).tolist()
        if rel not in hidden
    ]
    overall = make(-1, "all", "", counts.sum(axis=0), hist.sum(axis=0))
    return PredictionStats(rows, overall, threshold, resolution)


def histogram_export(stats: PredictionStats, bins: int = 50) -> list[dict]:
    """Rows ``relation, class, bin_lo, bin_hi, count`` over equal-width bins of [0, 1].

    ``bins`` must divide the resolution the statistics were collected at.
    """
    if bins < 2:
        raise ValueError("need at least 2 bins")
    if stats.resolution % bins:
        raise ValueError(f"bins={bins} does not divide the histogram resolution {stats.resolution}")
    factor = stats.resolution // bins
    records = []
    for row in stats.rows + [stats.overall]:
        coarse = row.histogram.reshape(3, bins, factor).sum(axis=2)
        for ci, cname in enumerate(CLASSES):
            for b in range(bins):
                records.append({
                    "relation": row.name,
                    "class": cname,
                    "bin_lo": b / bins,
                    "bin_hi": (b + 1) / bins,
                    "count": int(coarse[ci, b]),
                })
    return records
