"""Relation-structure diagnostics: hierarchy, paths, symmetry, norms, eigenvalues."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .data import RELATION_TYPES, RelationTaxonomy, TripleStore, normalize_relation
from .models import ModelKind, ModelKindError, ModelParams, tucker_relation_matrix

CONVENTIONS = {
    "khs_reachability": "paths of length >= 1, diagonal pairs excluded",
    "path_pairs": "ordered pairs (x, y), x != y, shortest directed path",
    "graph_splits": "train",
}


class DegenerateError(ValueError):
    """Statistic undefined for the given input."""


@dataclass(frozen=True)
class RelationGraph:
    """Directed graph of one relation's triples, ``s -> o``."""

    successors: dict[int, tuple[int, ...]]

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[int, int]]) -> "RelationGraph":
        adj: dict[int, set[int]] = {}
        for s, o in edges:
            adj.setdefault(s, set()).add(o)
            adj.setdefault(o, set())
        return cls({n: tuple(sorted(adj[n])) for n in sorted(adj)})

    @property
    def nodes(self) -> list[int]:
        return list(self.successors)

    @property
    def n_edges(self) -> int:
        return sum(len(v) for v in self.successors.values())


def relation_graph(store: TripleStore, relation: int, splits: Sequence[str] = ("train",)) -> RelationGraph:
    edges = []
    for name in splits:
        arr = store.split(name)
        sel = arr[arr[:, 1] == relation]
        edges.extend(zip(sel[:, 0].tolist(), sel[:, 2].tolist()))
    return RelationGraph.from_edges(edges)


def _bfs(graph: RelationGraph, source: int) -> dict[int, int]:
    """Shortest path lengths from ``source`` to every other reachable node."""
    dist: dict[int, int] = {}
    queue = deque([(source, 0)])
    seen = {source}
    while queue:
        node, d = queue.popleft()
        for nxt in graph.successors.get(node, ()):
            if nxt not in seen:
                seen.add(nxt)
                dist[nxt] = d + 1
                queue.append((nxt, d + 1))
    return dist


def reachability(graph: RelationGraph) -> dict[int, set[int]]:
    """Nodes reachable from each node by a path of length >= 1, excluding itself."""
    out = {}
    for node in graph.nodes:
        out[node] = set(_bfs(graph, node))
    return out


def khs(graph: RelationGraph) -> float:
    """Krackhardt hierarchy score: share of reachable ordered pairs (x, y)
    whose reverse y -> x is not reachable. 0 for a graph with no reachable pair."""
    if not graph.successors:
        raise DegenerateError("empty graph")
    reach = reachability(graph)
    total = one_way = 0
    for x, ys in reach.items():
        total += len(ys)
        one_way += sum(1 for y in ys if x not in reach[y])
    return one_way / total if total else 0.0


def path_stats(graph: RelationGraph) -> tuple[int | None, float | None]:
    """Maximum and mean shortest directed path over connected ordered pairs."""
    if not graph.successors:
        raise DegenerateError("empty graph")
    longest = 0
    total = count = 0
    for node in graph.nodes:
        for d in _bfs(graph, node).values():
            longest = max(longest, d)
            total += d
            count += 1
    if count == 0:
        return None, None
    return longest, total / count


def symmetry_score(matrix: np.ndarray) -> float:
    """Correlation in [-1, 1] between off-diagonal entries R_ij and R_ji:

    (sum R_ij R_ji - S^2/m) / (sum R_ij^2 - S^2/m),  S = sum R_ij,  m = d(d-1),

    with all sums over i != j.
    """
    R = np.asarray(matrix, dtype=np.float64)
    if R.ndim != 2 or R.shape[0] != R.shape[1] or R.shape[0] < 2:
        raise ValueError("need a square matrix of size at least 2")
    d = R.shape[0]
    off = ~np.eye(d, dtype=bool)
    vals = R[off]
    m = d * (d - 1)
    mean_term = vals.sum() ** 2 / m
    cross = np.sum((R * R.T)[off]) - mean_term
    square = np.sum(vals * vals)
    denom = square - mean_term
    if denom <= 1e-14 * max(square, np.finfo(float).tiny):
        raise DegenerateError("off-diagonal entries have zero variance")
    return float(cross / denom)


def vector_norms(params: ModelParams) -> np.ndarray:
    """Euclidean norm of each relation's translation vector."""
    if not params.kind.has_translation:
        raise ModelKindError(f"{params.kind.value} has no relation vectors")
    return np.linalg.norm(params.relation_vec, axis=1)


def eigen_profile(diag) -> np.ndarray:
    """Eigenvalue magnitudes of a diagonal relation matrix, descending and
    divided by the largest."""
    mags = np.sort(np.abs(np.asarray(diag, dtype=np.float64)))[::-1]
    if mags.size == 0 or mags[0] == 0:
        raise DegenerateError("all eigenvalues are zero")
    return mags / mags[0]


def profile_area(profile: np.ndarray) -> float:
    """Mean scaled magnitude, i.e. the area under the profile on a unit-width axis."""
    return float(np.mean(profile))


def relation_matrix_symmetry(params: ModelParams) -> np.ndarray:
    if params.kind is not ModelKind.TUCKER:
        raise ModelKindError(
            f"symmetry scores need dense relation matrices (TuckER), not {params.kind.value}"
        )
    return np.array([symmetry_score(tucker_relation_matrix(params, r)) for r in range(params.n_relations)])


@dataclass
class StructureRow:
    relation: int
    name: str
    rtype: str
    train_pct: float
    test_count: int
    khs: float | None = None
    max_path: int | None = None
    avg_path: float | None = None
    symmetry: float | None = None
    vector_norm: float | None = None
    eigen_profile: np.ndarray | None = field(default=None, repr=False)

    @property
    def eigen_area(self) -> float | None:
        return None if self.eigen_profile is None else profile_area(self.eigen_profile)


@dataclass
class StructureReport:
    rows: list[StructureRow]
    conventions: dict

    def to_records(self) -> list[dict]:
        return [
            {
                "relation": row.name,
                "type": row.rtype,
                "train_pct": row.train_pct,
                "test_count": row.test_count,
                "khs": row.khs,
                "max_path": row.max_path,
                "avg_path": row.avg_path,
                "symmetry": row.symmetry,
                "vector_norm": row.vector_norm,
                "eigen_area": row.eigen_area,
            }
            for row in self.rows
        ]

    def by_name(self, name: str) -> StructureRow:
        for row in self.rows:
            if row.name == name or normalize_relation(row.name) == name:
                return row
        raise KeyError(name)

    def type_means(self, attr: str) -> dict[str, float]:
        """Mean of ``attr`` over relations of each taxonomy type (skipping None)."""
        out = {}
        for rtype in RELATION_TYPES:
            vals = [getattr(r, attr) for r in self.rows if r.rtype == rtype and getattr(r, attr) is not None]
            if vals:
                out[rtype] = float(np.mean(vals))
        return out


ANALYSES = ("khs", "paths", "symmetry", "norms", "eigen")


def structure_report(
    params: ModelParams | None,
    store: TripleStore,
    taxonomy: RelationTaxonomy | None = None,
    relation_names: Sequence[str] | None = None,
    hidden: Iterable[int] = (),
    which: Iterable[str] = ANALYSES,
    splits: Sequence[str] = ("train",),
) -> StructureReport:
    """One row per relation with the requested diagnostics.

    Graph statistics need only the store; symmetry needs TuckER parameters,
    norms a model with translation vectors and eigen profiles a diagonal
    model. Parameter-based analyses that do not apply to ``params`` are
    skipped; asking for them without any parameters raises ModelKindError.
    """
    which = set(which)
    unknown = which - set(ANALYSES)
    if unknown:
        raise ValueError(f"unknown analyses {sorted(unknown)}")
    needs_params = which & {"symmetry", "norms", "eigen"}
    if needs_params and params is None:
        raise ModelKindError(f"{', '.join(sorted(needs_params))} need a checkpoint")
    names = relation_names or [str(i) for i in range(store.n_relations)]
    hidden = set(hidden)
    train_counts = store.relation_counts("train")
    test_counts = store.relation_counts("test")
    n_train = max(len(store.train), 1)

    symmetry = norms = None
    if params is not None:
        if "symmetry" in which and params.kind is ModelKind.TUCKER:
            symmetry = relation_matrix_symmetry(params)
        if "norms" in which and params.kind.has_translation:
            norms = vector_norms(params)

    rows = []
    for rel in range(store.n_relations):
        if rel in hidden:
            continue
        row = StructureRow(
            rel, names[rel], taxonomy.get(rel) if taxonomy else "",
            float(train_counts[rel] / n_train), int(test_counts[rel]),
        )
        graph = None
        if which & {"khs", "paths"}:
            graph = relation_graph(store, rel, splits)
        if graph is not None and graph.successors:
            if "khs" in which:
                row.khs = khs(graph)
            if "paths" in which:
                row.max_path, row.avg_path = path_stats(graph)
        if symmetry is not None:
            row.symmetry = float(symmetry[rel])
        if norms is not None:
            row.vector_norm = float(norms[rel])
        if params is not None and "eigen" in which and params.kind.has_diagonal:
            try:
                row.eigen_profile = eigen_profile(params.relation_diag[rel])
            except DegenerateError:
                pass
        rows.append(row)
    conventions = dict(CONVENTIONS, graph_splits=",".join(splits))
    return StructureReport(rows, conventions)
