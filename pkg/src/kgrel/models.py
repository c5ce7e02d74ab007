"""Parameters and score functions of the five linear link prediction models.

All five share entity embeddings and differ in the relation representation:

=========  ==============================================  =======================
model      score                                           relation parameters
=========  ==============================================  =======================
TransE     -||e_s + r - e_o||^2                            relation_vec
MuRE_I     -||e_s + r - e_o||^2 + b_s + b_o                relation_vec, biases
DistMult   e_s^T diag(d) e_o                               relation_diag
TuckER     W x_1 e_s x_2 w_r x_3 e_o                       core_tensor, relation_emb
MuRE       -||d * e_s + r - e_o||^2 + b_s + b_o            relation_vec, relation_diag, biases
=========  ==============================================  =======================
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields

import numpy as np

INIT_SCHEME = {
    "embedding": "normal(0, 0.01)",
    "diagonal": "normal(0, 0.01)",
    "core_tensor": "uniform(-1, 1)",
    "bias": "zeros",
}
EMBEDDING_STD = 0.01


class ModelKindError(ValueError):
    """Operation is not defined for the given model kind."""


class ModelKind(str, enum.Enum):
    TRANSE = "TransE"
    MURE_I = "MuRE_I"
    DISTMULT = "DistMult"
    TUCKER = "TuckER"
    MURE = "MuRE"

    @classmethod
    def parse(cls, name: "str | ModelKind") -> "ModelKind":
        if isinstance(name, ModelKind):
            return name
        lowered = name.lower().replace("-", "_")
        for kind in cls:
            if kind.value.lower() == lowered:
                return kind
        raise ModelKindError(f"unknown model {name!r}; choose from {[k.value for k in cls]}")

    @property
    def has_translation(self) -> bool:
        return self in (ModelKind.TRANSE, ModelKind.MURE_I, ModelKind.MURE)

    @property
    def has_diagonal(self) -> bool:
        return self in (ModelKind.DISTMULT, ModelKind.MURE)

    @property
    def has_bias(self) -> bool:
        return self in (ModelKind.MURE_I, ModelKind.MURE)

    @property
    def is_distance(self) -> bool:
        return self in (ModelKind.TRANSE, ModelKind.MURE_I, ModelKind.MURE)


@dataclass(frozen=True)
class Dims:
    n_entities: int
    n_relations: int
    entity_dim: int = 200
    relation_dim: int = 200

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 1:
                raise ValueError(f"{f.name} must be positive")


TENSOR_NAMES = (
    "entity_emb",
    "relation_vec",
    "relation_diag",
    "core_tensor",
    "relation_emb",
    "bias_s",
    "bias_o",
)


@dataclass
class ModelParams:
    """Parameter blocks for one model. Blocks a model does not use are None."""

    kind: ModelKind
    entity_emb: np.ndarray
    relation_vec: np.ndarray | None = None
    relation_diag: np.ndarray | None = None
    core_tensor: np.ndarray | None = None
    relation_emb: np.ndarray | None = None
    bias_s: np.ndarray | None = None
    bias_o: np.ndarray | None = None

    def __post_init__(self):
        self.kind = ModelKind.parse(self.kind)
        self.validate()

    @property
    def n_entities(self) -> int:
        return self.entity_emb.shape[0]

    @property
    def n_relations(self) -> int:
        if self.kind is ModelKind.TUCKER:
            return self.relation_emb.shape[0]
        if self.kind is ModelKind.DISTMULT:
            return self.relation_diag.shape[0]
        return self.relation_vec.shape[0]

    @property
    def dims(self) -> Dims:
        d_r = self.relation_emb.shape[1] if self.kind is ModelKind.TUCKER else self.entity_emb.shape[1]
        return Dims(self.n_entities, self.n_relations, self.entity_emb.shape[1], d_r)

    def tensors(self) -> dict[str, np.ndarray]:
        """Present blocks in canonical order."""
        return {
            name: getattr(self, name)
            for name in TENSOR_NAMES
            if getattr(self, name) is not None
        }

    def copy(self) -> "ModelParams":
        return ModelParams(self.kind, **{k: v.copy() for k, v in self.tensors().items()})

    def validate(self) -> None:
        kind = self.kind
        required = {"entity_emb"}
        if kind.has_translation:
            required.add("relation_vec")
        if kind.has_diagonal:
            required.add("relation_diag")
        if kind.has_bias:
            required |= {"bias_s", "bias_o"}
        if kind is ModelKind.TUCKER:
            required |= {"core_tensor", "relation_emb"}
        present = set(self.tensors())
        if present != required:
            raise ModelKindError(
                f"{kind.value} expects blocks {sorted(required)}, got {sorted(present)}"
            )
        n_e, d_e = self.entity_emb.shape
        n_r = self.n_relations
        expected = {
            "relation_vec": (n_r, d_e),
            "relation_diag": (n_r, d_e),
            "bias_s": (n_e,),
            "bias_o": (n_e,),
        }
        if kind is ModelKind.TUCKER:
            d_r = self.relation_emb.shape[1]
            expected["core_tensor"] = (d_e, d_r, d_e)
        for name, shape in expected.items():
            block = getattr(self, name)
            if block is not None and block.shape != shape:
                raise ValueError(f"{name} has shape {block.shape}, expected {shape}")
        for name, block in self.tensors().items():
            if not np.all(np.isfinite(block)):
                raise ValueError(f"{name} has non-finite entries")


def init_params(kind: ModelKind | str, dims: Dims, seed: int) -> ModelParams:
    """Seeded initialisation: embeddings and diagonals ~ N(0, 0.01^2), TuckER
    core ~ U(-1, 1), biases zero."""
    kind = ModelKind.parse(kind)
    rng = np.random.default_rng(seed)
    n_e, n_r, d_e, d_r = dims.n_entities, dims.n_relations, dims.entity_dim, dims.relation_dim
    blocks: dict[str, np.ndarray] = {
        "entity_emb": rng.normal(0.0, EMBEDDING_STD, size=(n_e, d_e)),
    }
    if kind.has_translation:
        blocks["relation_vec"] = rng.normal(0.0, EMBEDDING_STD, size=(n_r, d_e))
    if kind.has_diagonal:
        blocks["relation_diag"] = rng.normal(0.0, EMBEDDING_STD, size=(n_r, d_e))
    if kind is ModelKind.TUCKER:
        blocks["relation_emb"] = rng.normal(0.0, EMBEDDING_STD, size=(n_r, d_r))
        blocks["core_tensor"] = rng.uniform(-1.0, 1.0, size=(d_e, d_r, d_e))
    if kind.has_bias:
        blocks["bias_s"] = np.zeros(n_e)
        blocks["bias_o"] = np.zeros(n_e)
    return ModelParams(kind, **blocks)


def _check_ids(params: ModelParams, s=None, r=None, o=None) -> None:
    n_e, n_r = params.n_entities, params.n_relations
    for name, ids, bound in (("subject", s, n_e), ("relation", r, n_r), ("object", o, n_e)):
        if ids is None:
            continue
        arr = np.asarray(ids)
        if arr.size and (arr.min() < 0 or arr.max() >= bound):
            raise IndexError(f"{name} id out of range [0, {bound})")


def sigmoid(x):
    """Logistic function without overflow warnings for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def score(params: ModelParams, s: int, r: int, o: int) -> float:
    """Score a single triple. Written directly from the score formulas, so it
    doubles as the reference for the batched scorers."""
    _check_ids(params, s, r, o)
    kind = params.kind
    es = params.entity_emb[s]
    eo = params.entity_emb[o]
    if kind is ModelKind.DISTMULT:
        # e_s * e_o first: IEEE products commute, so swapping s and o is bit-exact
        return float(np.sum(es * eo * params.relation_diag[r]))
    if kind is ModelKind.TUCKER:
        return float(np.einsum("ijk,i,j,k->", params.core_tensor, es, params.relation_emb[r], eo))
    head = es * params.relation_diag[r] if kind is ModelKind.MURE else es
    diff = head + params.relation_vec[r] - eo
    phi = -float(np.sum(diff * diff))
    if kind.has_bias:
        phi += params.bias_s[s] + params.bias_o[o]
    return phi


def score_triples(params: ModelParams, s, r, o) -> np.ndarray:
    """Vectorised scores for aligned id arrays."""
    s, r, o = (np.asarray(a, dtype=np.int64) for a in (s, r, o))
    _check_ids(params, s, r, o)
    kind = params.kind
    es = params.entity_emb[s]
    eo = params.entity_emb[o]
    if kind is ModelKind.DISTMULT:
        return np.sum(es * eo * params.relation_diag[r], axis=-1)
    if kind is ModelKind.TUCKER:
        return np.sum(tucker_subject_map(params, es, params.relation_emb[r]) * eo, axis=-1)
    head = es * params.relation_diag[r] if kind is ModelKind.MURE else es
    diff = head + params.relation_vec[r] - eo
    phi = -np.sum(diff * diff, axis=-1)
    if kind.has_bias:
        phi = phi + params.bias_s[s] + params.bias_o[o]
    return phi


def tucker_subject_map(params: ModelParams, es: np.ndarray, wr: np.ndarray) -> np.ndarray:
    """Rows ``W x_1 e_s x_2 w_r`` (shape (n, d_e)) for aligned batches."""
    W = params.core_tensor
    d_e, d_r, _ = W.shape
    outer = (es[:, :, None] * wr[:, None, :]).reshape(len(es), d_e * d_r)
    return outer @ W.reshape(d_e * d_r, d_e)


def tucker_relation_matrix(params: ModelParams, r: int) -> np.ndarray:
    """Relation matrix ``R[i, j] = sum_k W[i, k, j] * w_r[k]``, so that
    ``e_s @ R @ e_o`` equals the TuckER score."""
    if params.kind is not ModelKind.TUCKER:
        raise ModelKindError(f"relation matrices from the core tensor need TuckER, not {params.kind.value}")
    _check_ids(params, r=r)
    return np.einsum("ikj,k->ij", params.core_tensor, params.relation_emb[r])


def score_all_objects(params: ModelParams, s: int, r: int) -> np.ndarray:
    """Scores of ``(s, r, e)`` for every entity ``e``."""
    return score_objects_batch(params, np.array([s]), np.array([r]))[0]


def score_all_subjects(params: ModelParams, r: int, o: int) -> np.ndarray:
    """Scores of ``(e, r, o)`` for every entity ``e``."""
    return score_subjects_batch(params, np.array([r]), np.array([o]))[0]


def score_objects_batch(params: ModelParams, s, r) -> np.ndarray:
    """Matrix of shape (len(s), n_e): row q scores ``(s[q], r[q], e)`` over all e."""
    s, r = np.asarray(s, dtype=np.int64), np.asarray(r, dtype=np.int64)
    _check_ids(params, s=s, r=r)
    kind = params.kind
    E = params.entity_emb
    es = E[s]
    if kind is ModelKind.DISTMULT:
        return (es * params.relation_diag[r]) @ E.T
    if kind is ModelKind.TUCKER:
        return tucker_subject_map(params, es, params.relation_emb[r]) @ E.T
    head = es * params.relation_diag[r] if kind is ModelKind.MURE else es
    query = head + params.relation_vec[r]
    out = _neg_sq_dist(query, E)
    if kind.has_bias:
        out += params.bias_s[s][:, None] + params.bias_o[None, :]
    return out


def score_subjects_batch(params: ModelParams, r, o) -> np.ndarray:
    """Matrix of shape (len(r), n_e): row q scores ``(e, r[q], o[q])`` over all e."""
    r, o = np.asarray(r, dtype=np.int64), np.asarray(o, dtype=np.int64)
    _check_ids(params, r=r, o=o)
    kind = params.kind
    E = params.entity_emb
    eo = E[o]
    if kind is ModelKind.DISTMULT:
        return (eo * params.relation_diag[r]) @ E.T
    if kind is ModelKind.TUCKER:
        W = params.core_tensor
        d_e, d_r, _ = W.shape
        wr = params.relation_emb[r]
        outer = (wr[:, :, None] * eo[:, None, :]).reshape(len(r), d_r * d_e)
        obj_map = outer @ W.reshape(d_e, d_r * d_e).T
        return obj_map @ E.T
    target = eo - params.relation_vec[r]
    if kind is ModelKind.MURE:
        # per-candidate product d * e_i, one query at a time
        out = np.empty((len(r), len(E)))
        for q in range(len(r)):
            diff = E * params.relation_diag[r[q]] - target[q]
            out[q] = -np.sum(diff * diff, axis=1)
    else:
        out = _neg_sq_dist(target, E)
    if kind.has_bias:
        out += params.bias_s[None, :] + params.bias_o[o][:, None]
    return out


def _neg_sq_dist(queries: np.ndarray, E: np.ndarray) -> np.ndarray:
    # explicit differences rather than the |a|^2 - 2ab + |b|^2 expansion to
    # keep agreement with the scalar scorer at rounding level
    out = np.empty((len(queries), len(E)))
    for q, vec in enumerate(queries):
        diff = vec - E
        out[q] = -np.einsum("ij,ij->i", diff, diff)
    return out
