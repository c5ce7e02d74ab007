"""Negative sampling, sigmoid cross-entropy, analytic gradients and sparse Adam."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple, TextIO

import numpy as np

from .data import TripleStore
from .models import Dims, ModelKind, ModelParams, init_params, score_triples, sigmoid

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

TUCKER_RELATION_DIM = 30


class TrainingError(RuntimeError):
    """Numerical failure during optimisation."""


@dataclass
class TrainConfig:
    model: ModelKind | str = ModelKind.MURE
    entity_dim: int = 200
    relation_dim: int | None = None
    learning_rate: float = 0.001
    batch_size: int = 128
    n_negatives: int = 50
    epochs: int = 500
    seed: int = 0
    workers: int = 1
    # validation hits@10 every `eval_every` epochs; 0 disables
    eval_every: int = 0
    # evaluations without improvement before stopping; None disables
    patience: int | None = None
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    def __post_init__(self):
        self.model = ModelKind.parse(self.model)
        if self.relation_dim is None:
            self.relation_dim = TUCKER_RELATION_DIM if self.model is ModelKind.TUCKER else self.entity_dim
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.n_negatives < 1:
            raise ValueError("n_negatives must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.entity_dim < 1 or self.relation_dim < 1:
            raise ValueError("dimensions must be positive")

    def dims(self, n_entities: int, n_relations: int) -> Dims:
        return Dims(n_entities, n_relations, self.entity_dim, self.relation_dim)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["model"] = self.model.value
        return out


class LabeledBatch(NamedTuple):
    s: np.ndarray
    r: np.ndarray
    o: np.ndarray
    y: np.ndarray

    @classmethod
    def from_triples(cls, triples, labels) -> "LabeledBatch":
        arr = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], np.asarray(labels, dtype=np.float64))

    def __len__(self) -> int:
        return len(self.y)


def sample_negatives(triple, n: int, n_entities: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` corruptions of one positive triple; see :func:`sample_negatives_batch`."""
    return sample_negatives_batch(np.asarray(triple).reshape(1, 3), n, n_entities, rng)


def sample_negatives_batch(
    positives: np.ndarray, n: int, n_entities: int, rng: np.random.Generator
) -> np.ndarray:
    """Corrupt each positive ``n`` times, returning an array of shape (len*n, 3).

    Draw ``j`` replaces the object when ``j`` is even and the subject when odd,
    with a uniform entity. A replacement equal to the original entity is
    redrawn so no negative reproduces its positive.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if n_entities < 2:
        raise ValueError("corruption needs at least 2 entities")
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    draws = rng.integers(0, n_entities, size=(len(positives), n))
    obj_slot = (np.arange(n) % 2 == 0)[None, :]
    original = np.where(obj_slot, positives[:, 2:3], positives[:, 0:1])
    clash = draws == original
    while clash.any():
        draws[clash] = rng.integers(0, n_entities, size=int(clash.sum()))
        clash = draws == original
    neg = np.repeat(positives[:, None, :], n, axis=1)
    neg[:, :, 2] = np.where(obj_slot, draws, neg[:, :, 2])
    neg[:, :, 0] = np.where(obj_slot, neg[:, :, 0], draws)
    return neg.reshape(-1, 3)


def _bce_terms(phis: np.ndarray, labels: np.ndarray) -> np.ndarray:
    # -[y log s(x) + (1-y) log(1-s(x))] = max(x,0) - x*y + log(1+exp(-|x|))
    return np.maximum(phis, 0.0) - phis * labels + np.log1p(np.exp(-np.abs(phis)))


def bce_loss(phis, labels) -> float:
    """Mean binary cross-entropy of ``sigmoid(phis)`` against 0/1 labels."""
    phis = np.asarray(phis, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if phis.shape != labels.shape:
        raise ValueError(f"shape mismatch: scores {phis.shape} vs labels {labels.shape}")
    if phis.size == 0:
        raise ValueError("empty batch")
    return float(np.mean(_bce_terms(phis, labels)))


class SparseGrad(NamedTuple):
    """Gradient rows for one parameter block; ``rows`` is None for dense blocks."""

    rows: np.ndarray | None
    values: np.ndarray


@dataclass
class GradientSet:
    blocks: dict[str, SparseGrad] = field(default_factory=dict)
    loss: float = 0.0
    count: int = 0

    def __getitem__(self, name: str) -> SparseGrad:
        return self.blocks[name]

    def __contains__(self, name: str) -> bool:
        return name in self.blocks

    def dense(self, name: str, shape) -> np.ndarray:
        out = np.zeros(shape)
        grad = self.blocks.get(name)
        if grad is None:
            return out
        if grad.rows is None:
            out += grad.values
        else:
            out[grad.rows] = grad.values
        return out

    def scaled(self, factor: float) -> "GradientSet":
        return GradientSet(
            {k: SparseGrad(g.rows, g.values * factor) for k, g in self.blocks.items()},
            self.loss * factor,
            self.count,
        )


def _accumulate(ids: np.ndarray, contrib: np.ndarray) -> SparseGrad:
    rows, inverse = np.unique(ids, return_inverse=True)
    values = np.zeros((len(rows),) + contrib.shape[1:])
    np.add.at(values, inverse, contrib)
    return SparseGrad(rows, values)


def _merge(parts: list[GradientSet]) -> GradientSet:
    merged = GradientSet(count=sum(p.count for p in parts), loss=sum(p.loss for p in parts))
    names = []
    for part in parts:
        names += [n for n in part.blocks if n not in names]
    for name in names:
        pieces = [p.blocks[name] for p in parts if name in p.blocks]
        if pieces[0].rows is None:
            total = pieces[0].values.copy()
            for piece in pieces[1:]:
                total += piece.values
            merged.blocks[name] = SparseGrad(None, total)
        else:
            merged.blocks[name] = _accumulate(
                np.concatenate([p.rows for p in pieces]),
                np.concatenate([p.values for p in pieces]),
            )
    return merged


def gradients(params: ModelParams, batch: LabeledBatch, reduction: str = "mean") -> GradientSet:
    """Analytic gradient of the batch cross-entropy.

    With ``reduction="sum"`` the per-sample terms are added instead of
    averaged. Only rows touched by the batch appear in the result.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    s, r, o, y = batch
    phi = score_triples(params, s, r, o)
    scale = 1.0 / len(y) if reduction == "mean" else 1.0
    loss = float(np.sum(_bce_terms(phi, y))) * scale
    g = ((sigmoid(phi) - y) * scale)[:, None]

    kind = params.kind
    E = params.entity_emb
    es, eo = E[s], E[o]
    out = GradientSet(loss=loss, count=len(y))

    if kind.is_distance:
        diag = params.relation_diag[r] if kind is ModelKind.MURE else None
        head = es * diag if diag is not None else es
        v = head + params.relation_vec[r] - eo
        d_head = -2.0 * g * v
        d_es = d_head * diag if diag is not None else d_head
        out.blocks["entity_emb"] = _accumulate(np.concatenate([s, o]), np.concatenate([d_es, -d_head]))
        out.blocks["relation_vec"] = _accumulate(r, d_head)
        if diag is not None:
            out.blocks["relation_diag"] = _accumulate(r, d_head * es)
        if kind.has_bias:
            out.blocks["bias_s"] = _accumulate(s, g[:, 0])
            out.blocks["bias_o"] = _accumulate(o, g[:, 0])
    elif kind is ModelKind.DISTMULT:
        diag = params.relation_diag[r]
        out.blocks["entity_emb"] = _accumulate(
            np.concatenate([s, o]), np.concatenate([g * diag * eo, g * diag * es])
        )
        out.blocks["relation_diag"] = _accumulate(r, g * es * eo)
    elif kind is ModelKind.TUCKER:
        d_es, d_wr, d_eo, d_W = _tucker_grads(params.core_tensor, es, params.relation_emb[r], eo, g)
        out.blocks["entity_emb"] = _accumulate(np.concatenate([s, o]), np.concatenate([d_es, d_eo]))
        out.blocks["relation_emb"] = _accumulate(r, d_wr)
        out.blocks["core_tensor"] = SparseGrad(None, d_W)
    return out


def _tucker_grads(W, a, c, b, g, chunk: int = 1024):
    d_e, d_r, _ = W.shape
    W_i = W.reshape(d_e, d_r * d_e)                   # (i, jk)
    W_k = W.transpose(2, 0, 1).reshape(d_e, d_e * d_r)  # (k, ij)
    d_a = np.empty_like(a)
    d_c = np.empty_like(c)
    d_b = np.empty_like(b)
    d_W = np.zeros((d_e, d_r * d_e))
    for lo in range(0, len(a), chunk):
        sl = slice(lo, lo + chunk)
        aa, cc, bb, gg = a[sl], c[sl], b[sl], g[sl]
        cb = (cc[:, :, None] * bb[:, None, :]).reshape(len(aa), d_r * d_e)
        d_a[sl] = gg * (cb @ W_i.T)
        ab_w = (aa @ W_i).reshape(len(aa), d_r, d_e)
        d_c[sl] = gg * np.einsum("njk,nk->nj", ab_w, bb)
        ac = (aa[:, :, None] * cc[:, None, :]).reshape(len(aa), d_e * d_r)
        d_b[sl] = gg * (ac @ W_k.T)
        d_W += (gg * aa).T @ cb
    return d_a, d_c, d_b, d_W.reshape(d_e, d_r, d_e)


@dataclass
class AdamState:
    first: dict[str, np.ndarray]
    second: dict[str, np.ndarray]
    step: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def zeros_like(cls, params: ModelParams, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
        tensors = params.tensors()
        return cls(
            {k: np.zeros_like(v) for k, v in tensors.items()},
            {k: np.zeros_like(v) for k, v in tensors.items()},
            0, beta1, beta2, eps,
        )


def adam_step(params: ModelParams, grads: GradientSet, state: AdamState, lr: float):
    """One bias-corrected Adam update, applied in place to the rows in ``grads``.

    Rows absent from ``grads`` keep their parameters and moments untouched.
    Returns ``(params, state)``.
    """
    for name, grad in grads.blocks.items():
        if not np.all(np.isfinite(grad.values)):
            bad = np.argwhere(~np.isfinite(grad.values))[0]
            row = int(grad.rows[bad[0]]) if grad.rows is not None else tuple(int(i) for i in bad)
            raise TrainingError(f"non-finite gradient in {name} at row {row}")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** state.step
    corr2 = 1.0 - b2 ** state.step
    for name, grad in grads.blocks.items():
        p = getattr(params, name)
        m, v = state.first[name], state.second[name]
        idx = slice(None) if grad.rows is None else grad.rows
        gv = grad.values
        m_new = b1 * m[idx] + (1.0 - b1) * gv
        v_new = b2 * v[idx] + (1.0 - b2) * gv * gv
        m[idx] = m_new
        v[idx] = v_new
        p[idx] -= lr * (m_new / corr1) / (np.sqrt(v_new / corr2) + state.eps)
    return params, state


@dataclass
class TrainLog:
    epoch_loss: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    validation: list[tuple[int, float]] = field(default_factory=list)
    stopped_early: bool = False


def _batch_gradients(params, batch: LabeledBatch, workers: int, pool) -> GradientSet:
    if workers == 1 or len(batch) < 2 * workers:
        return gradients(params, batch)
    bounds = np.linspace(0, len(batch), workers + 1).astype(int)
    chunks = [LabeledBatch(*(a[lo:hi] for a in batch)) for lo, hi in zip(bounds[:-1], bounds[1:])]
    parts = list(pool.map(lambda c: gradients(params, c, reduction="sum"), chunks))
    return _merge(parts).scaled(1.0 / len(batch))


def train(
    store: TripleStore,
    config: TrainConfig,
    progress: TextIO | None = None,
    validate: Callable[[ModelParams], float] | None = None,
) -> tuple[ModelParams, TrainLog]:
    """Fit a model on ``store.train``.

    Each epoch shuffles the positives, splits them into mini-batches and pairs
    every positive with ``config.n_negatives`` corruptions (label 0). One line
    ``epoch=<n> loss=<f> seconds=<f>`` per epoch goes to ``progress``.
    ``validate`` maps params to a validation score (e.g. hits@10); it is
    called every ``config.eval_every`` epochs when that is positive.
    """
    train_triples = store.train
    if len(train_triples) == 0:
        raise ValueError("training split is empty")
    dims = config.dims(store.n_entities, store.n_relations)
    params = init_params(config.model, dims, config.seed)
    state = AdamState.zeros_like(params, config.beta1, config.beta2, config.eps)
    shuffle_seq, negative_seq = np.random.SeedSequence(config.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    negative_rng = np.random.default_rng(negative_seq)
    log = TrainLog()
    best, best_score, stale = None, -np.inf, 0

    n_neg = config.n_negatives
    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for epoch in range(1, config.epochs + 1):
            start = time.perf_counter()
            order = shuffle_rng.permutation(len(train_triples))
            total, count = 0.0, 0
            for b, lo in enumerate(range(0, len(order), config.batch_size)):
                pos = train_triples[order[lo:lo + config.batch_size]]
                neg = sample_negatives_batch(pos, n_neg, store.n_entities, negative_rng)
                triples = np.concatenate([pos, neg])
                labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
                batch = LabeledBatch.from_triples(triples, labels)
                grads = _batch_gradients(params, batch, config.workers, pool)
                if not np.isfinite(grads.loss):
                    raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
                try:
                    adam_step(params, grads, state, config.learning_rate)
                except TrainingError as exc:
                    raise TrainingError(f"epoch {epoch}, batch {b}: {exc}") from None
                total += grads.loss * len(batch)
                count += len(batch)
            seconds = time.perf_counter() - start
            log.epoch_loss.append(total / count)
            log.epoch_seconds.append(seconds)
            if progress is not None:
                progress.write(f"epoch={epoch} loss={total / count:.6f} seconds={seconds:.3f}\n")
                progress.flush()

            if validate is not None and config.eval_every and epoch % config.eval_every == 0:
                score = float(validate(params))
                log.validation.append((epoch, score))
                if score > best_score:
                    best_score, stale = score, 0
                    if config.patience is not None:
                        best = params.copy()
                else:
                    stale += 1
                    if config.patience is not None and stale >= config.patience:
                        log.stopped_early = True
                        logger.info("early stop at epoch %d", epoch)
                        break
    finally:
        if pool is not None:
            pool.shutdown()
    if log.stopped_early and best is not None:
        params = best
    return params, log

