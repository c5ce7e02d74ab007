"""Acceptance gate: one test group per criterion, summarised at the end of the run.

Criteria 1-7 are fast and self-contained. Criteria 8-14 need the WN18RR
dataset: point ``KGREL_WN18RR`` at a directory holding ``train.txt``,
``valid.txt`` and ``test.txt``. Trained checkpoints are cached in
``KGREL_MODEL_DIR`` (default ``<dataset>/checkpoints``) and trained on first
use with the default hyper-parameters, which takes hours per model.
``KGREL_EPOCHS`` overrides the epoch count. Without the dataset those
criteria fail with an explanatory message.
"""

import functools
import os
from pathlib import Path

import numpy as np
import pytest

from conftest import ALL_KINDS, random_params
from oracles import (
    brute_rank,
    enumerate_predictions,
    finite_difference,
    khs_oracle,
    max_relative_error,
    pearson_offdiag,
    random_batch,
)
from kgrel.analysis import RelationGraph, khs, path_stats, relation_graph, structure_report, symmetry_score
from kgrel.checkpoint import load_checkpoint, save_checkpoint
from kgrel.cli import main
from kgrel.data import build_vocab, dataset_fingerprint, encode_store, load_dataset, normalize_relation
from kgrel.evaluation import EvalConfig, prediction_stats, rank_triples, ranking_report
from kgrel.models import ModelKind, score
from kgrel.training import TrainConfig, gradients, train
from kgrel.workers import worker_count

FIXTURES = Path(__file__).parent / "fixtures"
criterion = pytest.mark.criterion


# 1 -----------------------------------------------------------------------------

@criterion(1, "analytic gradients match central finite differences (h=1e-5, rel err < 1e-4)")
@pytest.mark.parametrize("kind", ALL_KINDS)
def test_c1_gradient_check(kind):
    worst = 0.0
    for restart in range(10):
        p = random_params(kind, n_e=6, n_r=2, d_e=4, d_r=3, seed=1000 * ALL_KINDS.index(kind) + restart)
        batch = random_batch(np.random.default_rng(restart), 6, 2, size=10)
        analytic = gradients(p, batch)
        numeric = finite_difference(p, batch, h=1e-5)
        for name, arr in p.tensors().items():
            worst = max(worst, max_relative_error(analytic.dense(name, arr.shape), numeric[name]))
    assert worst < 1e-4, f"{kind.value}: max relative error {worst:.2e}"


# 2 -----------------------------------------------------------------------------

def _random_instance(rng, kind):
    n_e = int(rng.integers(2, 21))
    n_r = int(rng.integers(1, 4))
    triples = {(int(rng.integers(n_e)), int(rng.integers(n_r)), int(rng.integers(n_e)))
               for _ in range(int(rng.integers(3, 3 * n_e)))}
    triples = sorted(triples)
    rng.shuffle(triples)
    cut = max(1, len(triples) // 2)
    labels = [(f"e{s}", f"r{r}", f"e{o}") for s, r, o in triples]
    vocab = build_vocab([(f"e{i}", "r0", f"e{i}") for i in range(n_e)] + [("e0", f"r{i}", "e0") for i in range(n_r)])
    store = encode_store(vocab, labels[cut:], [], labels[:cut])
    params = random_params(kind, n_e=n_e, n_r=n_r, d_e=3, d_r=2, seed=int(rng.integers(1 << 30)))
    return params, store


@criterion(2, "rank_triple equals a brute-force full-sort oracle on 50 random instances")
def test_c2_ranking_oracle():
    rng = np.random.default_rng(2)
    mismatches = 0
    for i in range(50):
        kind = ALL_KINDS[i % len(ALL_KINDS)]
        params, store = _random_instance(rng, kind)
        known = {tuple(t) for arr in (store.train, store.valid, store.test) for t in arr.tolist()}
        for filtered in (True, False):
            for rec in rank_triples(params, store.test, store, filtered):
                t = rec.triple
                mismatches += rec.object_rank != brute_rank(params, t, known, "object", filtered)
                mismatches += rec.subject_rank != brute_rank(params, t, known, "subject", filtered)
    assert mismatches == 0


# 3 -----------------------------------------------------------------------------

@criterion(3, "khs is 1 on random DAGs, 0 on strongly connected graphs, 0.5 on the hand case")
def test_c3_khs():
    rng = np.random.default_rng(3)
    for _ in range(100):
        n = int(rng.integers(2, 15))
        perm = rng.permutation(n)
        pairs = [(int(perm[i]), int(perm[j])) for i in range(n) for j in range(i + 1, n)]
        chosen = rng.random(len(pairs)) < 0.3
        edges = [p for p, c in zip(pairs, chosen) if c] or [pairs[0]]
        assert khs(RelationGraph.from_edges(edges)) == 1.0
    for _ in range(100):
        n = int(rng.integers(2, 15))
        perm = rng.permutation(n).tolist()
        edges = [(perm[i], perm[(i + 1) % n]) for i in range(n)]
        edges += [tuple(map(int, rng.integers(0, n, 2))) for _ in range(int(rng.integers(0, 2 * n)))]
        assert khs(RelationGraph.from_edges(edges)) == 0.0
    hand = [(0, 1), (1, 0), (0, 2)]
    assert khs(RelationGraph.from_edges(hand)) == 0.5 == khs_oracle([0, 1, 2], hand)


# 4 -----------------------------------------------------------------------------

@criterion(4, "symmetry score is +/-1 on (anti)symmetrised matrices and equals the Pearson oracle")
def test_c4_symmetry_score():
    rng = np.random.default_rng(4)
    for _ in range(50):
        M = rng.normal(size=(20, 20))
        assert abs(symmetry_score(M + M.T) - 1.0) <= 1e-12
        assert abs(symmetry_score(M - M.T) + 1.0) <= 1e-12
    for _ in range(50):
        d = int(rng.integers(3, 21))
        R = rng.normal(rng.normal(), rng.uniform(0.1, 3.0), size=(d, d))
        assert abs(symmetry_score(R) - pearson_offdiag(R)) <= 1e-10


# 5 -----------------------------------------------------------------------------

@criterion(5, "DistMult score(s, r, o) == score(o, r, s) bit-exactly")
def test_c5_distmult_symmetry():
    rng = np.random.default_rng(5)
    for trial in range(20):
        p = random_params("DistMult", n_e=12, n_r=3, d_e=int(rng.integers(1, 50)), seed=trial, scale=2.0)
        for s, r, o in rng.integers(0, [12, 3, 12], size=(50, 3)).tolist():
            assert score(p, s, r, o) == score(p, o, r, s)


# 6 -----------------------------------------------------------------------------

@criterion(6, "prediction_stats equals an exhaustive enumeration oracle on a tiny KG")
@pytest.mark.parametrize("kind", ALL_KINDS)
def test_c6_prediction_stats(kind):
    ds = load_dataset(FIXTURES / "tiny")
    store = ds.store
    if kind is ModelKind.MURE:
        params, _ = load_checkpoint(FIXTURES / "tiny_mure.kgrl")
    else:
        params = random_params(kind, n_e=store.n_entities, n_r=store.n_relations, seed=6, scale=1.5)
    for threshold in (0.3, 0.5, 0.8):
        stats = prediction_stats(params, store, threshold)
        oracle = enumerate_predictions(params, store, threshold)
        got = {row.relation: [row.n_pairs, row.n_train_true, row.n_train_positive, row.n_test_true,
                              row.n_test_positive, row.n_other_positive] for row in stats.rows}
        assert got == oracle
        for row in stats.rows:
            assert row.histogram[0].sum() == row.n_train_true
            assert row.histogram[1].sum() == row.n_test_true
            assert row.histogram.sum() == row.n_pairs * store.n_entities


# 7 -----------------------------------------------------------------------------

@criterion(7, "checkpoint round-trip is bit-exact and golden CLI output is stable")
@pytest.mark.parametrize("kind", ALL_KINDS)
def test_c7_checkpoint_round_trip(tmp_path, kind):
    p = random_params(kind, n_e=9, n_r=3, d_e=5, d_r=2, seed=7)
    save_checkpoint(p, {"seed": 7}, tmp_path / "m.kgrl")
    q, _ = load_checkpoint(tmp_path / "m.kgrl")
    assert all(q.tensors()[k].tobytes() == v.tobytes() for k, v in p.tensors().items())
    save_checkpoint(q, {"seed": 7}, tmp_path / "n.kgrl")
    assert (tmp_path / "m.kgrl").read_bytes() == (tmp_path / "n.kgrl").read_bytes()


@criterion(7, "checkpoint round-trip is bit-exact and golden CLI output is stable")
def test_c7_golden_cli(tmp_path):
    golden = (FIXTURES / "golden_eval.csv").read_bytes()
    for run in ("first", "second"):
        out = tmp_path / run
        code = main(["eval", "--data", str(FIXTURES / "tiny"), "--checkpoint", str(FIXTURES / "tiny_mure.kgrl"),
                     "--ks", "1", "3", "10", "--no-figures", "--out", str(out)])
        assert code == 0
        assert (out / "ranking.csv").read_bytes() == golden


# desk-scale reproduction ---------------------------------------------------------

REFERENCE_HITS10 = {"TransE": 0.38, "MuRE_I": 0.52, "DistMult": 0.51, "TuckER": 0.53, "MuRE": 0.57}


@functools.lru_cache(maxsize=None)
def _wn18rr():
    root = os.environ.get("KGREL_WN18RR")
    if not root or not Path(root, "train.txt").is_file():
        pytest.fail("WN18RR dataset not available: set KGREL_WN18RR to a directory "
                    "with train.txt, valid.txt and test.txt", pytrace=False)
    return load_dataset(root, taxonomy="wn18rr")


@functools.lru_cache(maxsize=None)
def _trained(kind: str):
    ds = _wn18rr()
    cache = Path(os.environ.get("KGREL_MODEL_DIR") or Path(os.environ["KGREL_WN18RR"]) / "checkpoints")
    path = cache / f"{kind}.kgrl"
    if path.is_file():
        params, meta = load_checkpoint(path)
        if meta.get("dataset_fingerprint") == dataset_fingerprint(ds.store):
            return params
    config = TrainConfig(model=kind, epochs=int(os.environ.get("KGREL_EPOCHS", 500)),
                         seed=0, workers=worker_count())
    params, log = train(ds.store, config)
    cache.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, {"dataset_fingerprint": dataset_fingerprint(ds.store),
                             "train_config": config.to_dict(),
                             "epochs_completed": len(log.epoch_loss)}, path)
    return params


@functools.lru_cache(maxsize=None)
def _ranking(kind: str):
    ds = _wn18rr()
    return ranking_report(_trained(kind), ds.store, ds.taxonomy, EvalConfig((10,)),
                          relation_names=ds.vocab.relations, hidden=ds.hidden_relations())


@functools.lru_cache(maxsize=None)
def _predictions(kind: str):
    ds = _wn18rr()
    return prediction_stats(_trained(kind), ds.store, 0.5, ds.taxonomy,
                            relation_names=ds.vocab.relations, hidden=ds.hidden_relations())


def _structure(kind: str | None, which):
    ds = _wn18rr()
    params = _trained(kind) if kind else None
    return structure_report(params, ds.store, ds.taxonomy, ds.vocab.relations,
                            ds.hidden_relations(), which=which)


@pytest.mark.slow
@criterion(8, "WN18RR overall hits@10 within 0.05 of the reference values; MuRE > DistMult > TransE")
def test_c8_overall_hits():
    hits = {kind: _ranking(kind).overall.hits[10] for kind in REFERENCE_HITS10}
    off = {k: round(v, 3) for k, v in hits.items() if abs(v - REFERENCE_HITS10[k]) > 0.05}
    assert not off, f"outside tolerance: {off}"
    assert hits["MuRE"] > hits["DistMult"] > hits["TransE"]


@pytest.mark.slow
@criterion(9, "mean hits@10 over type-R relations exceeds type-C for every model")
@pytest.mark.parametrize("kind", list(REFERENCE_HITS10))
def test_c9_type_r_beats_type_c(kind):
    rows = _ranking(kind).rows
    mean = {t: np.mean([r.hits[10] for r in rows if r.rtype == t]) for t in ("R", "C")}
    assert mean["R"] > mean["C"], mean


@pytest.mark.slow
@criterion(10, "TuckER symmetry: every type-R relation > 0.4, every S/C relation < 0.2")
def test_c10_tucker_symmetry():
    report = _structure("TuckER", ["symmetry"])
    for row in report.rows:
        if row.rtype == "R":
            assert row.symmetry > 0.4, (row.name, row.symmetry)
        elif row.rtype in ("S", "C"):
            assert row.symmetry < 0.2, (row.name, row.symmetry)


@pytest.mark.slow
@criterion(11, "MuRE and MuRE_I: mean type-R vector norm below the S and C mean")
@pytest.mark.parametrize("kind", ["MuRE", "MuRE_I"])
def test_c11_vector_norms(kind):
    rows = _structure(kind, ["norms"]).rows
    r_mean = np.mean([r.vector_norm for r in rows if r.rtype == "R"])
    sc_mean = np.mean([r.vector_norm for r in rows if r.rtype in ("S", "C")])
    assert r_mean < sc_mean, (r_mean, sc_mean)


@pytest.mark.slow
@criterion(12, "MuRE eigen-profile area: type R exceeds S and exceeds C")
def test_c12_eigen_profiles():
    means = _structure("MuRE", ["eigen"]).type_means("eigen_area")
    assert means["R"] > means["S"] and means["R"] > means["C"], means


@pytest.mark.slow
@criterion(13, "independent predictions: MuRE test accuracy 0.50 +/- 0.07, DistMult/TuckER <= 0.44, "
               "MuRE_I other truths > MuRE")
def test_c13_prediction_reproduction():
    mure = _predictions("MuRE").overall
    assert abs(mure.test_accuracy - 0.50) <= 0.07, mure.test_accuracy
    for kind in ("DistMult", "TuckER"):
        assert _predictions(kind).overall.test_accuracy <= 0.44, kind
    assert _predictions("MuRE_I").overall.avg_other_truths > mure.avg_other_truths


@pytest.mark.slow
@criterion(14, "WN18RR structure: hypernym khs >= 0.98, max path 18 +/- 2, avg 4.5 +/- 0.5; "
               "derivationally_related_form khs <= 0.10")
def test_c14_structure_without_training():
    ds = _wn18rr()
    ids = {normalize_relation(name): i for i, name in enumerate(ds.vocab.relations)}
    hyp = relation_graph(ds.store, ids["hypernym"])
    drf = relation_graph(ds.store, ids["derivationally_related_form"])
    longest, mean = path_stats(hyp)
    assert khs(hyp) >= 0.98
    assert abs(longest - 18) <= 2 and abs(mean - 4.5) <= 0.5, (longest, mean)
    assert khs(drf) <= 0.10
