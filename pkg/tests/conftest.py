import numpy as np
import pytest

from kgrel.data import build_vocab, encode_store
from kgrel.models import Dims, ModelKind, init_params

ALL_KINDS = list(ModelKind)


def randomize(params, rng, scale=0.5):
    """Overwrite every block with N(0, scale^2) draws so nothing sits at a special point."""
    for arr in params.tensors().values():
        arr[...] = rng.normal(0.0, scale, size=arr.shape)
    return params


def random_params(kind, n_e=6, n_r=2, d_e=4, d_r=3, seed=0, scale=0.5):
    params = init_params(kind, Dims(n_e, n_r, d_e, d_r), seed)
    return randomize(params, np.random.default_rng(seed + 1000), scale)


def injective_kg():
    """8 entities, 2 relations, 12 triples; no (s, r) or (r, o) pair repeats,
    so no positive can be drawn as another positive's corruption."""
    return (
        [(f"e{i}", "r0", f"e{(i + 1) % 8}") for i in range(6)]
        + [(f"e{i}", "r1", f"e{(i + 3) % 8}") for i in range(6)]
    )


@pytest.fixture
def tiny_kg():
    triples = injective_kg()
    vocab = build_vocab(triples)
    return vocab, encode_store(vocab, triples)


@pytest.fixture
def small_store():
    """Random 15-entity store with all three splits populated."""
    rng = np.random.default_rng(7)
    seen = set()
    while len(seen) < 60:
        s, o = rng.choice(15, 2, replace=False)
        seen.add((f"n{s}", f"r{rng.integers(3)}", f"n{o}"))
    triples = sorted(seen)
    rng.shuffle(triples)
    train, valid, test = triples[:40], triples[40:50], triples[50:]
    vocab = build_vocab(train, valid, test)
    return vocab, encode_store(vocab, train, valid, test)


# acceptance summary ----------------------------------------------------------

_criteria: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "failed": [], "ran": 0})
    if report.when == "call" or (report.when == "setup" and not report.passed):
        entry["ran"] += 1
        if not report.passed:
            reason = report.longrepr.reprcrash.message if hasattr(report.longrepr, "reprcrash") else str(report.longrepr)
            entry["failed"].append(reason.splitlines()[0] if reason else item.name)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = "FAIL" if entry["failed"] or not entry["ran"] else "PASS"
        line = f"criterion {number:2d} {status}: {entry['title']}"
        if entry["failed"]:
            line += f" ({entry['failed'][0][:150]})"
        terminalreporter.write_line(line)
