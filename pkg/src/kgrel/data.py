"""Triple files, vocabularies, indexed stores and relation taxonomies."""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")
RELATION_TYPES = ("R", "S", "C")

# membership bit flags
TRAIN = 1
VALID = 2
TEST = 4

NELL_HOLDOUT_SIZE = 20000

# relations kept in the data but left out of per-relation reports
DEFAULT_HIDDEN_RELATIONS = ("similar_to",)


class DataError(ValueError):
    """Malformed dataset, vocabulary or taxonomy input."""


class RawTriple(NamedTuple):
    subject: str
    relation: str
    object: str


def load_split(path: str | os.PathLike) -> list[RawTriple]:
    """Read a tab-separated ``subject<TAB>relation<TAB>object`` file.

    Blank lines are skipped. Any other line must carry exactly three
    non-empty fields.
    """
    triples = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 3 or not all(fields):
                raise DataError(
                    f"{path}:{lineno}: expected 3 non-empty tab-separated fields, "
                    f"got {len(fields)}"
                )
            triples.append(RawTriple(*fields))
    return triples


def write_split(path: str | os.PathLike, triples: Iterable[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for s, r, o in triples:
            handle.write(f"{s}\t{r}\t{o}\n")


@dataclass(frozen=True)
class Vocab:
    entities: tuple[str, ...]
    relations: tuple[str, ...]
    entity_to_id: dict[str, int] = field(repr=False)
    relation_to_id: dict[str, int] = field(repr=False)

    @classmethod
    def from_labels(cls, entities: Sequence[str], relations: Sequence[str]) -> "Vocab":
        ents = tuple(entities)
        rels = tuple(relations)
        e2i = {label: i for i, label in enumerate(ents)}
        r2i = {label: i for i, label in enumerate(rels)}
        if len(e2i) != len(ents) or len(r2i) != len(rels):
            raise DataError("vocabulary labels must be unique")
        return cls(ents, rels, e2i, r2i)

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def encode(self, triple: Sequence[str]) -> tuple[int, int, int]:
        s, r, o = triple
        try:
            return self.entity_to_id[s], self.relation_to_id[r], self.entity_to_id[o]
        except KeyError as exc:
            raise DataError(f"unknown label {exc.args[0]!r}") from None

    def decode(self, triple: Sequence[int]) -> RawTriple:
        s, r, o = triple
        return RawTriple(self.entities[s], self.relations[r], self.entities[o])


def build_vocab(*splits: Iterable[RawTriple]) -> Vocab:
    """Assign dense ids in order of first appearance across the given splits."""
    entities: dict[str, None] = {}
    relations: dict[str, None] = {}
    for split in splits:
        for s, r, o in split:
            entities.setdefault(s)
            relations.setdefault(r)
            entities.setdefault(o)
    return Vocab.from_labels(list(entities), list(relations))


@dataclass(frozen=True)
class TripleStore:
    """Integer-encoded splits plus (s, r) -> objects and (r, o) -> subjects
    indices over the union of all splits.

    Split arrays have shape ``(n, 3)`` with columns ``s, r, o``.
    """

    n_entities: int
    n_relations: int
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    sr_index: dict[tuple[int, int], frozenset[int]] = field(repr=False)
    ro_index: dict[tuple[int, int], frozenset[int]] = field(repr=False)
    membership: dict[tuple[int, int, int], int] = field(repr=False)

    def split(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)

    def flags(self, s: int, r: int, o: int) -> int:
        """Bitwise OR of TRAIN/VALID/TEST for the triple, 0 if unknown."""
        return self.membership.get((s, r, o), 0)

    def is_known(self, s: int, r: int, o: int) -> bool:
        return (s, r, o) in self.membership

    def relation_counts(self, split: str) -> np.ndarray:
        return np.bincount(self.split(split)[:, 1], minlength=self.n_relations)


def _encode_split(vocab: Vocab, raw: Iterable[Sequence[str]], name: str, dedupe: bool) -> np.ndarray:
    rows = [vocab.encode(t) for t in raw]
    arr = np.asarray(rows, dtype=np.int64).reshape(-1, 3)
    if len(arr):
        _, first = np.unique(arr, axis=0, return_index=True)
        if len(first) != len(arr):
            n_dup = len(arr) - len(first)
            if not dedupe:
                raise DataError(f"{name} split contains {n_dup} duplicate triple(s)")
            logger.warning("dropping %d duplicate triple(s) from %s split", n_dup, name)
            arr = arr[np.sort(first)]
    return arr


def encode_store(
    vocab: Vocab,
    train: Iterable[Sequence[str]],
    valid: Iterable[Sequence[str]] = (),
    test: Iterable[Sequence[str]] = (),
    dedupe: bool = False,
) -> TripleStore:
    """Encode raw splits and build the truth indices used for filtering.

    Duplicate triples inside one split raise :class:`DataError` unless
    ``dedupe`` is set, in which case later copies are dropped with a warning.
    """
    arrays = {
        name: _encode_split(vocab, raw, name, dedupe)
        for name, raw in zip(SPLITS, (train, valid, test))
    }
    sr: dict[tuple[int, int], set[int]] = {}
    ro: dict[tuple[int, int], set[int]] = {}
    membership: dict[tuple[int, int, int], int] = {}
    for name, flag in zip(SPLITS, (TRAIN, VALID, TEST)):
        for s, r, o in arrays[name].tolist():
            sr.setdefault((s, r), set()).add(o)
            ro.setdefault((r, o), set()).add(s)
            membership[(s, r, o)] = membership.get((s, r, o), 0) | flag
    return TripleStore(
        n_entities=vocab.n_entities,
        n_relations=vocab.n_relations,
        train=arrays["train"],
        valid=arrays["valid"],
        test=arrays["test"],
        sr_index={k: frozenset(v) for k, v in sr.items()},
        ro_index={k: frozenset(v) for k, v in ro.items()},
        membership=membership,
    )


def resplit_nell(
    train: Sequence[RawTriple],
    valid: Sequence[RawTriple],
    test: Sequence[RawTriple],
    seed: int,
    holdout: int = NELL_HOLDOUT_SIZE,
) -> tuple[list[RawTriple], list[RawTriple], list[RawTriple]]:
    """Pool all splits and draw fresh validation and test sets.

    ``holdout`` triples each go to the new validation and test sets, drawn
    uniformly without replacement; the rest stays in the new training set
    in its pooled order.
    """
    union = list(train) + list(valid) + list(test)
    if len(union) < 2 * holdout:
        raise DataError(
            f"combined dataset has {len(union)} triples, need at least {2 * holdout}"
        )
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(union), size=2 * holdout, replace=False)
    keep = np.ones(len(union), dtype=bool)
    keep[picked] = False
    new_valid = [union[i] for i in picked[:holdout]]
    new_test = [union[i] for i in picked[holdout:]]
    new_train = [union[i] for i in np.flatnonzero(keep)]
    return new_train, new_valid, new_test


def normalize_relation(label: str) -> str:
    """Canonical relation name: drops a NELL ``concept:`` style prefix and
    WN18RR's leading underscore."""
    name = label.rsplit(":", 1)[-1]
    return name.lstrip("_")


@dataclass(frozen=True)
class RelationTaxonomy:
    label_of: dict[int, str]
    unmatched: tuple[str, ...] = ()

    def get(self, relation: int, default: str = "") -> str:
        return self.label_of.get(relation, default)

    def relations_of(self, rtype: str) -> list[int]:
        return sorted(r for r, t in self.label_of.items() if t == rtype)


BUILTIN_TAXONOMIES = ("wn18rr", "nell995")


def _parse_taxonomy(lines: Iterable[str], source: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise DataError(f"{source}:{lineno}: expected 'relation<TAB>type'")
        label, rtype = fields[0].strip(), fields[1].strip()
        if rtype not in RELATION_TYPES:
            raise DataError(f"{source}:{lineno}: relation type {rtype!r} not in R/S/C")
        entries[label] = rtype
    return entries


def load_taxonomy(path: str | os.PathLike, vocab: Vocab) -> RelationTaxonomy:
    """Load a ``relation<TAB>R|S|C`` file and map it onto ``vocab``.

    ``path`` may also name a bundled taxonomy (``wn18rr`` or ``nell995``).
    Labels are matched after :func:`normalize_relation`; labels absent from
    the vocabulary are logged and kept in ``unmatched``.
    """
    if str(path) in BUILTIN_TAXONOMIES and not Path(path).exists():
        text = resources.files("kgrel.taxonomies").joinpath(f"{path}.tsv").read_text("utf-8")
        entries = _parse_taxonomy(text.splitlines(), str(path))
    else:
        with open(path, encoding="utf-8") as handle:
            entries = _parse_taxonomy(handle, str(path))

    by_name = {normalize_relation(label): i for i, label in enumerate(vocab.relations)}
    label_of: dict[int, str] = {}
    unmatched = []
    for label, rtype in entries.items():
        rid = vocab.relation_to_id.get(label)
        if rid is None:
            rid = by_name.get(normalize_relation(label))
        if rid is None:
            unmatched.append(label)
        else:
            label_of[rid] = rtype
    if unmatched:
        logger.warning("taxonomy relations not in vocabulary: %s", ", ".join(unmatched))
    return RelationTaxonomy(label_of, tuple(unmatched))


@dataclass(frozen=True)
class Dataset:
    vocab: Vocab
    store: TripleStore
    taxonomy: RelationTaxonomy | None = None

    def hidden_relations(self, names: Iterable[str] = DEFAULT_HIDDEN_RELATIONS) -> frozenset[int]:
        wanted = set(names)
        return frozenset(
            i for i, label in enumerate(self.vocab.relations)
            if normalize_relation(label) in wanted
        )


def load_dataset(
    directory: str | os.PathLike,
    taxonomy: str | os.PathLike | None = None,
    dedupe: bool = False,
) -> Dataset:
    """Load ``train.txt``, ``valid.txt`` and ``test.txt`` from ``directory``.

    The taxonomy comes from ``taxonomy`` when given (path or bundled name),
    otherwise from ``directory/taxonomy.tsv`` when that file exists.
    """
    directory = Path(directory)
    raw = [load_split(directory / f"{name}.txt") for name in SPLITS]
    vocab = build_vocab(*raw)
    store = encode_store(vocab, *raw, dedupe=dedupe)
    if taxonomy is None and (directory / "taxonomy.tsv").exists():
        taxonomy = directory / "taxonomy.tsv"
    tax = load_taxonomy(taxonomy, vocab) if taxonomy is not None else None
    return Dataset(vocab, store, tax)


def dataset_fingerprint(store: TripleStore) -> str:
    digest = hashlib.sha256()
    for name in SPLITS:
        arr = np.ascontiguousarray(store.split(name), dtype="<i8")
        digest.update(name.encode())
        digest.update(arr.tobytes())
    return digest.hexdigest()[:16]
