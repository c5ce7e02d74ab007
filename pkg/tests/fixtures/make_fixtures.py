"""Regenerate the committed fixtures.

Run from the repository root only when the fixture format changes on purpose:

    python3 tests/fixtures/make_fixtures.py

It writes a 12-entity dataset under ``tiny/``, a MuRE checkpoint trained on it
for 30 epochs, and the golden ``eval`` CSV produced from that checkpoint.
"""

import shutil
import tempfile
from pathlib import Path

import numpy as np

from kgrel.cli import main
from kgrel.data import write_split

HERE = Path(__file__).resolve().parent


def dataset_triples():
    rng = np.random.default_rng(2024)
    ents = [f"n{i:02d}" for i in range(12)]
    chain = [(ents[i], "_hypernym", ents[i + 1]) for i in range(0, 10)]
    sym = []
    for i in range(0, 12, 3):
        a, b = ents[i], ents[(i + 5) % 12]
        sym += [(a, "_verb_group", b), (b, "_verb_group", a)]
    parts = [(ents[i], "_has_part", ents[int(j)]) for i in range(12) for j in rng.choice(12, 1) if i != j]
    sim = [(ents[0], "_similar_to", ents[7]), (ents[7], "_similar_to", ents[0])]
    triples = sorted(set(chain + sym + parts + sim))
    order = rng.permutation(len(triples))
    triples = [triples[i] for i in order]
    return triples[:-8], triples[-8:-4], triples[-4:]


def main_():
    tiny = HERE / "tiny"
    tiny.mkdir(exist_ok=True)
    train, valid, test = dataset_triples()
    write_split(tiny / "train.txt", train)
    write_split(tiny / "valid.txt", valid)
    write_split(tiny / "test.txt", test)
    (tiny / "taxonomy.tsv").write_text("verb_group\tR\nhypernym\tS\nhas_part\tC\n")

    ckpt = HERE / "tiny_mure.kgrl"
    assert main(["train", "--data", str(tiny), "--model", "MuRE", "--dim", "6", "--epochs", "30",
                 "--lr", "0.01", "--batch-size", "16", "--negatives", "5", "--seed", "7",
                 "--out", str(ckpt)]) == 0
    with tempfile.TemporaryDirectory() as out:
        assert main(["eval", "--data", str(tiny), "--checkpoint", str(ckpt), "--ks", "1", "3", "10",
                     "--no-figures", "--out", out]) == 0
        shutil.copy(Path(out) / "ranking.csv", HERE / "golden_eval.csv")


if __name__ == "__main__":
    main_()
