"""Command-line entry point: ``kgrel train|eval|predict-stats|analyze|resplit-nell``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .analysis import ANALYSES, DegenerateError, structure_report
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import (
    SPLITS,
    DataError,
    dataset_fingerprint,
    load_dataset,
    load_split,
    resplit_nell,
    write_split,
)
from .evaluation import EvalConfig, histogram_export, prediction_stats, ranking_report
from .models import INIT_SCHEME, ModelKind, ModelKindError
from .reports import write_csv, write_json
from .training import TrainConfig, TrainingError, train
from .workers import worker_count

logger = logging.getLogger("kgrel")


class UsageError(Exception):
    """Invalid combination of otherwise well-formed options."""


def read_config_file(path: str) -> list[tuple[str, str]]:
    """Parse ``key=value`` lines; ``#`` starts a comment line."""
    pairs = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise UsageError(f"{path}:{lineno}: expected key=value")
            pairs.append((key.strip().replace("_", "-"), value.strip()))
    return pairs


def _config_tokens(sub: argparse.ArgumentParser, pairs) -> list[str]:
    options = {}
    for action in sub._actions:
        for opt in action.option_strings:
            options[opt] = action
    tokens = []
    for key, value in pairs:
        opt = f"--{key}"
        action = options.get(opt)
        if action is None or key == "config":
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(action, argparse.BooleanOptionalAction):
            lowered = value.lower()
            if lowered in ("1", "true", "yes", "on"):
                tokens.append(opt)
            elif lowered in ("0", "false", "no", "off"):
                tokens.append(f"--no-{key}")
            else:
                raise UsageError(f"config key {key!r} expects a boolean, got {value!r}")
        elif action.nargs in ("+", "*"):
            tokens += [opt, *value.replace(",", " ").split()]
        else:
            tokens += [opt, value]
    return tokens


def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="dataset directory with train/valid/test.txt")
    p.add_argument("--taxonomy", help="taxonomy TSV or bundled name (wn18rr, nell995)")
    p.add_argument("--dedupe", action="store_true", help="drop duplicate triples within a split")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file; command-line flags take precedence")
    p.add_argument("--threads", type=int, help="worker threads (capped by KGREL_THREADS)")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="kgrel", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    subs = parser.add_subparsers(dest="command", required=True)
    by_name = {}

    p = subs.add_parser("train", help="train a model and write a checkpoint")
    _add_data(p)
    _add_common(p)
    p.add_argument("--model", required=True, choices=[k.value for k in ModelKind], type=lambda s: ModelKind.parse(s).value)
    p.add_argument("--dim", type=int, default=200, help="entity (and relation) dimension")
    p.add_argument("--relation-dim", type=int, help="TuckER relation dimension (default 30)")
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--negatives", type=int, default=50)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eval-every", type=int, default=0, help="validation hits@10 every N epochs")
    p.add_argument("--patience", type=int, help="stop after N evaluations without improvement")
    p.add_argument("--log", help="also write epoch records to this file")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_train)
    by_name["train"] = p

    p = subs.add_parser("eval", help="filtered/raw ranking metrics per relation")
    _add_data(p)
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["valid", "test"], default="test")
    p.add_argument("--ks", type=int, nargs="+", default=[10])
    p.add_argument("--filtered", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--per-relation", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)
    by_name["eval"] = p

    p = subs.add_parser("predict-stats", help="per-relation accuracy of independent predictions")
    _add_data(p)
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_predict_stats)
    by_name["predict-stats"] = p

    p = subs.add_parser("analyze", help="relation structure diagnostics")
    _add_data(p)
    _add_common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--which", nargs="+", choices=list(ANALYSES) + ["all"], default=["all"])
    p.add_argument("--all-splits", action="store_true", help="build relation graphs from all splits")
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_analyze)
    by_name["analyze"] = p

    p = subs.add_parser("resplit-nell", help="pool splits and redraw valid/test sets")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--holdout", type=int, default=20000, help="triples in each new valid/test split")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_resplit)
    by_name["resplit-nell"] = p
    return parser, by_name


def _expand_config(argv: list[str], subparsers) -> list[str]:
    """Splice ``--config`` file entries in right after the subcommand so that
    later command-line flags override them. Required flags may come from the file."""
    idx = next((i for i, tok in enumerate(argv) if tok in subparsers), None)
    if idx is None:
        return argv
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv[idx + 1:])
    if not known.config:
        return argv
    tokens = _config_tokens(subparsers[argv[idx]], read_config_file(known.config))
    return argv[:idx + 1] + tokens + argv[idx + 1:]


class _Tee:
    def __init__(self, *streams):
        self.streams = streams

    def write(self, text):
        for s in self.streams:
            s.write(text)

    def flush(self):
        for s in self.streams:
            s.flush()


def _load_model(args, dataset):
    params, meta = load_checkpoint(args.checkpoint)
    expected = meta.get("dataset_fingerprint")
    actual = dataset_fingerprint(dataset.store)
    if expected and expected != actual:
        raise UsageError(
            f"checkpoint was trained on dataset {expected}, but {args.data} is {actual}"
        )
    if params.n_entities != dataset.store.n_entities or params.n_relations != dataset.store.n_relations:
        raise UsageError("checkpoint vocabulary size does not match the dataset")
    return params, meta


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> int:
    config = TrainConfig(
        model=args.model,
        entity_dim=args.dim,
        relation_dim=args.relation_dim,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        n_negatives=args.negatives,
        epochs=args.epochs,
        seed=args.seed,
        workers=_threads(args),
        eval_every=args.eval_every,
        patience=args.patience,
    )
    dataset = load_dataset(args.data, args.taxonomy, dedupe=args.dedupe)

    def validation_hits(params):
        report = ranking_report(params, dataset.store, config=EvalConfig((10,), True, "valid"))
        return report.overall.hits[10]

    log_file = open(args.log, "w", encoding="utf-8") if args.log else None
    try:
        progress = _Tee(sys.stdout, log_file) if log_file else sys.stdout
        params, log = train(dataset.store, config, progress=progress,
                            validate=validation_hits if config.eval_every else None)
    finally:
        if log_file:
            log_file.close()
    meta = {
        "dims": {
            "n_entities": dataset.store.n_entities,
            "n_relations": dataset.store.n_relations,
            "entity_dim": config.entity_dim,
            "relation_dim": config.relation_dim,
        },
        "seed": config.seed,
        "train_config": config.to_dict(),
        "init_scheme": INIT_SCHEME,
        "adam": {"beta1": config.beta1, "beta2": config.beta2, "eps": config.eps},
        "dataset_fingerprint": dataset_fingerprint(dataset.store),
        "epochs_completed": len(log.epoch_loss),
        "final_loss": log.epoch_loss[-1] if log.epoch_loss else None,
        "stopped_early": log.stopped_early,
    }
    save_checkpoint(params, meta, args.out)
    return 0


def _threads(args) -> int:
    return worker_count(args.threads)


def cmd_eval(args) -> int:
    config = EvalConfig(tuple(args.ks), args.filtered, args.split)
    dataset = load_dataset(args.data, args.taxonomy, dedupe=args.dedupe)
    params, meta = _load_model(args, dataset)
    out = _out_dir(args.out)
    report = ranking_report(
        params, dataset.store, dataset.taxonomy, config,
        relation_names=dataset.vocab.relations,
        hidden=dataset.hidden_relations(),
        workers=_threads(args),
    )
    if not args.per_relation:
        report.rows = []
    header = {"model": params.kind.value, **config.to_dict(),
              "dataset_fingerprint": dataset_fingerprint(dataset.store)}
    records = report.to_records()
    write_csv(out / "ranking.csv", records, header)
    write_json(out / "ranking.json", records, header)
    if args.figures and report.rows:
        from .plotting import plot_hits

        plot_hits(report, out / "ranking.png", k=max(config.ks) if 10 not in config.ks else 10)
    overall = report.overall
    print(" ".join([f"{overall.name}:"] + [f"hits@{k}={v:.4f}" for k, v in overall.hits.items()] + [f"mrr={overall.mrr:.4f}"]))
    return 0


def cmd_predict_stats(args) -> int:
    if not 0.0 < args.threshold < 1.0:
        raise UsageError("--threshold must lie in (0, 1)")
    dataset = load_dataset(args.data, args.taxonomy, dedupe=args.dedupe)
    params, meta = _load_model(args, dataset)
    out = _out_dir(args.out)
    stats = prediction_stats(
        params, dataset.store, args.threshold, dataset.taxonomy,
        relation_names=dataset.vocab.relations, hidden=dataset.hidden_relations(),
    )
    header = {"model": params.kind.value, "threshold": args.threshold,
              "candidates": "objects of each test (s, r) pair",
              "dataset_fingerprint": dataset_fingerprint(dataset.store)}
    records = stats.to_records()
    write_csv(out / "predictions.csv", records, header)
    write_json(out / "predictions.json", records, header)
    hist = histogram_export(stats, args.bins)
    write_csv(out / "histograms.csv", hist, dict(header, bins=args.bins),
              columns=["relation", "class", "bin_lo", "bin_hi", "count"])
    if args.figures:
        from .plotting import plot_prediction_histograms

        plot_prediction_histograms(stats, out / "histograms.png", bins=args.bins)
    o = stats.overall
    print(f"all: train_accuracy={o.train_accuracy:.4f} test_accuracy={o.test_accuracy:.4f} "
          f"avg_other_truths={o.avg_other_truths:.4f}")
    return 0


def cmd_analyze(args) -> int:
    which = set(ANALYSES) if "all" in args.which else set(args.which)
    explicit = "all" not in args.which
    dataset = load_dataset(args.data, args.taxonomy, dedupe=args.dedupe)
    params = None
    if args.checkpoint:
        params, _ = _load_model(args, dataset)
    else:
        which -= {"symmetry", "norms", "eigen"} if not explicit else set()
    if explicit:
        kind = params.kind if params is not None else None
        if "symmetry" in which and kind is not ModelKind.TUCKER:
            raise UsageError("symmetry analysis needs a TuckER checkpoint")
        if "norms" in which and (kind is None or not kind.has_translation):
            raise UsageError("norm analysis needs a TransE, MuRE_I or MuRE checkpoint")
        if "eigen" in which and (kind is None or not kind.has_diagonal):
            raise UsageError("eigen analysis needs a DistMult or MuRE checkpoint")
    splits = SPLITS if args.all_splits else ("train",)
    report = structure_report(
        params, dataset.store, dataset.taxonomy,
        relation_names=dataset.vocab.relations,
        hidden=dataset.hidden_relations(),
        which=which, splits=splits,
    )
    out = _out_dir(args.out)
    header = dict(report.conventions, analyses=" ".join(sorted(which)),
                  model=params.kind.value if params is not None else "",
                  dataset_fingerprint=dataset_fingerprint(dataset.store))
    records = report.to_records()
    write_csv(out / "structure.csv", records, header)
    write_json(out / "structure.json", records, header)
    eigen_rows = [r for r in report.rows if r.eigen_profile is not None]
    if eigen_rows:
        profile_records = [
            {"relation": row.name, "rank_index": i + 1, "scaled_magnitude": float(v)}
            for row in eigen_rows for i, v in enumerate(row.eigen_profile)
        ]
        write_csv(out / "eigen_profiles.csv", profile_records, header,
                  columns=["relation", "rank_index", "scaled_magnitude"])
        if args.figures:
            from .plotting import plot_eigen_profiles

            plot_eigen_profiles(eigen_rows, out / "eigen_profiles.png")
    for rtype, value in report.type_means("khs").items():
        print(f"type {rtype}: mean khs={value:.3f}")
    return 0


def cmd_resplit(args) -> int:
    data = Path(args.data)
    raw = [load_split(data / f"{name}.txt") for name in SPLITS]
    new = resplit_nell(*raw, seed=args.seed, holdout=args.holdout)
    out = _out_dir(args.out)
    for name, triples in zip(SPLITS, new):
        write_split(out / f"{name}.txt", triples)
    print(" ".join(f"{name}={len(t)}" for name, t in zip(SPLITS, new)))
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()
    try:
        argv = _expand_config(argv, subparsers)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (UsageError, OSError) as exc:
        print(f"kgrel: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"kgrel: error: {exc}", file=sys.stderr)
        return 2
    except (DataError, CheckpointError, ModelKindError, DegenerateError, TrainingError,
            ValueError, OSError) as exc:
        print(f"kgrel: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
