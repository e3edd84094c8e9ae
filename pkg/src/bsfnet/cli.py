"""Command-line entry point: ``bsfnet <command> [flags]``.

Exit codes: 0 on success, 1 when a command fails (bad data, divergence,
impossible pruning, ...), 2 for invalid flags. Outputs are assembled in a
temporary directory and only moved under ``--out`` once everything succeeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
import tempfile
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .bsf import BsfLayer
from .builders import build_cnn, build_mlp
from .data import Dataset, column_stats, load_csv, load_idx, standardize
from .errors import BsfError
from .frames import export_frames
from .network import Network
from .optim import AdamConfig
from .thresholds import PruneThreshold
from .training import TrainConfig, evaluate, kfold_cv, train
from .workflows import prune_kernels, prune_neurons, select_features, shape_builder

SCHEMA_VERSION = 1

log = logging.getLogger("bsfnet")


# -- argument parsing -------------------------------------------------------------

def _threshold(text: str) -> PruneThreshold:
    try:
        return PruneThreshold.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _at_least(lo: int):
    def parse(text: str) -> int:
        try:
            value = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
        if value < lo:
            raise argparse.ArgumentTypeError(f"must be >= {lo}, got {value}")
        return value
    return parse


def _non_negative_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value >= 0.0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _data_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("data")
    g.add_argument("--data", help="CSV file with a header row")
    g.add_argument("--labels-col", default="class", help="name of the label column in --data")
    g.add_argument("--categorical", default="", help="comma-separated CSV columns to encode as category codes")
    g.add_argument("--mnist-images", help="IDX image file (gzip allowed)")
    g.add_argument("--mnist-labels", help="IDX label file matching --mnist-images")
    g.add_argument("--limit", type=_at_least(1), help="use only the first N samples")
    g.add_argument("--test-data", help="held-out CSV scored with the training statistics")
    g.add_argument("--test-images", help="held-out IDX image file")
    g.add_argument("--test-labels", help="held-out IDX label file")
    g.add_argument("--test-limit", type=_at_least(1), help="use only the first N held-out samples")
    return p


def _train_flags(epochs: int) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("training")
    g.add_argument("--seed", type=_at_least(0), default=0, help="seed for initialization, shuffling and gates")
    g.add_argument("--l1", type=_non_negative_float, default=0.01, help="L1 coefficient on filter weights")
    g.add_argument("--epochs", type=_at_least(1), default=epochs, help="maximum training epochs")
    g.add_argument("--patience", type=_at_least(1), default=20,
                   help="stop after this many epochs without training-loss improvement")
    g.add_argument("--batch", type=_at_least(1), default=32, help="mini-batch size")
    g.add_argument("--lr", type=float, default=0.001, help="Adam learning rate")
    g.add_argument("--snapshot-every", type=_at_least(1), default=1, help="record filter weights every N epochs")
    return p


def _out_flag(required: bool = True) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--out", required=required, help="output directory (created if absent)")
    return p


def _folds_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--folds", type=_at_least(2), default=10, help="cross-validation folds")
    p.add_argument("--workers", type=_at_least(1), default=1, help="folds trained concurrently")
    return p


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="bsfnet", formatter_class=fmt,
                                     description="Binary stochastic filtering: feature selection and pruning.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every epoch to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    data, out, folds = _data_flags(), _out_flag(), _folds_flags()

    p = sub.add_parser("train", parents=[data, _train_flags(500), out], formatter_class=fmt,
                       help="train an MLP (CSV) or CNN (images)")
    p.add_argument("--bsf", choices=["none", "input", "hidden", "channels"], default="none",
                   help="where to place filter layers; hidden is MLP-only, channels CNN-only")

    p = sub.add_parser("cv", parents=[data, _train_flags(500), folds, out], formatter_class=fmt,
                       help="k-fold cross-validation of the plain classifier")

    p = sub.add_parser("select-features", parents=[data, _train_flags(500), folds, out], formatter_class=fmt,
                       help="rank CSV features with an input filter layer and keep the best")
    p.add_argument("--threshold", type=_threshold, default="topk:6", help="abs:<w>, pct:<p> or topk:<k>")
    p.add_argument("--inverse", action="store_true", help="keep the least important features instead")

    p = sub.add_parser("prune-neurons", parents=[data, _train_flags(500), folds, out], formatter_class=fmt,
                       help="shrink hidden layers of an MLP and cross-validate both shapes")
    p.add_argument("--threshold", type=_threshold, default="abs:0.5", help="abs:<w>, pct:<p> or topk:<k>")

    p = sub.add_parser("prune-kernels", parents=[data, _train_flags(100), out], formatter_class=fmt,
                       help="drop convolution kernels of a CNN and fine-tune")
    p.add_argument("--threshold", type=_threshold, default="abs:0.5", help="abs:<w>, pct:<p> or topk:<k>")
    p.add_argument("--ft-epochs", type=_at_least(0), default=20, help="fine-tuning epochs at a tenth of --lr")

    p = sub.add_parser("export-frames", parents=[out], formatter_class=fmt,
                       help="write CSV and PGM frames of a saved model's filter snapshots")
    p.add_argument("--model", required=True, help="model.json written by another command")

    p = sub.add_parser("inspect-model", parents=[_out_flag(required=False)], formatter_class=fmt,
                       help="print a saved model's layers, weight counts and filter statistics")
    p.add_argument("--model", required=True, help="model.json written by another command")
    return parser


def _validate(parser: argparse.ArgumentParser, args: argparse.Namespace) -> None:
    if args.command in ("export-frames", "inspect-model"):
        return
    csv, idx = args.data is not None, args.mnist_images is not None or args.mnist_labels is not None
    if csv == idx:
        parser.error("give exactly one dataset: --data, or --mnist-images with --mnist-labels")
    if idx and (args.mnist_images is None or args.mnist_labels is None):
        parser.error("--mnist-images and --mnist-labels go together")
    test_idx = args.test_images is not None or args.test_labels is not None
    if test_idx and (args.test_images is None or args.test_labels is None):
        parser.error("--test-images and --test-labels go together")
    if (args.test_data is not None and idx) or (test_idx and csv):
        parser.error("the held-out set must have the same format as the training data")
    if args.lr <= 0:
        parser.error("--lr must be positive")
    if args.command in ("select-features", "prune-neurons") and not csv:
        parser.error(f"{args.command} works on tabular (--data) datasets")
    if args.command == "prune-kernels" and not idx:
        parser.error("prune-kernels needs image data (--mnist-images/--mnist-labels)")
    if args.command == "select-features" and args.l1 <= 0:
        parser.error("select-features needs a positive --l1")
    if args.command == "train":
        if args.bsf == "hidden" and not csv:
            parser.error("--bsf hidden applies to MLPs (CSV data)")
        if args.bsf == "channels" and not idx:
            parser.error("--bsf channels applies to CNNs (image data)")


# -- helpers -------------------------------------------------------------------------

def _load(args) -> tuple[Dataset, Dataset | None]:
    if args.data is not None:
        cats = [c for c in args.categorical.split(",") if c]
        data = load_csv(args.data, args.labels_col, cats)
        test = load_csv(args.test_data, args.labels_col, cats) if args.test_data else None
    else:
        data = load_idx(args.mnist_images, args.mnist_labels, args.limit)
        test = load_idx(args.test_images, args.test_labels, args.test_limit) if args.test_images else None
        return data, test
    if args.limit is not None:
        data = data.subset(np.arange(min(args.limit, len(data))))
    if test is not None and args.test_limit is not None:
        test = test.subset(np.arange(min(args.test_limit, len(test))))
    return data, test


def _config(args, epochs: int | None = None) -> TrainConfig:
    return TrainConfig(max_epochs=args.epochs if epochs is None else epochs, patience=args.patience,
                       batch_size=args.batch, adam=AdamConfig(alpha=args.lr), l1_coef=args.l1,
                       seed=args.seed, snapshot_every=args.snapshot_every)


def _builder(data: Dataset, bsf: str = "none"):
    n = data.n_classes
    if data.is_tabular:
        d = data.features.shape[1]
        return lambda seed: build_mlp(d, n, with_bsf_input=bsf == "input", with_bsf_hidden=bsf == "hidden",
                                      seed=seed)
    return lambda seed: build_cnn(data.sample_shape, n, with_bsf_input=bsf == "input",
                                  with_bsf_channels=bsf == "channels", seed=seed)


def _scaled(data: Dataset, test: Dataset | None) -> tuple[Dataset, Dataset | None]:
    if not data.is_tabular:
        return data, test
    stats = column_stats(data.features)
    return standardize(data, stats), (standardize(test, stats) if test is not None else None)


def _describe(data: Dataset) -> dict:
    out = {"n_samples": len(data), "sample_shape": list(data.sample_shape), "n_classes": data.n_classes}
    if data.feature_names:
        out["feature_names"] = data.feature_names
    if data.class_names:
        out["class_names"] = data.class_names
    return out


def _architecture(net: Network) -> list[dict]:
    return [{"index": i, "kind": layer.kind, "output_shape": list(shape), "weights": layer.n_weights()}
            for i, (layer, shape) in enumerate(zip(net.layers, net.shapes[1:]))]


def _filters(net: Network) -> list[tuple[int, BsfLayer]]:
    return [(i, layer) for i, layer in enumerate(net.layers) if isinstance(layer, BsfLayer)]


def _write_frames(net: Network, stage: Path) -> None:
    layers = [(i, layer) for i, layer in _filters(net) if layer.snapshots]
    if layers:
        export_frames(layers, stage / "frames")


def _arguments(args) -> dict:
    skip = {"out", "verbose"}
    return {k: (str(v) if isinstance(v, PruneThreshold) else v) for k, v in sorted(vars(args).items())
            if k not in skip}


@contextmanager
def _staged(out: Path | None):
    """Yield a scratch directory whose contents replace their namesakes in ``out`` on success."""
    if out is None:
        yield None
        return
    stage = Path(tempfile.mkdtemp(prefix="bsfnet-"))
    try:
        yield stage
        out.mkdir(parents=True, exist_ok=True)
        for item in sorted(stage.iterdir()):
            dest = out / item.name
            if dest.is_dir():
                shutil.rmtree(dest)
            elif dest.exists():
                dest.unlink()
            shutil.move(str(item), str(dest))
    finally:
        shutil.rmtree(stage, ignore_errors=True)


# -- commands --------------------------------------------------------------------------

def cmd_train(args, stage: Path):
    data, test = _scaled(*_load(args))
    net = _builder(data, args.bsf)(args.seed)
    cfg = _config(args)
    report = train(net, data, cfg, validation=test, progress=_progress)
    outcome = {"train_accuracy": evaluate(net, data)["accuracy"], "weights": net.n_weights(),
               "units": net.n_units()}
    if test is not None:
        outcome["val_accuracy"] = evaluate(net, test)["accuracy"]
    report.outcome = outcome
    net.save(stage / "model.json")
    _write_frames(net, stage)
    rows = [("epochs", report.epochs), ("final loss", f"{report.final_loss:.6f}"),
            ("train accuracy", f"{outcome['train_accuracy']:.4f}")]
    if test is not None:
        rows.append(("held-out accuracy", f"{outcome['val_accuracy']:.4f}"))
    rows.append(("weights", outcome["weights"]))
    return {"data": _describe(data), "config": cfg.to_dict(), "architecture": _architecture(net),
            **report.to_dict()}, rows


def cmd_cv(args, stage: Path):
    data, _ = _load(args)
    cfg = replace(_config(args), l1_coef=0.0)
    res = kfold_cv(data, args.folds, _builder(data), cfg, workers=args.workers)
    rows = [("folds", args.folds), ("mean train accuracy", f"{res.mean_train_accuracy:.4f}"),
            ("mean validation accuracy", f"{res.mean_val_accuracy:.4f}"),
            ("epochs per fold", " ".join(str(e) for e in res.epochs))]
    return {"data": _describe(data), "config": cfg.to_dict(), "outcome": res.to_dict()}, rows


def cmd_select_features(args, stage: Path):
    data, _ = _load(args)
    cfg = _config(args)
    sel = select_features(data, cfg, args.threshold, folds=args.folds, inverse=args.inverse)
    sel.model.save(stage / "model.json")
    sel.dataset.to_csv(stage / "selected.csv", args.labels_col)
    _write_frames(sel.model, stage)
    o = sel.report.outcome
    rows = [("selected features", f"{o['n_features_selected']} / {o['n_features_original']}"),
            ("names", ", ".join(o["selected_names"])),
            ("train accuracy (orig / sel)", f"{o['train_accuracy_original']:.4f} / {o['train_accuracy_truncated']:.4f}"),
            ("val accuracy (orig / sel)", f"{o['val_accuracy_original']:.4f} / {o['val_accuracy_truncated']:.4f}"),
            ("silhouette (orig / sel)", f"{o['silhouette_original']:.4f} / {o['silhouette_truncated']:.4f}")]
    return {"data": _describe(data), "config": cfg.to_dict(), **sel.report.to_dict()}, rows


def cmd_prune_neurons(args, stage: Path):
    data, _ = _load(args)
    scaled, _ = _scaled(data, None)
    cfg = _config(args)
    net = _builder(data, "hidden")(args.seed)
    report = train(net, scaled, cfg, progress=_progress)
    result = prune_neurons(net, args.threshold, reset_seed=args.seed)
    plain = replace(cfg, l1_coef=0.0)
    original = kfold_cv(data, args.folds, _builder(data), plain, workers=args.workers)
    pruned = kfold_cv(data, args.folds, shape_builder(result.network), plain, workers=args.workers)
    final = result.network
    train(final, scaled, plain)
    final.save(stage / "model.json")
    _write_frames(net, stage)
    summary = result.summary()
    report.outcome = {**summary, "threshold": str(args.threshold),
                      "cv_original": original.to_dict(), "cv_pruned": pruned.to_dict()}
    b, a = result.before, result.after
    rows = [("units (before / after)", f"{b['units']} / {a['units']}"),
            ("weights (before / after)", f"{b['weights']} / {a['weights']}"),
            ("weight reduction", f"{summary['weight_reduction']:.2f}x"),
            ("val accuracy (orig / pruned)", f"{original.mean_val_accuracy:.4f} / {pruned.mean_val_accuracy:.4f}")]
    return {"data": _describe(data), "config": cfg.to_dict(), "architecture": _architecture(final),
            **report.to_dict()}, rows


def cmd_prune_kernels(args, stage: Path):
    data, test = _load(args)
    cfg = _config(args)
    net = _builder(data, "channels")(args.seed)
    report = train(net, data, cfg, validation=test, progress=_progress)
    held = test if test is not None else data
    acc_before = evaluate(net, held)["accuracy"]
    result = prune_kernels(net, args.threshold, data, _config(args, epochs=args.ft_epochs), validation=held)
    acc_after = evaluate(result.network, held)["accuracy"]
    result.network.save(stage / "model.json")
    _write_frames(net, stage)
    summary = result.summary()
    report.outcome = {**summary, "threshold": str(args.threshold), "accuracy_scored_on": (
        "held-out" if test is not None else "training"), "accuracy_before": acc_before,
        "accuracy_after": acc_after,
        "fine_tune_history": result.report.history if result.report else []}
    b, a = result.before, result.after
    rows = [("kernels kept", " ".join(f"{summary['kept_per_layer'][k]}/{summary['total_per_layer'][k]}"
                                      for k in summary["kept_per_layer"])),
            ("weights (before / after)", f"{b['weights']} / {a['weights']}"),
            ("weight reduction", f"{summary['weight_reduction']:.2f}x"),
            ("model bytes (before / after)", f"{b['serialized_bytes']} / {a['serialized_bytes']}"),
            ("accuracy (before / after)", f"{acc_before:.4f} / {acc_after:.4f}")]
    return {"data": _describe(data), "config": cfg.to_dict(), "architecture": _architecture(result.network),
            **report.to_dict()}, rows


def cmd_export_frames(args, stage: Path):
    net = Network.load(args.model)
    layers = [(i, layer) for i, layer in _filters(net) if layer.snapshots]
    if not layers:
        raise BsfError(f"{args.model} has no recorded filter snapshots")
    files = export_frames(layers, stage)
    return None, [("filter layers", len(layers)), ("files written", len(files))]


def cmd_inspect_model(args, stage: Path | None):
    net = Network.load(args.model)
    rows = [(f"{a['index']:>2} {a['kind']}", f"{tuple(a['output_shape'])}  weights={a['weights']}")
            for a in _architecture(net)]
    rows += [("total weights", net.n_weights()), ("units", net.n_units())]
    filters = []
    for i, layer in _filters(net):
        w = layer.w
        stats = {"layer": i, "mode": layer.mode, "n_units": layer.n_units, "mean": float(w.mean()),
                 "min": float(w.min()), "max": float(w.max()), "below_half": int((w < 0.5).sum()),
                 "snapshots": len(layer.snapshots)}
        filters.append(stats)
        rows.append((f"filter {i} ({layer.mode})",
                     f"mean={stats['mean']:.3f} min={stats['min']:.3f} below 0.5: {stats['below_half']}"))
    doc = {"input_shape": list(net.input_shape), "architecture": _architecture(net),
           "total_weights": net.n_weights(), "units": net.n_units(), "filters": filters}
    return doc, rows


COMMANDS = {
    "train": cmd_train,
    "cv": cmd_cv,
    "select-features": cmd_select_features,
    "prune-neurons": cmd_prune_neurons,
    "prune-kernels": cmd_prune_kernels,
    "export-frames": cmd_export_frames,
    "inspect-model": cmd_inspect_model,
}


def _progress(entry: dict) -> None:
    extra = f" val {entry['val_accuracy']:.4f}" if "val_accuracy" in entry else ""
    log.info("epoch %d loss %.6f acc %.4f%s", entry["epoch"], entry["loss"], entry["train_accuracy"], extra)


def _print_table(title: str, rows) -> None:
    width = max((len(str(k)) for k, _ in rows), default=0)
    print(title)
    print("-" * max(len(title), width + 20))
    for key, value in rows:
        print(f"{str(key):<{width}}  {value}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(parser, args)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    out = Path(args.out) if args.out else None
    try:
        with _staged(out) as stage:
            doc, rows = COMMANDS[args.command](args, stage)
            if doc is not None and stage is not None:
                doc = {"schema_version": SCHEMA_VERSION, "command": args.command,
                       "arguments": _arguments(args), **doc}
                (stage / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    except (BsfError, ValueError, OSError) as exc:
        print(f"bsfnet {args.command}: error: {exc}", file=sys.stderr)
        return 1
    _print_table(f"bsfnet {args.command}", rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
