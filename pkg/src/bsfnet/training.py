"""Mini-batch training, fine-tuning and stratified k-fold cross-validation."""

from __future__ import annotations

import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .bsf import BsfLayer, clamp_weights
from .data import Dataset, column_stats, one_hot, standardize
from .errors import ConfigurationError, DivergenceError, InputError
from .metrics import accuracy
from .network import Network, loss_and_grad
from .optim import AdamConfig, adam_step, new_state
from .tensor import RngStream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 500
    patience: int = 20
    batch_size: int = 32
    adam: AdamConfig = field(default_factory=AdamConfig)
    l1_coef: float = 0.01
    seed: int = 0
    snapshot_every: int = 1
    min_delta: float = 1e-5

    def __post_init__(self):
        if self.max_epochs < 0:
            raise ConfigurationError("max_epochs must be non-negative")
        if self.patience < 1 or self.snapshot_every < 1 or self.batch_size < 1:
            raise ConfigurationError("patience, snapshot_every and batch_size must be >= 1")
        if self.l1_coef < 0:
            raise ConfigurationError("l1_coef must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunReport:
    history: list[dict] = field(default_factory=list)
    bsf_snapshots: list[dict] = field(default_factory=list)
    outcome: dict = field(default_factory=dict)
    stopped_early: bool = False

    @property
    def epochs(self) -> int:
        return len(self.history)

    @property
    def final_loss(self) -> float:
        return self.history[-1]["loss"] if self.history else float("nan")

    def to_dict(self) -> dict:
        return {
            "history": self.history,
            "bsf_snapshots": self.bsf_snapshots,
            "stopped_early": self.stopped_early,
            "outcome": self.outcome,
        }


def _prepare(net: Network, data: Dataset) -> np.ndarray:
    if len(data) == 0:
        raise InputError("cannot train on an empty dataset")
    if data.sample_shape != net.input_shape:
        raise InputError(f"dataset samples {data.sample_shape} do not match network input {net.input_shape}")
    if data.labels.max() >= net.n_classes:
        raise InputError(f"labels exceed the network's {net.n_classes} classes")
    return one_hot(data.labels, net.n_classes)


def evaluate(net: Network, data: Dataset) -> dict:
    probs = net.predict(data.features)
    loss, _ = loss_and_grad(probs, one_hot(data.labels, net.n_classes))
    return {"loss": loss, "accuracy": accuracy(probs, data.labels)}


def train(net: Network, data: Dataset, cfg: TrainConfig, validation: Dataset | None = None,
          progress: Callable[[dict], None] | None = None) -> RunReport:
    """Train in place with Adam until the training loss stops improving.

    Every filter layer gets ``cfg.l1_coef`` as its penalty and is clamped to
    [0, 1] after each update. Filter weights are recorded every
    ``cfg.snapshot_every`` epochs.
    """
    targets = _prepare(net, data)
    report = RunReport()
    if cfg.max_epochs == 0:
        return report
    root = RngStream(cfg.seed, "train")
    order_rng, noise_rng = root.child("shuffle"), root.child("noise")
    filters = net.bsf_layers()
    for layer in filters:
        layer.l1_coef = cfg.l1_coef
    for layer in net.layers:
        if layer.params and layer.opt_state is None:
            layer.opt_state = new_state(layer.params)

    n = len(data)
    best, waited = math.inf, 0
    for epoch in range(1, cfg.max_epochs + 1):
        started = time.perf_counter()
        perm = order_rng.permutation(n)
        total_loss, correct = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            x, y = data.features[idx], targets[idx]
            probs = net.forward(x, train=True, rng=noise_rng)
            loss, dprobs = loss_and_grad(probs, y)
            loss += net.penalty()
            net.backward(probs, dprobs)
            for layer in net.layers:
                if layer.params:
                    adam_step(layer.params, layer.grads, layer.opt_state, cfg.adam)
            for layer in filters:
                clamp_weights(layer)
            total_loss += loss * len(idx)
            correct += int((probs.argmax(axis=1) == data.labels[idx]).sum())
        epoch_loss = total_loss / n
        if not math.isfinite(epoch_loss):
            raise DivergenceError(epoch, epoch_loss)
        entry = {"epoch": epoch, "loss": epoch_loss, "train_accuracy": correct / n}
        if validation is not None:
            entry["val_accuracy"] = evaluate(net, validation)["accuracy"]
        report.history.append(entry)
        if epoch % cfg.snapshot_every == 0:
            for i, layer in enumerate(net.layers):
                if isinstance(layer, BsfLayer):
                    layer.record(epoch)
                    report.bsf_snapshots.append({"layer": i, "epoch": epoch, "mode": layer.mode})
        log.debug("epoch %d loss %.6f acc %.4f (%.2fs)", epoch, epoch_loss, entry["train_accuracy"],
                  time.perf_counter() - started)
        if progress is not None:
            progress(entry)

        if epoch_loss < best - cfg.min_delta:
            best, waited = epoch_loss, 0
        else:
            waited += 1
            if waited >= cfg.patience:
                report.stopped_early = True
                break
    return report


def fine_tune(net: Network, data: Dataset, cfg: TrainConfig, validation: Dataset | None = None,
              progress: Callable[[dict], None] | None = None) -> RunReport:
    """Continue training at a tenth of the learning rate with no filter penalty."""
    if cfg.max_epochs == 0:
        _prepare(net, data)
        return RunReport()
    for layer in net.layers:
        layer.opt_state = None
    tuned = replace(cfg, adam=cfg.adam.scaled(0.1), l1_coef=0.0)
    return train(net, data, tuned, validation, progress)


# -- cross-validation -----------------------------------------------------------

def stratified_folds(labels: np.ndarray, k: int, rng: RngStream) -> list[np.ndarray]:
    """Split indices into ``k`` folds, spreading each class evenly.

    Falls back to an unstratified split (with a warning) when some class has
    fewer than ``k`` members.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise ConfigurationError("need at least 2 folds")
    if len(labels) < k:
        raise InputError(f"{len(labels)} samples cannot fill {k} folds")
    classes, counts = np.unique(labels, return_counts=True)
    if counts.min() < k:
        warnings.warn(f"a class has only {counts.min()} members for {k} folds; using unstratified folds",
                      stacklevel=2)
        perm = rng.permutation(len(labels))
        return [np.sort(part) for part in np.array_split(perm, k)]
    buckets: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for c in classes:
        members = np.flatnonzero(labels == c)
        members = members[rng.permutation(len(members))]
        for j, idx in enumerate(members):
            buckets[(offset + j) % k].append(int(idx))
        offset += len(members)
    return [np.sort(np.array(b, dtype=np.int64)) for b in buckets]


@dataclass
class CVResult:
    train_accuracy: list[float]
    val_accuracy: list[float]
    epochs: list[int]
    folds: list[list[int]]

    @property
    def mean_train_accuracy(self) -> float:
        return float(np.mean(self.train_accuracy))

    @property
    def mean_val_accuracy(self) -> float:
        return float(np.mean(self.val_accuracy))

    def to_dict(self) -> dict:
        return {
            "mean_train_accuracy": self.mean_train_accuracy,
            "mean_val_accuracy": self.mean_val_accuracy,
            "train_accuracy": self.train_accuracy,
            "val_accuracy": self.val_accuracy,
            "epochs": self.epochs,
        }


def fold_seed(seed: int, fold: int) -> int:
    return int(RngStream(seed, "fold").child(fold).next_u64(1)[0] >> np.uint64(1))


def kfold_cv(data: Dataset, k: int, builder: Callable[[int], Network], cfg: TrainConfig,
             standardize_folds: bool = True, workers: int = 1) -> CVResult:
    """k-fold cross-validation with a fresh network per fold.

    ``builder(seed)`` returns an initialized network. Tabular folds are
    standardized with statistics of their own training part.
    """
    folds = stratified_folds(data.labels, k, RngStream(cfg.seed, "folds"))

    def run(i: int) -> tuple[float, float, int]:
        test_idx = folds[i]
        train_idx = np.sort(np.concatenate([f for j, f in enumerate(folds) if j != i]))
        tr, te = data.subset(train_idx), data.subset(test_idx)
        if standardize_folds and data.is_tabular:
            stats = column_stats(tr.features)
            tr, te = standardize(tr, stats), standardize(te, stats)
        seed = fold_seed(cfg.seed, i)
        net = builder(seed)
        rep = train(net, tr, replace(cfg, seed=seed))
        return evaluate(net, tr)["accuracy"], evaluate(net, te)["accuracy"], rep.epochs

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(k)))
    else:
        results = [run(i) for i in range(k)]
    return CVResult(
        train_accuracy=[r[0] for r in results],
        val_accuracy=[r[1] for r in results],
        epochs=[r[2] for r in results],
        folds=[f.tolist() for f in folds],
    )
