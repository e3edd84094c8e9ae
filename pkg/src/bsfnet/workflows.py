"""Feature selection, neuron pruning and kernel pruning built on filter layers."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .bsf import BsfChannel, BsfElement, BsfLayer, importances
from .builders import build_mlp
from .data import Dataset, standardize
from .errors import ConfigurationError, PruningError, SelectionError
from .layers import Activation, Conv2D, Dense, Dropout, Flatten, MaxPool2D
from .metrics import silhouette_coefficient
from .network import Network
from .thresholds import PruneThreshold
from .training import CVResult, RunReport, TrainConfig, evaluate, fine_tune, kfold_cv, train


# -- feature selection ----------------------------------------------------------

@dataclass
class Selection:
    indices: list[int]
    dataset: Dataset
    report: RunReport
    model: Network


def select_features(data: Dataset, cfg: TrainConfig, threshold: PruneThreshold, folds: int = 10,
                    baseline: CVResult | None = None, inverse: bool = False,
                    evaluate_cv: bool = True) -> Selection:
    """Rank features with an input filter layer and keep the important ones.

    The filter network is trained on the standardized data; the surviving
    columns (in their original order) form the truncated dataset, which is
    then scored by cross-validating a plain classifier. ``inverse`` keeps the
    least important features instead. ``baseline`` reuses an existing
    cross-validation of the full dataset.
    """
    if cfg.l1_coef <= 0:
        raise ConfigurationError("feature selection needs a positive l1 coefficient")
    if not data.is_tabular:
        raise ConfigurationError("feature selection works on tabular data")
    d, n = data.features.shape[1], data.n_classes
    scaled = standardize(data)
    net = build_mlp(d, n, with_bsf_input=True, seed=cfg.seed)
    report = train(net, scaled, cfg)
    w = net.layers[0].w
    mask = threshold.low_mask(w) if inverse else threshold.keep_mask(w)
    indices = [int(i) for i in np.flatnonzero(mask)]
    if not indices:
        raise SelectionError(f"threshold {threshold} keeps no features; use a weaker one")
    truncated = data.select_features(indices)

    names = data.feature_names or [f"f{i}" for i in range(d)]
    outcome = {
        "threshold": str(threshold),
        "inverse": inverse,
        "importances": [{"index": i, "name": names[i], "weight": v} for i, v in importances(w)],
        "selected_indices": indices,
        "selected_names": [names[i] for i in indices],
        "n_features_original": d,
        "n_features_selected": len(indices),
        "silhouette_original": silhouette_coefficient(scaled.features, data.labels),
        "silhouette_truncated": silhouette_coefficient(standardize(truncated).features, data.labels),
    }
    if evaluate_cv:
        plain_cfg = replace(cfg, l1_coef=0.0)
        if baseline is None:
            baseline = kfold_cv(data, folds, lambda s: build_mlp(d, n, seed=s), plain_cfg)
        reduced = kfold_cv(truncated, folds, lambda s: build_mlp(len(indices), n, seed=s), plain_cfg)
        outcome.update({
            "folds": folds,
            "train_accuracy_original": baseline.mean_train_accuracy,
            "val_accuracy_original": baseline.mean_val_accuracy,
            "train_accuracy_truncated": reduced.mean_train_accuracy,
            "val_accuracy_truncated": reduced.mean_val_accuracy,
        })
    report.outcome = outcome
    return Selection(indices, truncated, report, net)


# -- structural surgery -----------------------------------------------------------

_PASS_THROUGH = (Activation, Dropout, BsfLayer)


def gate_masks(net: Network, threshold: PruneThreshold) -> dict[int, np.ndarray]:
    """Keep-masks for every hidden/channel filter layer, keyed by layer index."""
    masks = {}
    for i, layer in enumerate(net.layers):
        if isinstance(layer, BsfChannel) or (isinstance(layer, BsfElement) and i > 0):
            masks[i] = threshold.keep_mask(layer.w)
    return masks


def masked_copy(net: Network, masks: dict[int, np.ndarray]) -> Network:
    """Copy of ``net`` whose filter gates are forced to the 0/1 keep-masks.

    Filters without a mask are forced open. In eval mode this computes exactly
    what the pruned network computes.
    """
    out = net.copy()
    for i, layer in enumerate(out.layers):
        if isinstance(layer, BsfLayer):
            layer.w = masks[i].astype(np.float64) if i in masks else np.ones(layer.n_units)
    return out


def _producer(layers, i: int) -> int:
    """Index of the dense/conv layer whose outputs filter ``i`` gates."""
    j = i - 1
    while j >= 0 and isinstance(layers[j], (_PASS_THROUGH, MaxPool2D)):
        j -= 1
    if j < 0 or not isinstance(layers[j], (Dense, Conv2D)):
        raise PruningError(f"filter layer {i} does not follow a dense or convolution layer")
    return j


def _shrink_outputs(layer, keep: np.ndarray) -> None:
    if isinstance(layer, Dense):
        layer.params["W"] = layer.params["W"][:, keep]
        layer.n_out = int(keep.sum())
    else:
        layer.params["W"] = layer.params["W"][keep]
        layer.n_kernels = int(keep.sum())
    layer.params["b"] = layer.params["b"][keep]


def _shrink_consumer(layers, shapes, start: int, keep: np.ndarray) -> None:
    """Drop the inputs fed by removed units in the next dense/conv layer."""
    j = start
    flat_spatial = None
    while j < len(layers):
        layer = layers[j]
        if isinstance(layer, Flatten):
            c, *spatial = shapes[j]
            flat_spatial = int(np.prod(spatial))
        elif isinstance(layer, Dense):
            W = layer.params["W"]
            if flat_spatial is not None:
                W = W.reshape(len(keep), flat_spatial, -1)[keep].reshape(-1, W.shape[1])
            else:
                W = W[keep]
            layer.params["W"] = W
            layer.n_in = W.shape[0]
            return
        elif isinstance(layer, Conv2D):
            layer.params["W"] = layer.params["W"][:, keep]
            layer.in_channels = int(keep.sum())
            return
        elif not isinstance(layer, (_PASS_THROUGH, MaxPool2D)):
            raise PruningError(f"cannot propagate pruning through {layer.kind}")
        j += 1
    raise PruningError("pruned units feed no later dense or convolution layer")


def prune_structure(net: Network, masks: dict[int, np.ndarray]) -> Network:
    """Remove the masked-out units and strip every filter layer; weights kept."""
    work = net.copy()
    layers, shapes = work.layers, work.shapes
    for i, keep in sorted(masks.items()):
        keep = np.asarray(keep, dtype=bool)
        if not keep.any():
            raise PruningError(f"filter layer {i} would lose every unit; use a weaker threshold")
        if keep.all():
            continue
        p = _producer(layers, i)
        _shrink_outputs(layers[p], keep)
        _shrink_consumer(layers, shapes, i + 1, keep)
    for layer in layers:
        layer.opt_state = None
        layer.cache = None
    kept = [layer for layer in layers if not isinstance(layer, BsfLayer)]
    return Network(kept, work.input_shape)


@dataclass
class PruneResult:
    network: Network
    masks: dict[int, np.ndarray]
    before: dict = field(default_factory=dict)
    after: dict = field(default_factory=dict)
    report: RunReport | None = None

    def summary(self) -> dict:
        out = {"before": self.before, "after": self.after,
               "kept_per_layer": {str(i): int(m.sum()) for i, m in self.masks.items()},
               "total_per_layer": {str(i): int(m.size) for i, m in self.masks.items()}}
        if self.before.get("weights"):
            out["weight_reduction"] = self.before["weights"] / self.after["weights"]
        return out


def _census(net: Network) -> dict:
    return {"units": net.n_units(), "weights": net.n_weights()}


def prune_neurons(net: Network, threshold: PruneThreshold, reset_seed: int | None = 0) -> PruneResult:
    """Delete hidden units whose gate weight misses the threshold.

    The filter layers are removed; unless ``reset_seed`` is None the pruned
    network is re-initialized from that seed before being returned.
    """
    masks = gate_masks(net, threshold)
    if not any(isinstance(net.layers[i], BsfElement) for i in masks):
        raise PruningError("network has no hidden filter layers")
    pruned = prune_structure(net, masks)
    if reset_seed is not None:
        pruned.reset_parameters(reset_seed)
    return PruneResult(pruned, masks, _census(net), _census(pruned))


def shape_builder(template: Network):
    """``builder(seed)`` producing fresh copies of ``template``'s architecture."""
    def build(seed: int) -> Network:
        net = template.copy()
        net.reset_parameters(seed)
        return net
    return build


def prune_kernels(net: Network, threshold: PruneThreshold, data: Dataset | None = None,
                  fine_tune_cfg: TrainConfig | None = None, validation: Dataset | None = None) -> PruneResult:
    """Drop convolution kernels whose channel gate misses the threshold.

    Surviving weights are kept. When ``data`` and ``fine_tune_cfg`` are given
    the pruned network is fine-tuned at a tenth of the learning rate.
    """
    masks = {i: m for i, m in gate_masks(net, threshold).items() if isinstance(net.layers[i], BsfChannel)}
    if not masks:
        raise PruningError("network has no channel filter layers")
    stripped = prune_structure(net, {})
    pruned = prune_structure(net, masks)
    before = dict(_census(net), serialized_bytes=len(stripped.to_json().encode()))
    after = dict(_census(pruned), serialized_bytes=len(pruned.to_json().encode()))
    result = PruneResult(pruned, masks, before, after)
    if data is not None and fine_tune_cfg is not None:
        result.report = fine_tune(pruned, data, fine_tune_cfg, validation)
        if validation is not None:
            result.after["val_accuracy"] = evaluate(pruned, validation)["accuracy"]
    return result
