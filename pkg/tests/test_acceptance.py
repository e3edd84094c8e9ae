"""The eleven acceptance criteria, one test each.

Every test records a one-line verdict; conftest prints them all at the end of
the run (``criterion  N: PASS|FAIL ...``), so they are visible even when
pytest captures output.
"""

import math
import subprocess
import sys
import time

import numpy as np
import pytest

from bsfnet.bsf import BsfChannel, BsfElement, bsf_forward
from bsfnet.builders import build_cnn, build_mlp
from bsfnet.data import load_csv, load_idx, standardize
from bsfnet.frames import read_pgm, render_frame
from bsfnet.layers import Activation, Conv2D, Dense, Dropout, Flatten, MaxPool2D
from bsfnet.metrics import silhouette_coefficient
from bsfnet.network import Network, loss_and_grad
from bsfnet.tensor import RngStream
from bsfnet.thresholds import PruneThreshold
from bsfnet.training import TrainConfig, evaluate, kfold_cv, train
from bsfnet.workflows import (
    gate_masks, masked_copy, prune_kernels, prune_neurons, prune_structure, select_features, shape_builder,
)

from conftest import DATA, MNIST, numeric_grad, rel_error
from test_data import brute_silhouette
from test_pipeline import random_gated_net

RESULTS: dict[int, str] = {}
SEED = 0


def verdict(number: int, ok: bool, detail: str) -> None:
    RESULTS[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    assert ok, RESULTS[number]


@pytest.fixture(scope="module")
def wine():
    return load_csv(DATA / "wine.csv", "class")


@pytest.fixture(scope="module")
def wine_cv(wine):
    started = time.perf_counter()
    res = kfold_cv(wine, 10, lambda s: build_mlp(13, 3, seed=s), TrainConfig(l1_coef=0.0, seed=SEED))
    return res, time.perf_counter() - started


@pytest.fixture(scope="module")
def wine_selection(wine, wine_cv):
    cfg = TrainConfig(l1_coef=0.01, seed=SEED)
    return select_features(wine, cfg, PruneThreshold("top_k", 6), folds=10, baseline=wine_cv[0])


@pytest.fixture(scope="module")
def mnist():
    train_set = load_idx(MNIST / "train-images-idx3-ubyte.gz", MNIST / "train-labels-idx1-ubyte.gz", 2000)
    test_set = load_idx(MNIST / "test-images-idx3-ubyte.gz", MNIST / "test-labels-idx1-ubyte.gz", 500)
    return train_set, test_set


def test_1_wine_cross_validation(wine_cv):
    res, seconds = wine_cv
    acc = res.mean_val_accuracy
    verdict(1, acc >= 0.95 and seconds <= 120,
            f"Wine 10-fold mean validation accuracy {acc:.4f} (>= 0.95) in {seconds:.1f}s (<= 120s)")


def test_2_wine_feature_selection(wine, wine_selection):
    out = wine_selection.report.outcome
    drop = out["val_accuracy_original"] - out["val_accuracy_truncated"]
    again = select_features(wine, TrainConfig(l1_coef=0.01, seed=SEED), PruneThreshold("top_k", 6),
                            evaluate_cv=False)
    same = (again.indices == wine_selection.indices
            and again.model.to_json() == wine_selection.model.to_json())
    verdict(2, len(wine_selection.indices) == 6 and drop <= 0.03 and same,
            f"top-6 {out['selected_names']} validation {out['val_accuracy_truncated']:.4f} vs "
            f"{out['val_accuracy_original']:.4f}, drop {drop:.4f} (<= 0.03), rerun identical: {same}")


def test_3_silhouette(wine_selection):
    out = wine_selection.report.outcome
    gain = out["silhouette_truncated"] - out["silhouette_original"]
    rng = np.random.default_rng(2024)
    mismatches, cases = 0, 0
    for n in list(range(2, 30)) + [50, 100, 150, 200]:
        pts = rng.normal(size=(n, int(rng.integers(1, 5))))
        labels = rng.integers(0, int(rng.integers(2, 5)), n)
        labels[:2] = [0, 1]
        mismatches += silhouette_coefficient(pts, labels) != brute_silhouette(pts.tolist(), labels.tolist())
        cases += 1
    verdict(3, gain > 0.03 and mismatches == 0,
            f"silhouette {out['silhouette_original']:.4f} -> {out['silhouette_truncated']:.4f} "
            f"(gain {gain:.4f} > 0.03); exact oracle match on {cases - mismatches}/{cases} instances, n <= 200")


def test_4_neuron_pruning(wine, wine_cv):
    l1 = 0.01
    net = build_mlp(13, 3, with_bsf_hidden=True, seed=SEED)
    train(net, standardize(wine), TrainConfig(l1_coef=l1, seed=SEED))
    result = prune_neurons(net, PruneThreshold("percentile", 40), reset_seed=SEED)
    pruned = kfold_cv(wine, 10, shape_builder(result.network), TrainConfig(l1_coef=0.0, seed=SEED))
    ratio = result.before["weights"] / result.after["weights"]
    base = wine_cv[0].mean_val_accuracy
    drop = base - pruned.mean_val_accuracy
    verdict(4, ratio >= 2 and drop <= 0.02,
            f"l1={l1} pct:40: units {result.before['units']} -> {result.after['units']}, weights "
            f"{result.before['weights']} -> {result.after['weights']} ({ratio:.2f}x >= 2x), validation "
            f"{base:.4f} -> {pruned.mean_val_accuracy:.4f} (drop {drop:.4f} <= 0.02)")


def test_5_kernel_pruning(mnist):
    train_set, test_set = mnist
    started = time.perf_counter()
    net = build_cnn((1, 28, 28), 10, with_bsf_channels=True, seed=1)
    train(net, train_set, TrainConfig(max_epochs=25, l1_coef=1e-3, seed=1))
    before = evaluate(net, test_set)["accuracy"]
    result = prune_kernels(net, PruneThreshold("percentile", 60), train_set,
                           TrainConfig(max_epochs=4, seed=2), validation=test_set)
    after = result.after["val_accuracy"]
    seconds = time.perf_counter() - started
    ratio = result.before["weights"] / result.after["weights"]
    kept = "/".join(str(int(m.sum())) for m in result.masks.values())
    verdict(5, ratio >= 2 and before - after <= 0.03 and seconds <= 900,
            f"kernels kept {kept} of 32/64, weights {result.before['weights']} -> {result.after['weights']} "
            f"({ratio:.2f}x >= 2x), accuracy {before:.4f} -> {after:.4f} (drop {before - after:.4f} <= 0.03), "
            f"{seconds:.0f}s (<= 900s)")


def test_6_attention_map(mnist):
    train_set, _ = mnist
    net = build_cnn((1, 28, 28), 10, with_bsf_input=True, seed=SEED)
    train(net, train_set, TrainConfig(max_epochs=5, l1_coef=1e-3, seed=SEED))
    grid = net.layers[0].w.reshape(28, 28)
    ring = np.ones((28, 28), dtype=bool)
    ring[2:-2, 2:-2] = False
    center, border = grid[7:21, 7:21].mean(), grid[ring].mean()
    img = read_pgm(render_frame(net.layers[0].w, (28, 28))).astype(float)
    brighter = img[7:21, 7:21].mean() > img[ring].mean()
    verdict(6, center - border >= 0.1 and brighter,
            f"central 14x14 mean gate {center:.3f} vs outer ring {border:.3f} (difference "
            f"{center - border:.3f} >= 0.1); rendered frame brighter in the centre: {brighter}")


def test_7_open_filter_is_transparent():
    rng = np.random.default_rng(7)
    cases, identical = 200, 0
    for case in range(cases):
        widths = [int(w) for w in rng.integers(1, 8, size=rng.integers(2, 6))] + [int(rng.integers(2, 5))]
        activation = str(rng.choice(["relu", "tanh", "linear"]))
        plain = []
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            d = Dense(a, b, "linear" if i == len(widths) - 2 else activation)
            d.params = {"W": rng.normal(size=(a, b)), "b": rng.normal(size=b)}
            plain.append(d)
        gated = []
        for d in plain:
            twin = Dense(d.n_in, d.n_out, d.activation)
            twin.params = {k: v.copy() for k, v in d.params.items()}
            gated.append(twin)
        for pos in sorted(rng.choice(len(gated) + 1, size=rng.integers(1, 3), replace=False), reverse=True):
            gated.insert(int(pos), BsfElement(widths[pos]))
        x = rng.normal(size=(int(rng.integers(1, 6)), widths[0]))
        y = np.eye(widths[-1])[rng.integers(0, widths[-1], len(x))]
        grads = []
        for layers in (plain, gated):
            net = Network(layers, (widths[0],))
            probs = net.forward(x, train=True, rng=RngStream(case))
            net.backward(probs, loss_and_grad(probs, y)[1])
            grads.append([g.tobytes() for l in layers if isinstance(l, Dense) for g in l.grads.values()])
        identical += grads[0] == grads[1]
    verdict(7, identical == cases, f"w=1 filter layers left gradients bit-identical in {identical}/{cases} random MLPs")


def _fd(layer, x, rng, seed, params=True):
    """Worst relative error of backward against central differences of sum(dy * y)."""
    fwd = lambda: layer.forward(x, train=True, rng=RngStream(seed))
    dy = rng.normal(size=fwd().shape)
    fwd()
    dx = layer.backward(dy)
    f = lambda: float((fwd() * dy).sum())
    errs = [rel_error(dx, numeric_grad(f, x))]
    if params:
        errs += [rel_error(layer.grads[k], numeric_grad(f, p)) for k, p in layer.params.items()]
    return max(errs)


def _bsf_fd(layer, x, rng):
    """Filter weights: straight-through gradient against the eval-mode surrogate y = w * x."""
    layer.w = rng.uniform(0.05, 0.95, layer.n_units)
    dy = rng.normal(size=x.shape)
    layer.forward(x, train=True, rng=RngStream(0))
    layer.backward(dy)
    f = lambda: float((layer.forward(x) * dy).sum())
    return rel_error(layer.grads["w"], numeric_grad(f, layer.params["w"]))


def test_8_gradient_suite():
    n = 20
    worst = {}
    for seed in range(n):
        rng = np.random.default_rng(1000 + seed)
        cases = {}
        for act in ("linear", "relu", "tanh"):
            d = Dense(4, 3, act)
            d.params = {"W": rng.normal(size=(4, 3)), "b": rng.normal(size=3)}
            cases[f"dense/{act}"] = _fd(d, rng.normal(size=(5, 4)), rng, seed)
        for fn in ("relu", "tanh"):
            cases[f"activation/{fn}"] = _fd(Activation(fn), rng.normal(size=(3, 6)), rng, seed)
        conv = Conv2D(2, 3, ("linear", "relu", "tanh")[seed % 3])
        conv.params = {"W": rng.normal(size=(3, 2, 3, 3)), "b": rng.normal(size=3)}
        cases["conv2d"] = _fd(conv, rng.normal(size=(2, 2, 6, 6)), rng, seed)
        cases["maxpool2d"] = _fd(MaxPool2D(), rng.normal(size=(2, 2, 6, 5)), rng, seed)
        cases["flatten"] = _fd(Flatten(), rng.normal(size=(2, 3, 2, 2)), rng, seed)
        cases["dropout"] = _fd(Dropout(0.4), rng.normal(size=(4, 6)), rng, seed)
        cases["bsf_element"] = _bsf_fd(BsfElement(6), rng.normal(size=(4, 6)), rng)
        cases["bsf_channel"] = _bsf_fd(BsfChannel(3), rng.normal(size=(2, 3, 4, 4)), rng)
        probs = rng.uniform(0.05, 0.95, (4, 3))
        onehot = np.eye(3)[rng.integers(0, 3, 4)]
        cases["loss"] = rel_error(loss_and_grad(probs, onehot)[1],
                                  numeric_grad(lambda: loss_and_grad(probs, onehot)[0], probs))
        net = build_mlp(3, 3, hidden=[4], activation="tanh", seed=seed)
        x, onehot = rng.normal(size=(3, 3)), np.eye(3)[rng.integers(0, 3, 3)]
        p = net.forward(x, train=True)
        net.backward(p, loss_and_grad(p, onehot)[1])
        loss = lambda: loss_and_grad(net.forward(x), onehot)[0]
        cases["softmax+network"] = max(rel_error(l.grads[k], numeric_grad(loss, v))
                                       for l in net.layers for k, v in l.params.items())
        for name, err in cases.items():
            worst[name] = max(worst.get(name, 0.0), err)
    bad = {k: v for k, v in worst.items() if not v < 1e-6}
    verdict(8, not bad, f"{len(worst)} layer/loss kinds x {n} instances, worst relative error "
            f"{max(worst.values()):.1e} (< 1e-6)" + (f"; failing {sorted(bad)}" if bad else ""))


def test_9_bernoulli_contract():
    n = 10_000
    lines, ok = [], True
    for w in (0.1, 0.5, 0.9):
        layer = BsfElement(1)
        layer.w = [w]
        rate = bsf_forward(layer, np.ones((n, 1)), True, RngStream(9, f"rate{w}"))[1].mean()
        sigma = math.sqrt(w * (1 - w) / n)
        ok &= abs(rate - w) <= 3 * sigma
        lines.append(f"w={w}: {rate:.4f}")
    for w, expected in ((0.0, 0.0), (1.0, 1.0)):
        for layer, shape in ((BsfElement(4), (n, 4)), (BsfChannel(4), (n // 10, 4, 2, 2))):
            layer.w = np.full(4, w)
            mask = bsf_forward(layer, np.ones(shape), True, RngStream(9, f"edge{w}"))[1]
            ok &= bool((mask == expected).all())
    verdict(9, ok, "pass rates " + ", ".join(lines) + " within 3 sigma at n=1e4; w=0 and w=1 exact")


def test_10_structural_equivalence():
    cases, worst = 60, 0.0
    for seed in range(cases):
        rng = np.random.default_rng(50_000 + seed)
        net, x = random_gated_net(rng, seed)
        gated = gate_masks(net, PruneThreshold("absolute", 0.0))
        masks = {i: rng.uniform(size=len(m)) < 0.6 for i, m in gated.items()}
        for m in masks.values():
            if not m.any():
                m[rng.integers(len(m))] = True
        diff = np.max(np.abs(prune_structure(net, masks).forward(x) - masked_copy(net, masks).forward(x)))
        worst = max(worst, float(diff))
    verdict(10, worst <= 1e-10, f"{cases} random networks and masks, worst |pruned - masked| = {worst:.1e} (<= 1e-10)")


def test_11_cli_determinism(tmp_path):
    out = tmp_path / "run"
    argv = [sys.executable, "-m", "bsfnet", "select-features", "--data", str(DATA / "wine.csv"),
            "--labels-col", "class", "--l1", "0.01", "--threshold", "topk:6", "--folds", "10", "--seed", "7",
            "--out", str(out)]
    reports = []
    for _ in range(2):
        subprocess.run(argv, check=True, capture_output=True)
        reports.append((out / "report.json").read_bytes())
    verdict(11, reports[0] == reports[1],
            f"two identical select-features runs wrote byte-identical report.json ({len(reports[0])} bytes)")
