"""Classification accuracy and the silhouette coefficient."""

from __future__ import annotations

import math

import numpy as np

from .errors import InputError


def accuracy(probs: np.ndarray, labels) -> float:
    """Fraction of rows whose argmax (lowest index on ties) equals the label."""
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    if probs.shape[0] != labels.shape[0]:
        raise InputError(f"{probs.shape[0]} predictions for {labels.shape[0]} labels")
    if labels.size == 0:
        return 0.0
    return float((probs.argmax(axis=1) == labels).mean())


def pairwise_distances(x: np.ndarray) -> np.ndarray:
    # features accumulated one at a time, left to right
    x = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
    d2 = np.zeros((len(x), len(x)))
    for k in range(x.shape[1]):
        diff = x[:, k, None] - x[None, :, k]
        d2 += diff * diff
    return np.sqrt(d2)


def silhouette_samples(features: np.ndarray, labels) -> np.ndarray:
    labels = np.asarray(labels)
    clusters = np.unique(labels)
    if len(clusters) < 2:
        raise InputError("silhouette needs at least two clusters")
    dist = pairwise_distances(features)
    members = {c: np.flatnonzero(labels == c) for c in clusters}
    s = np.zeros(len(labels))
    for i, ci in enumerate(labels):
        own = members[ci]
        if len(own) == 1:
            continue
        # fsum is correctly rounded, so the means do not depend on summation order
        a = math.fsum(dist[i, own]) / (len(own) - 1)
        b = min(math.fsum(dist[i, idx]) / len(idx) for c, idx in members.items() if c != ci)
        top = max(a, b)
        s[i] = (b - a) / top if top > 0 else 0.0
    return s


def silhouette_coefficient(features: np.ndarray, labels) -> float:
    """Mean silhouette over all points, Euclidean distance.

    Points in singleton clusters score 0.
    """
    return math.fsum(silhouette_samples(features, labels)) / len(labels)
