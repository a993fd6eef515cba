"""Reference-vector reduction for k-NN via a labelled 3-D PLSOM.

A PLSOM is trained on the raw training vectors; each training vector then
votes at its winning node, and a node keeps a class label only when the
top class polls at least three times every other class (the thrice rule).
Unlabelled and silent nodes are pruned, and the surviving node weights act
as the reference vectors for k-NN classification of the test split.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .lattice import Lattice, WeightMatrix, rng_streams
from .plsom import PlsomParams, PlsomState, plsom_step


@dataclass
class LabeledDataset:
    """Feature vectors with one class label per row."""

    vectors: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        self.labels = np.asarray(self.labels)
        if self.vectors.ndim != 2:
            raise ValueError(f"vectors must be 2-D, got shape {self.vectors.shape}")
        if self.labels.shape != (self.vectors.shape[0],):
            raise ValueError("need exactly one label per vector")
        if self.vectors.shape[0] == 0:
            raise ValueError("dataset is empty")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass
class SplitDataset:
    train: LabeledDataset
    test: LabeledDataset

    def __post_init__(self):
        if self.train.dim != self.test.dim:
            raise ValueError("train and test vector dimensions differ")


def load_delimited(path, delimiter: Optional[str] = None) -> LabeledDataset:
    """Parse delimiter-separated numeric rows with a trailing class id.

    Accepts comma- or whitespace-separated values; a trailing '.' after the
    class token (as in some distributed data files) is ignored.  Integral
    class ids become ints, anything else stays a string label.
    """
    vectors = []
    labels = []
    with Path(path).open("r") as f:
        for line in f:
            line = line.strip().rstrip(".")
            if not line:
                continue
            parts = line.split(delimiter) if delimiter else line.replace(",", " ").split()
            if len(parts) < 2:
                raise ValueError(f"{path}: row with fewer than 2 fields: {line!r}")
            vectors.append([float(v) for v in parts[:-1]])
            tok = parts[-1].strip()
            try:
                val = float(tok)
                labels.append(int(val) if val == int(val) else tok)
            except ValueError:
                labels.append(tok)
    return LabeledDataset(np.asarray(vectors), np.asarray(labels))


@dataclass
class LabeledMap:
    """Surviving reference vectors with exactly one class label each."""

    node_indices: np.ndarray  # original node ids of the survivors
    weights: np.ndarray       # (survivors, dim)
    labels: np.ndarray        # (survivors,)

    @property
    def survivor_count(self) -> int:
        return self.weights.shape[0]


def _batch_winners(weights: np.ndarray, vectors: np.ndarray,
                   chunk: int = 256) -> np.ndarray:
    """Winning node per vector, ties toward the lowest node index."""
    n = vectors.shape[0]
    out = np.empty(n, dtype=int)
    w_sq = np.einsum("ij,ij->i", weights, weights)
    for s in range(0, n, chunk):
        block = vectors[s:s + chunk]
        # ||w - x||^2 = ||w||^2 - 2 w.x + ||x||^2; the x term is constant per row
        d2 = w_sq[None, :] - 2.0 * block @ weights.T
        out[s:s + chunk] = np.argmin(d2, axis=1)
    return out


def label_and_prune(weights: WeightMatrix, train: LabeledDataset) -> LabeledMap:
    """Vote training vectors at their winners, apply the thrice rule, prune.

    A node keeps label L only if count(L) >= 3 * count(L') for every other
    label L'; nodes failing that, and nodes that win no vector at all, are
    removed.  Raises if nothing survives.
    """
    if weights.input_dim != train.dim:
        raise ValueError("map and dataset dimensions differ")
    winners = _batch_winners(weights.values, train.vectors)
    classes, class_idx = np.unique(train.labels, return_inverse=True)
    votes = np.zeros((weights.node_count, classes.size), dtype=int)
    np.add.at(votes, (winners, class_idx), 1)

    node_indices = []
    node_labels = []
    for node in range(weights.node_count):
        v = votes[node]
        total = int(v.sum())
        if total == 0:
            continue
        top = int(np.argmax(v))
        rest = np.delete(v, top)
        if rest.size and int(rest.max()) * 3 > int(v[top]):
            continue
        node_indices.append(node)
        node_labels.append(classes[top])
    if not node_indices:
        raise ValueError("no nodes survive labelling; the map is unusable")
    idx = np.asarray(node_indices, dtype=int)
    return LabeledMap(idx, weights.values[idx].copy(), np.asarray(node_labels))


def knn_classify(ref: LabeledMap, x, k: int):
    """Majority label among the k nearest reference vectors.

    Ties are resolved by decreasing k and revoting; k = 1 is always
    unambiguous because neighbor order breaks distance ties by node index.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if ref.survivor_count == 0:
        raise ValueError("reference map is empty")
    x = np.asarray(x, dtype=float)
    diff = ref.weights - x
    d2 = np.einsum("ij,ij->i", diff, diff)
    order = np.lexsort((np.arange(d2.size), d2))  # distance, then node order
    k = min(k, ref.survivor_count)
    while k > 1:
        top = ref.labels[order[:k]]
        classes, counts = np.unique(top, return_counts=True)
        best = counts.max()
        if int(np.sum(counts == best)) == 1:
            return classes[int(np.argmax(counts))]
        k -= 1
    return ref.labels[order[0]]


@dataclass(frozen=True)
class MapConfig:
    """Training configuration for the classifier map."""

    extents: tuple[int, ...] = (20, 20, 20)
    beta: float = 2.0
    theta_min: Optional[float] = None
    theta_variant: str = "affine"
    iterations: int = 100_000
    init_halfwidth: float = 0.1

    def params(self) -> PlsomParams:
        return PlsomParams(self.beta, self.theta_min, self.theta_variant)


def train_classifier_map(config: MapConfig, train: LabeledDataset,
                         seed: int) -> WeightMatrix:
    """Train a PLSOM on random training samples.

    Stream 0 of ``rng_streams(seed, 2)`` draws the initial weights around
    the training data's componentwise mean; stream 1 picks one training row
    index per iteration.
    """
    lattice = Lattice(config.extents)
    rng_init, rng_pick = rng_streams(seed, 2)
    center = train.vectors.mean(axis=0)
    w = WeightMatrix(center + config.init_halfwidth
                     * (2.0 * rng_init.random((lattice.node_count, train.dim)) - 1.0))
    state = PlsomState(lattice, w)
    params = config.params()
    n = train.vectors.shape[0]
    for _ in range(config.iterations):
        x = train.vectors[int(rng_pick.integers(0, n))]
        plsom_step(state, x, params)
    return state.weights


def evaluate(config: MapConfig, dataset: SplitDataset, k: int = 5,
             seed: int = 0) -> dict:
    """Full pipeline: train, label and prune, classify the test split.

    Returns a report with accuracy, survivor count and per-class confusion
    counts (keys "true->predicted").
    """
    weights = train_classifier_map(config, dataset.train, seed)
    ref = label_and_prune(weights, dataset.train)
    correct = 0
    confusion: dict[str, int] = {}
    for x, truth in zip(dataset.test.vectors, dataset.test.labels):
        pred = knn_classify(ref, x, k)
        if pred == truth:
            correct += 1
        key = f"{truth}->{pred}"
        confusion[key] = confusion.get(key, 0) + 1
    n_test = dataset.test.vectors.shape[0]
    return {
        "accuracy": correct / n_test,
        "correct": correct,
        "test_size": n_test,
        "survivors": ref.survivor_count,
        "node_count": weights.node_count,
        "k": k,
        "confusion": dict(sorted(confusion.items())),
    }


def write_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True))
