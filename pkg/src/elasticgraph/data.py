"""Dataset loading, synthetic instance generation, and perturbed-graph ingest.

On-disk layout of a dataset directory (all plain text, 0-based indices):

* ``edges.txt``    -- one edge per line, ``i j [w]``; ``#`` comments.
* ``features.csv`` -- n rows of comma-separated reals.
* ``labels.csv``   -- n integer class labels, one per line.
* ``masks.csv``    -- optional; n rows ``train,val,test`` of 0/1 flags.

When ``masks.csv`` is absent a split is generated: either the citation-style
protocol (20 training nodes per class, 500 validation, 1000 test) or the
fractional 10%/10%/80% protocol used for robustness runs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse.csgraph as csgraph

from .errors import InputError
from .graphs import Graph, as_signal, build_graph, load_graph, write_edge_list

__all__ = [
    "Dataset",
    "SyntheticSpec",
    "load_dataset",
    "write_dataset",
    "generate_synthetic",
    "load_perturbed_edges",
    "planetoid_split",
    "fractional_split",
]

PLANETOID_TRAIN_PER_CLASS = 20
PLANETOID_VAL = 500
PLANETOID_TEST = 1000


@dataclass(frozen=True)
class Dataset:
    """Node-classification instance: graph, features, labels, disjoint splits."""

    graph: Graph
    X_fea: np.ndarray       # (n, d_in) float64
    labels: np.ndarray      # (n,) int64 in [0, C)
    train_mask: np.ndarray  # (n,) bool
    val_mask: np.ndarray
    test_mask: np.ndarray
    name: str = ""

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def validate(self) -> "Dataset":
        n = self.graph.n
        if self.X_fea.shape[0] != n:
            raise InputError(f"features have {self.X_fea.shape[0]} rows for n={n}")
        if self.labels.shape != (n,):
            raise InputError(f"labels shape {self.labels.shape} for n={n}")
        if self.labels.size and self.labels.min() < 0:
            raise InputError("negative class label")
        for name_, mask in (("train", self.train_mask), ("val", self.val_mask),
                            ("test", self.test_mask)):
            if mask.shape != (n,) or mask.dtype != np.bool_:
                raise InputError(f"{name_} mask must be a boolean vector of length {n}")
        overlap = (self.train_mask & self.val_mask) | \
                  (self.train_mask & self.test_mask) | \
                  (self.val_mask & self.test_mask)
        if overlap.any():
            raise InputError("train/val/test masks overlap")
        as_signal(self.X_fea, rows=n, name="features")
        return self


@dataclass(frozen=True)
class SyntheticSpec:
    """Planted-cluster generator spec.

    A stochastic block model with ``clusters`` groups of ``nodes_per_cluster``
    nodes; edge probability ``p_in`` inside a group and ``p_out`` across
    groups.  Features are the one-hot group mean scaled by ``signal_gap``
    plus N(0, noise_sd^2) noise; labels are the group ids.
    """

    clusters: int
    nodes_per_cluster: int
    p_in: float
    p_out: float
    signal_gap: float = 1.0
    noise_sd: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.clusters < 1 or self.nodes_per_cluster < 1:
            raise InputError("clusters and nodes_per_cluster must be >= 1")
        if not 0.0 <= self.p_out < self.p_in <= 1.0:
            raise InputError(
                f"need 0 <= p_out < p_in <= 1, got p_in={self.p_in}, p_out={self.p_out}"
            )


def planetoid_split(labels, rng: np.random.Generator,
                    train_per_class: int = PLANETOID_TRAIN_PER_CLASS,
                    val_size: int = PLANETOID_VAL,
                    test_size: int | None = PLANETOID_TEST):
    """Citation-style split: fixed-size train per class, then val and test.

    Takes ``train_per_class`` random nodes from each class (all of them if a
    class is smaller), then disjoint random validation and test sets from the
    remainder.  ``test_size=None`` assigns every remaining node to test.
    """
    labels = np.asarray(labels)
    n = labels.size
    train = np.zeros(n, dtype=bool)
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        take = min(train_per_class, members.size)
        train[rng.choice(members, size=take, replace=False)] = True
    rest = np.flatnonzero(~train)
    if rest.size < val_size + (test_size or 0):
        raise InputError(
            f"{rest.size} nodes left after the train split; need "
            f"{val_size + (test_size or 0)} for validation + test "
            "(use the fractional split for small graphs)"
        )
    rest = rng.permutation(rest)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    val[rest[:val_size]] = True
    if test_size is None:
        test[rest[val_size:]] = True
    else:
        test[rest[val_size:val_size + test_size]] = True
    return train, val, test


def fractional_split(labels, rng: np.random.Generator,
                     train_frac: float = 0.1, val_frac: float = 0.1,
                     max_tries: int = 100):
    """Random 10%/10%/80% split; redrawn until every class is in train."""
    labels = np.asarray(labels)
    n = labels.size
    classes = np.unique(labels)
    n_train = int(train_frac * n)
    n_val = int(val_frac * n)
    if n_train < classes.size:
        raise InputError(
            f"train share of {n_train} nodes cannot cover {classes.size} classes"
        )
    for _ in range(max_tries):
        order = rng.permutation(n)
        train = np.zeros(n, dtype=bool)
        val = np.zeros(n, dtype=bool)
        test = np.zeros(n, dtype=bool)
        train[order[:n_train]] = True
        val[order[n_train:n_train + n_val]] = True
        test[order[n_train + n_val:]] = True
        if np.array_equal(np.unique(labels[train]), classes):
            return train, val, test
    raise InputError("could not draw a train split covering every class")


def _load_matrix(path, dtype, name):
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=dtype, ndmin=2)
    except OSError as exc:
        raise InputError(f"{name}: cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise InputError(f"{name}: malformed {path}: {exc}") from exc
    return arr


def load_dataset(directory, split: str = "planetoid", seed: int = 0,
                 identity_features: bool = False, lcc: bool = False,
                 row_normalize: bool = False, name: str | None = None) -> Dataset:
    """Load and validate a dataset directory.

    ``split`` selects the protocol used when ``masks.csv`` is absent:
    ``planetoid`` (20 per class / 500 / 1000) or ``fraction`` (10/10/80).
    ``identity_features`` substitutes the n x n identity for missing
    features.  ``lcc`` restricts everything to the largest connected
    component before splitting.  ``row_normalize`` rescales feature rows to
    unit sum (zero rows stay zero).
    """
    directory = os.fspath(directory)
    labels_path = os.path.join(directory, "labels.csv")
    if not os.path.exists(labels_path):
        raise InputError(f"missing {labels_path}")
    labels = _load_matrix(labels_path, np.int64, "labels").ravel()
    n = labels.size
    if labels.size and (labels.min() < 0 or labels.max() >= n):
        raise InputError(f"{labels_path}: class label out of range [0, {n})")

    edges_path = os.path.join(directory, "edges.txt")
    if not os.path.exists(edges_path):
        raise InputError(f"missing {edges_path}")
    graph = load_graph(edges_path, n=n)

    feat_path = os.path.join(directory, "features.csv")
    X = None    # identity placeholder, materialized after any LCC restriction
    if os.path.exists(feat_path):
        X = _load_matrix(feat_path, np.float64, "features")
        if X.shape[0] != n:
            raise InputError(
                f"features.csv has {X.shape[0]} rows but labels.csv has {n}"
            )
    elif not identity_features:
        raise InputError(
            f"missing {feat_path} (pass identity_features=True to substitute I_n)"
        )

    masks_path = os.path.join(directory, "masks.csv")
    masks = None
    if os.path.exists(masks_path):
        raw = _load_matrix(masks_path, np.int64, "masks")
        if raw.shape != (n, 3) or not np.isin(raw, (0, 1)).all():
            raise InputError(f"masks.csv must be {n} rows of three 0/1 flags")
        masks = (raw[:, 0].astype(bool), raw[:, 1].astype(bool),
                 raw[:, 2].astype(bool))

    if lcc:
        _, comp = csgraph.connected_components(graph.adjacency, directed=False)
        keep = comp == np.bincount(comp).argmax()
        old_to_new = -np.ones(n, dtype=np.int64)
        old_to_new[keep] = np.arange(keep.sum())
        in_lcc = keep[graph.edges[:, 0]]    # both endpoints stay together
        graph = build_graph(old_to_new[graph.edges[in_lcc]], int(keep.sum()),
                            graph.weights[in_lcc])
        labels = labels[keep]
        if X is not None:
            X = X[keep]
        if masks is not None:
            masks = tuple(m[keep] for m in masks)
        n = labels.size
        # labels may now skip class ids; remap to a dense range
        _, labels = np.unique(labels, return_inverse=True)

    if X is None:
        X = np.eye(n)
    if row_normalize:
        sums = X.sum(axis=1, keepdims=True)
        X = np.divide(X, sums, out=np.zeros_like(X), where=sums != 0)

    if masks is None:
        rng = np.random.default_rng(seed)
        if split == "planetoid":
            masks = planetoid_split(labels, rng)
        elif split == "fraction":
            masks = fractional_split(labels, rng)
        else:
            raise InputError(f"unknown split protocol {split!r}")

    ds = Dataset(graph=graph, X_fea=np.asarray(X, dtype=np.float64),
                 labels=labels.astype(np.int64),
                 train_mask=masks[0], val_mask=masks[1], test_mask=masks[2],
                 name=name or os.path.basename(os.path.normpath(directory)))
    return ds.validate()


def write_dataset(ds: Dataset, directory) -> None:
    """Write a dataset in the directory layout read by :func:`load_dataset`."""
    directory = os.fspath(directory)
    os.makedirs(directory, exist_ok=True)
    write_edge_list(ds.graph, os.path.join(directory, "edges.txt"))
    np.savetxt(os.path.join(directory, "features.csv"), ds.X_fea,
               delimiter=",", fmt="%.17g")
    np.savetxt(os.path.join(directory, "labels.csv"),
               ds.labels.reshape(-1, 1), fmt="%d")
    masks = np.stack([ds.train_mask, ds.val_mask, ds.test_mask], axis=1)
    np.savetxt(os.path.join(directory, "masks.csv"), masks.astype(np.int64),
               delimiter=",", fmt="%d")


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Sample a planted-cluster dataset; deterministic given ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    c, npc = spec.clusters, spec.nodes_per_cluster
    n = c * npc
    labels = np.repeat(np.arange(c, dtype=np.int64), npc)

    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    probs = np.where(same, spec.p_in, spec.p_out)
    chosen = rng.random(iu.size) < probs
    edges = np.stack([iu[chosen], ju[chosen]], axis=1)
    graph = build_graph(edges, n)

    means = spec.signal_gap * np.eye(c)[labels]
    X = means + spec.noise_sd * rng.standard_normal((n, c))

    # per-class split scaled to the instance, so tiny graphs stay usable
    train, val, test = planetoid_split(
        labels, rng,
        train_per_class=max(1, npc // 10),
        val_size=max(1, n // 10),
        test_size=None,
    )
    ds = Dataset(graph=graph, X_fea=X, labels=labels, train_mask=train,
                 val_mask=val, test_mask=test,
                 name=f"synthetic-c{c}x{npc}-seed{spec.seed}")
    return ds.validate()


def load_perturbed_edges(base: Dataset, edges_path):
    """Dataset with the base graph replaced by an edge file.

    Features, labels, and masks are shared with ``base``.  Returns
    ``(dataset, rate)`` where ``rate`` is the edge-set symmetric difference
    size divided by the base edge count (each added or removed edge counts
    once).
    """
    graph = load_graph(edges_path, n=base.n)
    base_set = {tuple(e) for e in base.graph.edges}
    new_set = {tuple(e) for e in graph.edges}
    flips = len(base_set ^ new_set)
    rate = flips / max(1, base.graph.m)
    ds = replace(base, graph=graph,
                 name=f"{base.name}+{os.path.basename(os.fspath(edges_path))}")
    return ds.validate(), rate
