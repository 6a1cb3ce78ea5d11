"""Shared test helpers: random instance generators and dataset discovery."""

import os

import numpy as np
import pytest

from elasticgraph.graphs import build_graph, normalized_operators


def random_graph(rng, n=None, edge_prob=None, weighted=False):
    """A random simple graph (possibly disconnected, possibly empty)."""
    if n is None:
        n = int(rng.integers(2, 21))
    if edge_prob is None:
        edge_prob = float(rng.uniform(0.05, 0.6))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)
             if rng.random() < edge_prob]
    weights = rng.uniform(0.2, 3.0, size=len(pairs)) if weighted else None
    return build_graph(pairs, n, weights)


def random_instance(rng, n=None, d=None, **kwargs):
    """Graph, operators, and a Gaussian signal."""
    g = random_graph(rng, n=n, **kwargs)
    ops = normalized_operators(g)
    if d is None:
        d = int(rng.choice([1, 3]))
    X = rng.standard_normal((g.n, d))
    return g, ops, X


def data_root():
    return os.environ.get("ELASTICGRAPH_DATA",
                          os.path.join(os.path.dirname(__file__), "..", "data"))


def cora_dir():
    return os.path.join(data_root(), "cora")


def cora_available():
    d = cora_dir()
    return all(os.path.exists(os.path.join(d, f))
               for f in ("edges.txt", "features.csv", "labels.csv"))


requires_cora = pytest.mark.skipif(
    not cora_available(),
    reason="Cora dataset not found; place it under $ELASTICGRAPH_DATA/cora "
           "(see README, scripts/convert_linqs.py)",
)
