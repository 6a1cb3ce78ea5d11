"""Sparse graph structures and the degree-normalized operators built from them.

Conventions used throughout the package:

* Graphs are simple and undirected.  Each edge is stored once, in canonical
  orientation ``(i, j)`` with ``i < j``, and the edge list is sorted
  lexicographically so that derived operators are reproducible.
* "hat" degrees include a unit self-loop, ``d_i = (weighted degree of i) + 1``,
  so every degree is >= 1 and isolated nodes are legal.
* ``A_tilde = Dhat^{-1/2} (A + I) Dhat^{-1/2}`` and ``L_tilde = I - A_tilde``.
* ``Delta_tilde`` is the degree-normalized incidence matrix: row ``e`` for
  edge ``(i, j)`` of weight ``w`` holds ``-sqrt(w/d_i)`` at column ``i`` and
  ``+sqrt(w/d_j)`` at column ``j``, which gives the factorization
  ``L_tilde = Delta_tilde.T @ Delta_tilde``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InputError, NumericError

__all__ = [
    "Graph",
    "NormalizedOperators",
    "build_graph",
    "normalized_operators",
    "spectral_norm",
    "as_signal",
    "read_edge_list",
    "load_graph",
    "write_edge_list",
]


@dataclass(frozen=True)
class Graph:
    """Immutable simple undirected graph.

    ``edges`` has one row per edge in canonical orientation (smaller index
    first); ``weights`` aligns with ``edges``; ``adjacency`` is the symmetric
    weighted adjacency matrix in CSR form with an empty diagonal.  Instances
    are safe to share across threads.
    """

    n: int
    edges: np.ndarray       # (m, 2) int64, i < j, lexicographically sorted
    weights: np.ndarray     # (m,) float64, all > 0
    adjacency: sp.csr_matrix

    @property
    def m(self) -> int:
        return self.edges.shape[0]


@dataclass(frozen=True)
class NormalizedOperators:
    """Degree-normalized operators derived from a :class:`Graph`.

    All matrices are CSR.  ``degrees`` holds the self-loop-augmented degrees
    ``d_i``.  Immutable; products with these matrices are safe to run
    concurrently.
    """

    graph: Graph
    degrees: np.ndarray          # (n,) d_i = weighted degree + 1
    A_tilde: sp.csr_matrix       # n x n normalized adjacency (with self-loops)
    L_tilde: sp.csr_matrix       # n x n, I - A_tilde
    Delta_tilde: sp.csr_matrix   # m x n, two nonzeros per row

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def m(self) -> int:
        return self.graph.m


def build_graph(edge_list, n, weights=None) -> Graph:
    """Build a validated :class:`Graph` from an edge list.

    Self-loops are stripped and duplicate edges removed (the first occurrence
    wins when weights differ).  Edge weights default to 1 and must be
    positive.

    Raises
    ------
    InputError
        If ``n <= 0``, an index falls outside ``[0, n)``, or a weight is not
        positive.
    """
    if n is None or int(n) <= 0:
        raise InputError(f"node count must be positive, got {n}")
    n = int(n)

    edges = np.asarray(edge_list, dtype=np.int64).reshape(-1, 2)
    if weights is None:
        w = np.ones(edges.shape[0], dtype=np.float64)
    else:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if w.shape[0] != edges.shape[0]:
            raise InputError(
                f"{w.shape[0]} weights supplied for {edges.shape[0]} edges"
            )
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        bad = edges[(edges < 0).any(axis=1) | (edges >= n).any(axis=1)][0]
        raise InputError(f"edge {tuple(bad)} out of range for n={n}")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise InputError("edge weights must be finite and positive")

    keep = edges[:, 0] != edges[:, 1]
    edges, w = edges[keep], w[keep]
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    pairs = np.stack([lo, hi], axis=1)
    # unique() sorts pairs lexicographically; return_index keeps first-seen
    # weights for duplicates.
    pairs, first = np.unique(pairs, axis=0, return_index=True)
    w = w[first]

    m = pairs.shape[0]
    adjacency = sp.coo_matrix(
        (np.concatenate([w, w]),
         (np.concatenate([pairs[:, 0], pairs[:, 1]]),
          np.concatenate([pairs[:, 1], pairs[:, 0]]))),
        shape=(n, n),
    ).tocsr()
    return Graph(n=n, edges=pairs, weights=w, adjacency=adjacency)


def normalized_operators(g: Graph) -> NormalizedOperators:
    """Compute ``A_tilde``, ``L_tilde`` and ``Delta_tilde`` for a graph.

    The degrees include the unit self-loop, so the normalization is well
    defined even for isolated nodes.
    """
    deg = np.asarray(g.adjacency.sum(axis=1)).ravel() + 1.0
    inv_sqrt = 1.0 / np.sqrt(deg)

    # assemble the normalized adjacency entrywise so that the (i, j) and
    # (j, i) values are the same float and symmetry is exact
    i_idx, j_idx = g.edges[:, 0], g.edges[:, 1]
    off_diag = g.weights * inv_sqrt[i_idx] * inv_sqrt[j_idx]
    nodes = np.arange(g.n)
    a_tilde = sp.coo_matrix(
        (np.concatenate([off_diag, off_diag, inv_sqrt * inv_sqrt]),
         (np.concatenate([i_idx, j_idx, nodes]),
          np.concatenate([j_idx, i_idx, nodes]))),
        shape=(g.n, g.n),
    ).tocsr()
    l_tilde = (sp.identity(g.n, format="csr") - a_tilde).tocsr()

    m = g.m
    data = np.empty(2 * m, dtype=np.float64)
    sw = np.sqrt(g.weights)
    data[0::2] = -sw * inv_sqrt[g.edges[:, 0]]
    data[1::2] = sw * inv_sqrt[g.edges[:, 1]]
    indices = g.edges.reshape(-1)           # i < j keeps columns sorted per row
    indptr = np.arange(0, 2 * m + 1, 2)
    delta_tilde = sp.csr_matrix((data, indices, indptr), shape=(m, g.n))

    return NormalizedOperators(
        graph=g,
        degrees=deg,
        A_tilde=a_tilde,
        L_tilde=l_tilde,
        Delta_tilde=delta_tilde,
    )


def spectral_norm(M, tol: float = 1e-8, max_iter: int = 50_000, seed: int = 0) -> float:
    """Largest eigenvalue of a symmetric PSD matrix, by power iteration.

    Stops when the eigenpair residual ``||Mv - lam*v||`` drops below
    ``tol * max(1, lam)``.  The returned Rayleigh quotient never exceeds the
    true largest eigenvalue.

    Raises
    ------
    NumericError
        After ``max_iter`` iterations without convergence; carries the last
        estimate in ``estimate``.
    """
    n = M.shape[0]
    if n == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = M @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # v is in the kernel; retry from a fresh direction, otherwise M = 0.
            v = rng.standard_normal(n)
            nv = np.linalg.norm(v)
            if nv == 0.0 or np.linalg.norm(M @ (v / nv)) == 0.0:
                return 0.0
            v /= nv
            continue
        lam = float(v @ w)
        if np.linalg.norm(w - lam * v) <= tol * max(1.0, abs(lam)):
            return lam
        v = w / nw
    raise NumericError(
        f"power iteration did not converge in {max_iter} iterations",
        estimate=lam,
    )


def as_signal(values, rows: int | None = None, cols: int | None = None,
              name: str = "signal") -> np.ndarray:
    """Validate and coerce a dense node/edge signal to a float64 2-D array.

    1-D input becomes a single column.  All entries must be finite.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise InputError(f"{name} must be 1-D or 2-D, got shape {arr.shape}")
    if rows is not None and arr.shape[0] != rows:
        raise InputError(f"{name} has {arr.shape[0]} rows, expected {rows}")
    if cols is not None and arr.shape[1] != cols:
        raise InputError(f"{name} has {arr.shape[1]} columns, expected {cols}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    return arr


def read_edge_list(path):
    """Parse an edge-list file.

    One edge per line, ``i j [w]``, whitespace-separated; ``#`` starts a
    comment; blank lines are ignored.  Returns ``(edges, weights)`` where
    ``weights`` is None if no line carried one.

    Raises
    ------
    InputError
        On malformed lines, with file and line number.
    """
    edges = []
    weights = []
    saw_weight = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise InputError(f"{path}:{lineno}: expected 'i j [w]', got {raw!r}")
            try:
                i, j = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from exc
            if len(parts) == 3:
                saw_weight = True
            edges.append((i, j))
            weights.append(w)
    return edges, (weights if saw_weight else None)


def load_graph(path, n: int | None = None) -> Graph:
    """Load a :class:`Graph` from an edge-list file.

    If ``n`` is not given it is inferred as ``max index + 1`` (0 for an empty
    file).
    """
    edges, weights = read_edge_list(path)
    if n is None:
        if not edges:
            raise InputError(f"{path}: empty edge list and no node count given")
        n = max(max(i, j) for i, j in edges) + 1
    return build_graph(edges, n, weights)


def write_edge_list(g: Graph, path) -> None:
    """Write a graph in the edge-list format accepted by :func:`load_graph`."""
    unit = bool(np.all(g.weights == 1.0))
    with open(path, "w", encoding="utf-8") as fh:
        for (i, j), w in zip(g.edges, g.weights):
            if unit:
                fh.write(f"{i} {j}\n")
            else:
                fh.write(f"{i} {j} {float(w)!r}\n")
