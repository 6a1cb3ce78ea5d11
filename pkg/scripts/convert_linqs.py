#!/usr/bin/env python3
"""Convert a citation dataset from the LINQS text format to this package's
dataset layout.

The LINQS distribution of the citation graphs ships two files:

* ``<name>.content``: one line per paper,
  ``<paper_id> <w_1> ... <w_d> <class_label>`` (binary word features).
* ``<name>.cites``: one line per citation, ``<cited_id> <citing_id>``.

This script assigns node indices in ``.content`` order, maps class labels to
integers in sorted order, symmetrizes and deduplicates the citation pairs,
and writes ``edges.txt``, ``features.csv``, and ``labels.csv`` into the
output directory.  Splits are not written; the loader generates them
(``masks.csv`` can be added by hand to pin one).

Example::

    python scripts/convert_linqs.py cora.content cora.cites data/cora
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import numpy as np

from elasticgraph.data import Dataset, write_dataset
from elasticgraph.errors import InputError
from elasticgraph.graphs import build_graph


def convert(content_path, cites_path, out_dir):
    ids = []
    rows = []
    label_names = []
    with open(content_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 3:
                raise InputError(f"{content_path}:{lineno}: too few fields")
            ids.append(parts[0])
            rows.append([float(v) for v in parts[1:-1]])
            label_names.append(parts[-1])
    if not ids:
        raise InputError(f"{content_path}: no records")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise InputError(f"{content_path}: inconsistent feature widths {sorted(widths)}")

    index = {pid: i for i, pid in enumerate(ids)}
    if len(index) != len(ids):
        raise InputError(f"{content_path}: duplicate paper ids")
    classes = sorted(set(label_names))
    class_index = {c: i for i, c in enumerate(classes)}
    labels = np.array([class_index[name] for name in label_names], dtype=np.int64)
    X = np.array(rows, dtype=np.float64)
    n = len(ids)

    edges = []
    skipped = 0
    with open(cites_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise InputError(f"{cites_path}:{lineno}: expected two ids")
            a, b = parts
            if a not in index or b not in index:
                skipped += 1
                continue
            edges.append((index[a], index[b]))
    graph = build_graph(edges, n)

    os.makedirs(out_dir, exist_ok=True)
    # write_dataset needs masks; emit placeholder all-test masks and drop the
    # file so the loader regenerates real splits
    placeholder = Dataset(
        graph=graph, X_fea=X, labels=labels,
        train_mask=np.zeros(n, dtype=bool),
        val_mask=np.zeros(n, dtype=bool),
        test_mask=np.ones(n, dtype=bool),
        name=os.path.basename(os.path.normpath(out_dir)),
    ).validate()
    write_dataset(placeholder, out_dir)
    os.remove(os.path.join(out_dir, "masks.csv"))

    print(f"{out_dir}: n={n} m={graph.m} d={X.shape[1]} classes={len(classes)}"
          + (f" (skipped {skipped} citations to unknown ids)" if skipped else ""))
    return placeholder


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("content", help="<name>.content file")
    parser.add_argument("cites", help="<name>.cites file")
    parser.add_argument("out", help="output dataset directory")
    args = parser.parse_args(argv)
    try:
        convert(args.content, args.cites, args.out)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
