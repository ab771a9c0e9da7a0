#!/usr/bin/env python3
"""Convert a citation-graph ``.npz`` archive into a pamt bundle directory.

The archive layout is the one used by the ``cora_ml.npz`` / ``citeseer.npz``
files distributed with several graph-learning code bases: a CSR adjacency
(``adj_data``, ``adj_indices``, ``adj_indptr``, ``adj_shape``), CSR or dense
attributes (``attr_*`` or ``attr_matrix``) and a ``labels`` vector.

The graph is symmetrized, self-loops and edge weights are dropped and, by
default, only the largest connected component is kept.

    python3 tools/npz_to_bundle.py cora_ml.npz data/cora_ml --name cora_ml
"""

import argparse
import json
import os

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components


def load_npz(path):
    with np.load(path, allow_pickle=True) as f:
        f = dict(f)
    adj = sp.csr_matrix((f["adj_data"], f["adj_indices"], f["adj_indptr"]), shape=f["adj_shape"])
    if "attr_data" in f:
        attr = sp.csr_matrix((f["attr_data"], f["attr_indices"], f["attr_indptr"]), shape=f["attr_shape"])
    elif "attr_matrix" in f:
        attr = sp.csr_matrix(f["attr_matrix"])
    else:
        raise SystemExit("archive has no attributes")
    if "labels" in f:
        labels = np.asarray(f["labels"])
    elif "labels_data" in f:
        lab = sp.csr_matrix((f["labels_data"], f["labels_indices"], f["labels_indptr"]), shape=f["labels_shape"])
        labels = np.asarray(lab.argmax(axis=1)).ravel()
    else:
        raise SystemExit("archive has no labels")
    return adj, attr, labels


def largest_component(adj):
    _, comp = connected_components(adj, directed=False)
    keep = np.flatnonzero(comp == np.bincount(comp).argmax())
    return keep


def fmt(v):
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def write_bundle(out, name, adj, attr, labels):
    os.makedirs(out, exist_ok=True)
    n, d = attr.shape
    classes = np.unique(labels)
    remap = {k: i for i, k in enumerate(classes)}
    meta = {"n": int(n), "d": int(d), "c": len(classes), "name": name, "format_version": 1}
    with open(os.path.join(out, "meta.json"), "w") as f:
        f.write(json.dumps(meta, indent=2) + "\n")

    upper = sp.triu(adj, k=1).tocsr()
    upper.sort_indices()
    with open(os.path.join(out, "edges.tsv"), "w") as f:
        for u in range(n):
            for v in upper.indices[upper.indptr[u]:upper.indptr[u + 1]]:
                f.write(f"{u}\t{v}\n")

    attr = attr.tocsr()
    attr.eliminate_zeros()
    attr.sort_indices()
    for stale in ("features.csv", "features.tsv"):
        p = os.path.join(out, stale)
        if os.path.exists(p):
            os.remove(p)
    if 3 * attr.nnz < n * d:
        with open(os.path.join(out, "features.tsv"), "w") as f:
            for i in range(n):
                lo, hi = attr.indptr[i], attr.indptr[i + 1]
                for j, v in zip(attr.indices[lo:hi], attr.data[lo:hi]):
                    f.write(f"{i}\t{j}\t{fmt(v)}\n")
    else:
        dense = attr.toarray()
        with open(os.path.join(out, "features.csv"), "w") as f:
            for row in dense:
                f.write(",".join(fmt(v) for v in row) + "\n")

    with open(os.path.join(out, "labels.tsv"), "w") as f:
        for u, k in enumerate(labels):
            f.write(f"{u}\t{remap[k]}\n")
    return meta, upper.nnz


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("npz")
    ap.add_argument("out")
    ap.add_argument("--name", help="dataset name (default: archive stem)")
    ap.add_argument("--keep-all", action="store_true", help="keep every connected component")
    args = ap.parse_args()

    adj, attr, labels = load_npz(args.npz)
    adj = adj.maximum(adj.T).tolil()
    adj.setdiag(0)
    adj = adj.tocsr()
    adj.eliminate_zeros()
    adj.data[:] = 1.0
    if not args.keep_all:
        keep = largest_component(adj)
        adj = adj[keep][:, keep]
        attr = attr[keep]
        labels = labels[keep]
    name = args.name or os.path.splitext(os.path.basename(args.npz))[0]
    meta, edges = write_bundle(args.out, name, adj, attr, labels)
    print(f"{args.out}: n={meta['n']} |E|={edges} d={meta['d']} c={meta['c']}")


if __name__ == "__main__":
    main()
