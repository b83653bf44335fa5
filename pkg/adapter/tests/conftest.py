"""Fixtures: tiny raw-format files and bundles built without network access."""

from __future__ import annotations

import pickle
from collections import defaultdict
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from cpf_adapter import formats


def make_planetoid_fixture(raw_dir: Path, name: str = "toy") -> dict:
    """Tiny dataset in the pickled citation format.

    12 nodes: 8 in allx, 4 test (shuffled test.index). Nodes 0..9 form one
    component, node 10 is isolated, node 11 pairs with 9. Expected largest
    component: nodes 0..9 plus 11 via the 9-11 edge = 11 nodes.
    """
    raw_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(0)
    d, c = 5, 3
    all_feats = rng.random((12, d)).round(3)
    labels = np.array([0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2])

    def onehot(idx):
        out = np.zeros((idx.size, c))
        out[np.arange(idx.size), labels[idx]] = 1.0
        return out

    allx = sp.csr_matrix(all_feats[:8])
    tx_order = np.array([10, 8, 11, 9])  # shuffled test ids
    tx = sp.csr_matrix(all_feats[tx_order])
    ty = onehot(tx_order)

    graph = defaultdict(list)
    chain = [(i, i + 1) for i in range(9)] + [(9, 11)]
    for u, v in chain:
        graph[u].append(v)
        graph[v].append(u)
    graph[0].append(0)  # self loop to be dropped
    graph[10] = []  # isolated

    payload = {
        "x": sp.csr_matrix(all_feats[:4]),
        "y": onehot(np.arange(4)),
        "tx": tx,
        "ty": ty,
        "allx": allx,
        "ally": onehot(np.arange(8)),
        "graph": graph,
    }
    for suffix, obj in payload.items():
        with (raw_dir / f"ind.{name}.{suffix}").open("wb") as fh:
            pickle.dump(obj, fh)
    (raw_dir / f"ind.{name}.test.index").write_text(
        "\n".join(str(i) for i in tx_order) + "\n"
    )
    return {
        "features": all_feats,
        "labels": labels,
        "expected_nodes": 11,
        "expected_edges": 10,
    }


def make_npz_fixture(path: Path) -> dict:
    """Tiny dataset in the CSR-arrays npz format with a small side component."""
    rng = np.random.default_rng(1)
    n, d = 9, 4
    edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (7, 8)]
    rows = np.array([u for u, v in edges] + [v for u, v in edges])
    cols = np.array([v for u, v in edges] + [u for u, v in edges])
    adj = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    attr = sp.csr_matrix(rng.random((n, d)).round(3))
    labels = np.array([0, 1, 0, 1, 0, 1, 0, 1, 0])
    np.savez(
        path,
        adj_data=adj.data,
        adj_indices=adj.indices,
        adj_indptr=adj.indptr,
        adj_shape=np.array(adj.shape),
        attr_data=attr.data,
        attr_indices=attr.indices,
        attr_indptr=attr.indptr,
        attr_shape=np.array(attr.shape),
        labels=labels,
    )
    return {"expected_nodes": 6, "expected_edges": 6}


def make_training_bundle(out_dir: Path, seed: int = 0, per_class: int = 12) -> formats.Bundle:
    """Connected homophilous bundle with a split, written as TSV files."""
    rng = np.random.default_rng(seed)
    c, d = 3, 6
    n = c * per_class
    labels = np.repeat(np.arange(c), per_class)
    labels = labels[rng.permutation(n)]
    protos = rng.normal(size=(c, d))
    feats = (protos[labels] + 0.8 * rng.normal(size=(n, d))).round(6)
    edges = {(i, (i + 1) % n) for i in range(n)}  # ring keeps it connected
    for u in range(n):
        for v in range(u + 1, n):
            p = 0.15 if labels[u] == labels[v] else 0.01
            if rng.random() < p:
                edges.add((u, v))
    edges = {(min(u, v), max(u, v)) for u, v in edges}
    raw = formats.RawGraph(
        edges=np.array(sorted(edges), dtype=np.int64),
        features=feats,
        labels=labels,
        num_classes=c,
    )
    formats.write_bundle_dir(raw, out_dir)
    roles = {}
    for cls in range(c):
        members = rng.permutation(np.flatnonzero(labels == cls))
        for v in members[:3]:
            roles[int(v)] = "train"
        for v in members[3:6]:
            roles[int(v)] = "val"
        for v in members[6:]:
            roles[int(v)] = "test"
    with (out_dir / "split.tsv").open("w") as fh:
        fh.write("#seed=0\n")
        for v in sorted(roles):
            fh.write(f"{v}\t{roles[v]}\n")
    return formats.read_bundle(out_dir)


@pytest.fixture(scope="session")
def training_bundle(tmp_path_factory):
    out = tmp_path_factory.mktemp("bundle") / "toy"
    bundle = make_training_bundle(out)
    return out, bundle
