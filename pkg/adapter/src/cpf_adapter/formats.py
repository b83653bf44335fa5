"""Raw dataset parsing and bundle reading/writing.

Two upstream formats are supported, both parsed from local files (no
downloading):

* the pickled citation-network format (``ind.<name>.x/y/tx/ty/allx/ally/
  graph/test.index``) used by Cora, Citeseer and Pubmed distributions;
* the compressed ``.npz`` format of the Amazon co-purchase graphs
  (``adj_*``/``attr_*`` CSR arrays plus ``labels``).

Conversion symmetrizes and deduplicates edges, drops self-loops, keeps the
largest connected component with compacted indices, and writes the TSV
bundle consumed by the distillation toolkit. This module deliberately
re-implements the bundle format from its specification instead of importing
the toolkit: the two sides share only the files.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp


class RawDataError(ValueError):
    """Raised when raw dataset files are missing or malformed."""


PLANETOID_NAMES = ("cora", "citeseer", "pubmed")
NPZ_NAMES = {"a-computers": "amazon_electronics_computers.npz",
             "a-photo": "amazon_electronics_photo.npz"}


@dataclass
class RawGraph:
    edges: np.ndarray  # (E, 2) unique, u < v, no self loops
    features: np.ndarray
    labels: np.ndarray
    num_classes: int


def _dedupe(num_nodes: int, raw_edges: np.ndarray) -> np.ndarray:
    u = np.minimum(raw_edges[:, 0], raw_edges[:, 1]).astype(np.int64)
    v = np.maximum(raw_edges[:, 0], raw_edges[:, 1]).astype(np.int64)
    keep = u != v
    codes = np.unique(u[keep] * num_nodes + v[keep])
    return np.column_stack([codes // num_nodes, codes % num_nodes])


def load_planetoid(raw_dir: str | Path, name: str) -> RawGraph:
    """Parse the pickled citation format from local files."""
    raw_dir = Path(raw_dir)
    parts = {}
    for suffix in ("x", "y", "tx", "ty", "allx", "ally", "graph"):
        path = raw_dir / f"ind.{name}.{suffix}"
        if not path.is_file():
            raise RawDataError(f"missing raw file: {path}")
        with path.open("rb") as fh:
            parts[suffix] = pickle.load(fh, encoding="latin1")
    index_path = raw_dir / f"ind.{name}.test.index"
    if not index_path.is_file():
        raise RawDataError(f"missing raw file: {index_path}")
    test_idx = np.array(
        [int(line) for line in index_path.read_text().split() if line.strip()],
        dtype=np.int64,
    )

    allx = sp.csr_matrix(parts["allx"])
    tx = sp.csr_matrix(parts["tx"])
    ally = np.asarray(parts["ally"])
    ty = np.asarray(parts["ty"])

    test_range = np.arange(test_idx.min(), test_idx.max() + 1)
    num_nodes = allx.shape[0] + test_range.size

    # test features arrive shuffled; isolated ids missing from test.index
    # get zero rows (they fall outside the largest component anyway)
    tx_full = sp.lil_matrix((test_range.size, allx.shape[1]), dtype=np.float64)
    ty_full = np.zeros((test_range.size, ally.shape[1]))
    pos = test_idx - test_idx.min()
    tx_full[pos] = tx
    ty_full[pos] = ty

    features = sp.vstack([allx, sp.csr_matrix(tx_full)]).toarray().astype(np.float64)
    onehot = np.vstack([ally, ty_full])
    labels = onehot.argmax(axis=1).astype(np.int64)

    graph = parts["graph"]
    pairs = [(int(u), int(v)) for u, nbrs in graph.items() for v in nbrs]
    raw_edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    if raw_edges.size and raw_edges.max() >= num_nodes:
        raise RawDataError("edge references a node outside the feature matrix")
    return RawGraph(
        edges=_dedupe(num_nodes, raw_edges),
        features=features,
        labels=labels,
        num_classes=int(onehot.shape[1]),
    )


def load_npz(path: str | Path) -> RawGraph:
    """Parse the CSR-arrays npz format of the co-purchase graphs."""
    path = Path(path)
    if not path.is_file():
        raise RawDataError(f"missing raw file: {path}")
    with np.load(path, allow_pickle=True) as loader:
        data = dict(loader)
    adj = sp.csr_matrix(
        (data["adj_data"], data["adj_indices"], data["adj_indptr"]),
        shape=tuple(data["adj_shape"]),
    )
    if "attr_data" in data:
        features = sp.csr_matrix(
            (data["attr_data"], data["attr_indices"], data["attr_indptr"]),
            shape=tuple(data["attr_shape"]),
        ).toarray().astype(np.float64)
    else:
        features = np.asarray(data["attr_matrix"], dtype=np.float64)
    labels = np.asarray(data["labels"], dtype=np.int64)
    coo = adj.tocoo()
    raw_edges = np.column_stack([coo.row, coo.col]).astype(np.int64)
    return RawGraph(
        edges=_dedupe(adj.shape[0], raw_edges),
        features=features,
        labels=labels,
        num_classes=int(labels.max()) + 1,
    )


def largest_component(num_nodes: int, edges: np.ndarray) -> np.ndarray:
    """Original indices of the largest connected component (sorted).

    Ties go to the component containing the smallest node index.
    """
    adj: list[list[int]] = [[] for _ in range(num_nodes)]
    for u, v in edges:
        adj[u].append(int(v))
        adj[v].append(int(u))
    seen = np.zeros(num_nodes, dtype=bool)
    best: list[int] = []
    for start in range(num_nodes):
        if seen[start]:
            continue
        comp = [start]
        seen[start] = True
        frontier = [start]
        while frontier:
            nxt = []
            for w in frontier:
                for u in adj[w]:
                    if not seen[u]:
                        seen[u] = True
                        comp.append(u)
                        nxt.append(u)
            frontier = nxt
        if len(comp) > len(best):
            best = comp
    return np.array(sorted(best), dtype=np.int64)


def preprocess(raw: RawGraph) -> RawGraph:
    """Keep the largest connected component, indices compacted."""
    num_nodes = raw.features.shape[0]
    keep = largest_component(num_nodes, raw.edges)
    remap = np.full(num_nodes, -1, dtype=np.int64)
    remap[keep] = np.arange(keep.size)
    mask = (remap[raw.edges[:, 0]] >= 0) & (remap[raw.edges[:, 1]] >= 0)
    edges = remap[raw.edges[mask]]
    edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
    return RawGraph(
        edges=edges,
        features=raw.features[keep],
        labels=raw.labels[keep],
        num_classes=raw.num_classes,
    )


def write_bundle_dir(raw: RawGraph, out_dir: str | Path) -> None:
    """Write edges/features/labels TSV files in the bundle layout."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "edges.tsv").open("w", encoding="utf-8") as fh:
        for u, v in raw.edges:
            fh.write(f"{u}\t{v}\n")
    with (out_dir / "features.tsv").open("w", encoding="utf-8") as fh:
        for row in raw.features:
            fh.write("\t".join(f"{x:.9g}" for x in row) + "\n")
    with (out_dir / "labels.tsv").open("w", encoding="utf-8") as fh:
        for y in raw.labels:
            fh.write(f"{y}\n")


def convert_dataset(name: str, raw_dir: str | Path, out_dir: str | Path) -> RawGraph:
    """Convert a named public dataset from local raw files to a bundle."""
    key = name.lower()
    if key in PLANETOID_NAMES:
        raw = load_planetoid(raw_dir, key)
    elif key in NPZ_NAMES:
        raw = load_npz(Path(raw_dir) / NPZ_NAMES[key])
    else:
        raise RawDataError(
            f"unknown dataset {name!r}; supported: "
            f"{', '.join((*PLANETOID_NAMES, *NPZ_NAMES))}"
        )
    processed = preprocess(raw)
    write_bundle_dir(processed, out_dir)
    return processed


# ---------------------------------------------------------------------------
# bundle reading (for training external teachers on an existing bundle)


@dataclass
class Bundle:
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]


def read_bundle(path: str | Path) -> Bundle:
    """Read a bundle directory; the split.tsv is required (never re-split)."""
    path = Path(path)

    def rows(name):
        fp = path / name
        if not fp.is_file():
            raise RawDataError(f"missing bundle file: {fp}")
        for line in fp.read_text(encoding="utf-8").splitlines():
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield line

    features = np.array(
        [[float(x) for x in line.split("\t")] for line in rows("features.tsv")]
    )
    labels = np.array([int(line) for line in rows("labels.tsv")], dtype=np.int64)
    edges = np.array(
        [[int(x) for x in line.split("\t")] for line in rows("edges.tsv")],
        dtype=np.int64,
    ).reshape(-1, 2)
    roles: dict[str, list[int]] = {"train": [], "val": [], "test": []}
    for line in rows("split.tsv"):
        node, role = line.split("\t")
        roles[role].append(int(node))
    return Bundle(
        edges=edges,
        features=features,
        labels=labels,
        num_classes=int(labels.max()) + 1,
        train=np.array(sorted(roles["train"]), dtype=np.int64),
        val=np.array(sorted(roles["val"]), dtype=np.int64),
        test=np.array(sorted(roles["test"]), dtype=np.int64),
    )


def write_soft_label_file(
    probs: np.ndarray, source: str, path: str | Path
) -> None:
    """Write soft_labels.tsv: header then one probability row per node."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"#source={source}\t#classes={probs.shape[1]}\n")
        for row in probs:
            fh.write("\t".join(f"{x:.9g}" for x in row) + "\n")
