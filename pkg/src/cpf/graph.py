"""Graph data model, bundle file IO, preprocessing, and the split protocol.

A dataset lives on disk as a *bundle* directory of TSV files:

    edges.tsv      one undirected edge per line: "u\\tv" (0-based indices)
    features.tsv   line i = node i, tab-separated decimal feature values
    labels.tsv     line i = node i, one integer class index
    split.tsv      optional: lines "node\\t{train|val|test}"
    meta.tsv       optional: "key\\tvalue" pairs

Lines starting with '#' are comments. Loading symmetrizes and deduplicates
the edge list, drops self-loops, and keeps only the largest connected
component with node indices compacted.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from cpf.rng import derive_rng


class BundleError(ValueError):
    """Raised for missing or malformed bundle files."""


class SplitError(ValueError):
    """Raised for split requests a graph cannot satisfy."""


@dataclass(frozen=True)
class Graph:
    """Undirected graph in CSR form with node features and labels.

    The adjacency is symmetric, self-loop free and duplicate free; rows of
    `csr_neighbors` are sorted ascending. Instances are immutable and safe
    to share across threads.
    """

    num_nodes: int
    csr_offsets: np.ndarray
    csr_neighbors: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        for arr in (self.csr_offsets, self.csr_neighbors, self.features, self.labels):
            arr.setflags(write=False)

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return self.csr_neighbors.shape[0] // 2

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def neighbors(self, v: int) -> np.ndarray:
        return self.csr_neighbors[self.csr_offsets[v] : self.csr_offsets[v + 1]]

    def degrees(self) -> np.ndarray:
        return self.csr_offsets[1:] - self.csr_offsets[:-1]

    def edge_pairs(self) -> np.ndarray:
        """Undirected edges as an (E, 2) array with u < v, sorted."""
        rows = np.repeat(np.arange(self.num_nodes), self.degrees())
        keep = rows < self.csr_neighbors
        return np.column_stack([rows[keep], self.csr_neighbors[keep]])

    def validate(self, require_connected: bool = True) -> None:
        """Check all structural invariants; raise BundleError on violation."""
        n = self.num_nodes
        off, nbr = self.csr_offsets, self.csr_neighbors
        if off.shape != (n + 1,) or off[0] != 0 or off[-1] != nbr.shape[0]:
            raise BundleError("csr_offsets inconsistent with csr_neighbors")
        if np.any(np.diff(off) < 0):
            raise BundleError("csr_offsets must be non-decreasing")
        if nbr.size and (nbr.min() < 0 or nbr.max() >= n):
            raise BundleError("neighbor index out of range")
        rows = np.repeat(np.arange(n), self.degrees())
        if np.any(rows == nbr):
            raise BundleError("self-loop present")
        # sorted rows with no duplicates
        same_row = rows[1:] == rows[:-1]
        if np.any(same_row & (np.diff(nbr) <= 0)):
            raise BundleError("neighbor rows must be strictly increasing")
        # symmetry: the set of (u,v) arcs equals the set of (v,u) arcs
        fwd = np.sort(rows.astype(np.int64) * n + nbr)
        bwd = np.sort(nbr.astype(np.int64) * n + rows)
        if not np.array_equal(fwd, bwd):
            raise BundleError("adjacency is not symmetric")
        if self.features.shape[0] != n:
            raise BundleError("feature row count differs from num_nodes")
        if self.labels.shape != (n,):
            raise BundleError("label count differs from num_nodes")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise BundleError("label outside [0, num_classes)")
        if require_connected and n > 0:
            if _component_of(0, off, nbr).sum() != n:
                raise BundleError("graph is not connected")


@dataclass(frozen=True)
class Split:
    """Disjoint train/val/test node-index sets covering all nodes."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        for arr in (self.train, self.val, self.test):
            arr.setflags(write=False)

    def validate(self, g: Graph) -> None:
        parts = [self.train, self.val, self.test]
        combined = np.concatenate(parts)
        if combined.size != g.num_nodes or np.unique(combined).size != g.num_nodes:
            raise SplitError("train/val/test must partition the node set")
        if combined.size and (combined.min() < 0 or combined.max() >= g.num_nodes):
            raise SplitError("split node index out of range")

    def non_train(self) -> np.ndarray:
        """All nodes outside the labeled training set, sorted."""
        return np.sort(np.concatenate([self.val, self.test]))


def build_csr(num_nodes: int, edges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """CSR arrays from unique undirected edges given as (E, 2) with u != v."""
    if edges.size == 0:
        return np.zeros(num_nodes + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.add.at(offsets, src + 1, 1)
    np.cumsum(offsets, out=offsets)
    return offsets, dst.astype(np.int64)


def _normalize_edges(num_nodes: int, raw: np.ndarray) -> np.ndarray:
    """Dedupe an arbitrary edge list into unique (u, v) pairs with u < v."""
    if raw.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    u = np.minimum(raw[:, 0], raw[:, 1])
    v = np.maximum(raw[:, 0], raw[:, 1])
    keep = u != v  # drop self-loops
    codes = np.unique(u[keep].astype(np.int64) * num_nodes + v[keep])
    return np.column_stack([codes // num_nodes, codes % num_nodes])


def _component_of(start: int, offsets: np.ndarray, neighbors: np.ndarray) -> np.ndarray:
    """Boolean membership mask of the component containing `start` (BFS)."""
    n = offsets.shape[0] - 1
    seen = np.zeros(n, dtype=bool)
    seen[start] = True
    frontier = [start]
    while frontier:
        nxt = []
        for v in frontier:
            for u in neighbors[offsets[v] : offsets[v + 1]]:
                if not seen[u]:
                    seen[u] = True
                    nxt.append(int(u))
        frontier = nxt
    return seen


def largest_connected_component(g: Graph) -> tuple[Graph, np.ndarray]:
    """Induced subgraph on the largest component, indices compacted.

    Returns the subgraph and a sidecar array mapping new index -> original
    index. Ties between equal-sized components go to the one containing the
    smallest original node index.
    """
    if g.num_nodes < 1:
        raise BundleError("graph must have at least one node")
    assigned = np.full(g.num_nodes, -1, dtype=np.int64)
    best_mask = None
    best_size = -1
    comp = 0
    for v in range(g.num_nodes):
        if assigned[v] >= 0:
            continue
        mask = _component_of(v, g.csr_offsets, g.csr_neighbors)
        assigned[mask] = comp
        comp += 1
        size = int(mask.sum())
        if size > best_size:  # first max wins: its seed is the smallest index
            best_size = size
            best_mask = mask
    keep = np.flatnonzero(best_mask)
    remap = np.full(g.num_nodes, -1, dtype=np.int64)
    remap[keep] = np.arange(keep.size)
    edges = g.edge_pairs()
    in_comp = best_mask[edges[:, 0]] & best_mask[edges[:, 1]]
    new_edges = remap[edges[in_comp]]
    offsets, neighbors = build_csr(keep.size, new_edges)
    sub = Graph(
        num_nodes=int(keep.size),
        csr_offsets=offsets,
        csr_neighbors=neighbors,
        features=g.features[keep].copy(),
        labels=g.labels[keep].copy(),
        num_classes=g.num_classes,
    )
    return sub, keep


def make_split(
    g: Graph,
    labeled_per_class: int,
    val_per_class: int = 30,
    seed: int = 0,
    *,
    val_total: int | None = None,
) -> Split:
    """Sample a per-class train/val split; everything else is test.

    Per class, exactly `labeled_per_class` training nodes are drawn without
    replacement, then `val_per_class` validation nodes (or, when `val_total`
    is given, that many validation nodes drawn from the remaining pool
    regardless of class). Deterministic given `seed`.
    """
    if labeled_per_class < 1:
        raise SplitError("labeled_per_class must be >= 1")
    if val_total is None and val_per_class < 0:
        raise SplitError("val_per_class must be >= 0")
    rng = derive_rng(seed, "split")
    train_parts: list[np.ndarray] = []
    val_parts: list[np.ndarray] = []
    rest_parts: list[np.ndarray] = []
    per_class_val = val_per_class if val_total is None else 0
    for c in range(g.num_classes):
        members = np.flatnonzero(g.labels == c)
        need = labeled_per_class + per_class_val
        if members.size < need:
            raise SplitError(
                f"class {c} has {members.size} nodes, needs {need} for the split"
            )
        perm = members[rng.permutation(members.size)]
        train_parts.append(perm[:labeled_per_class])
        val_parts.append(perm[labeled_per_class : labeled_per_class + per_class_val])
        rest_parts.append(perm[labeled_per_class + per_class_val :])
    rest = np.concatenate(rest_parts)
    if val_total is not None:
        if rest.size < val_total:
            raise SplitError("not enough unlabeled nodes for requested val_total")
        rest = rest[rng.permutation(rest.size)]
        val_parts = [rest[:val_total]]
        rest = rest[val_total:]
    split = Split(
        train=np.sort(np.concatenate(train_parts)),
        val=np.sort(np.concatenate(val_parts)) if val_parts else np.zeros(0, np.int64),
        test=np.sort(rest),
        seed=seed,
    )
    split.validate(g)
    return split


# ---------------------------------------------------------------------------
# bundle IO


def _data_lines(path: Path):
    """Yield (line_number, stripped_line) skipping comments and blank lines."""
    with path.open("r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield i, line


def _require(path: Path) -> Path:
    if not path.is_file():
        raise BundleError(f"missing bundle file: {path}")
    return path


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def load_bundle(path: str | Path) -> tuple[Graph, Split | None]:
    """Load and preprocess a bundle directory.

    Returns the validated graph (undirected, deduplicated, self-loop free,
    largest connected component, compacted indices) and the split if
    split.tsv is present. Split indices refer to the raw file numbering and
    are remapped; a split entry for a node dropped by preprocessing is an
    error.
    """
    path = Path(path)
    if not path.is_dir():
        raise BundleError(f"bundle directory not found: {path}")

    feat_rows: list[np.ndarray] = []
    dim = -1
    for ln, line in _data_lines(_require(path / "features.tsv")):
        parts = line.split("\t")
        try:
            row = np.array([float(p) for p in parts], dtype=np.float64)
        except ValueError:
            raise BundleError(f"features.tsv:{ln}: non-numeric value") from None
        if dim < 0:
            dim = row.size
        elif row.size != dim:
            raise BundleError(
                f"features.tsv:{ln}: expected {dim} values, found {row.size}"
            )
        feat_rows.append(row)
    features = np.vstack(feat_rows) if feat_rows else np.zeros((0, 0))
    n = features.shape[0]

    labels_list: list[int] = []
    for ln, line in _data_lines(_require(path / "labels.tsv")):
        try:
            labels_list.append(int(line.strip()))
        except ValueError:
            raise BundleError(f"labels.tsv:{ln}: expected an integer class") from None
    labels = np.array(labels_list, dtype=np.int64)
    if labels.shape[0] != n:
        raise BundleError(
            f"labels.tsv has {labels.shape[0]} rows but features.tsv has {n}"
        )
    if n == 0:
        raise BundleError("bundle has no nodes")
    if labels.min() < 0:
        raise BundleError("negative class index in labels.tsv")
    num_classes = int(labels.max()) + 1

    raw_edges: list[tuple[int, int]] = []
    for ln, line in _data_lines(_require(path / "edges.tsv")):
        parts = line.split("\t")
        if len(parts) != 2:
            raise BundleError(f"edges.tsv:{ln}: expected 'u\\tv'")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise BundleError(f"edges.tsv:{ln}: non-integer node index") from None
        if not (0 <= u < n and 0 <= v < n):
            raise BundleError(f"edges.tsv:{ln}: node index out of range")
        raw_edges.append((u, v))
    edges = _normalize_edges(n, np.array(raw_edges, dtype=np.int64).reshape(-1, 2))

    offsets, neighbors = build_csr(n, edges)
    raw = Graph(n, offsets, neighbors, features, labels, num_classes)
    graph, orig_index = largest_connected_component(raw)
    remap = np.full(n, -1, dtype=np.int64)
    remap[orig_index] = np.arange(orig_index.size)

    split = None
    split_path = path / "split.tsv"
    if split_path.is_file():
        roles: dict[str, list[int]] = {"train": [], "val": [], "test": []}
        seed = -1
        with split_path.open("r", encoding="utf-8") as fh:
            for ln, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if line.startswith("#seed="):
                    seed = int(line[len("#seed=") :])
                    continue
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2 or parts[1] not in roles:
                    raise BundleError(
                        f"split.tsv:{ln}: expected 'node\\t{{train|val|test}}'"
                    )
                try:
                    node = int(parts[0])
                except ValueError:
                    raise BundleError(f"split.tsv:{ln}: non-integer node") from None
                if not 0 <= node < n:
                    raise BundleError(f"split.tsv:{ln}: node index out of range")
                if remap[node] < 0:
                    raise BundleError(
                        f"split.tsv:{ln}: node {node} was dropped by preprocessing"
                    )
                roles[parts[1]].append(int(remap[node]))
        split = Split(
            train=np.sort(np.array(roles["train"], dtype=np.int64)),
            val=np.sort(np.array(roles["val"], dtype=np.int64)),
            test=np.sort(np.array(roles["test"], dtype=np.int64)),
            seed=seed,
        )
        split.validate(graph)

    graph.validate(require_connected=True)
    return graph, split


def write_bundle(
    g: Graph,
    path: str | Path,
    split: Split | None = None,
    meta: dict[str, str] | None = None,
) -> None:
    """Write a normalized bundle: sorted edges, %.9g floats, sorted split."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    with (path / "edges.tsv").open("w", encoding="utf-8") as fh:
        for u, v in g.edge_pairs():
            fh.write(f"{u}\t{v}\n")
    with (path / "features.tsv").open("w", encoding="utf-8") as fh:
        for row in g.features:
            fh.write("\t".join(_fmt(x) for x in row) + "\n")
    with (path / "labels.tsv").open("w", encoding="utf-8") as fh:
        for y in g.labels:
            fh.write(f"{y}\n")
    if split is not None:
        with (path / "split.tsv").open("w", encoding="utf-8") as fh:
            fh.write(f"#seed={split.seed}\n")
            role_of = {}
            for name, nodes in (("train", split.train), ("val", split.val), ("test", split.test)):
                for v in nodes:
                    role_of[int(v)] = name
            for v in sorted(role_of):
                fh.write(f"{v}\t{role_of[v]}\n")
    if meta:
        with (path / "meta.tsv").open("w", encoding="utf-8") as fh:
            for key in sorted(meta):
                fh.write(f"{key}\t{meta[key]}\n")


def read_meta(path: str | Path) -> dict[str, str]:
    """Read meta.tsv key/value pairs; empty dict when absent."""
    meta_path = Path(path) / "meta.tsv"
    if not meta_path.is_file():
        return {}
    out: dict[str, str] = {}
    for ln, line in _data_lines(meta_path):
        parts = line.split("\t", 1)
        if len(parts) != 2:
            raise BundleError(f"meta.tsv:{ln}: expected 'key\\tvalue'")
        out[parts[0]] = parts[1]
    return out
