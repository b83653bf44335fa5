"""Shared graph builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from cpf.graph import Graph, Split, build_csr


def graph_from_edges(
    edges: list[tuple[int, int]],
    num_nodes: int,
    features: np.ndarray | None = None,
    labels: np.ndarray | None = None,
    num_classes: int | None = None,
) -> Graph:
    """Build a Graph from an undirected edge list without preprocessing."""
    arr = np.array(sorted({(min(u, v), max(u, v)) for u, v in edges}), dtype=np.int64)
    arr = arr.reshape(-1, 2)
    offsets, neighbors = build_csr(num_nodes, arr)
    if labels is None:
        labels = np.zeros(num_nodes, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if features is None:
        features = np.eye(num_nodes, 2, dtype=np.float64)
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if num_nodes else 1
    return Graph(
        num_nodes=num_nodes,
        csr_offsets=offsets,
        csr_neighbors=neighbors,
        features=np.asarray(features, dtype=np.float64),
        labels=labels,
        num_classes=num_classes,
    )


def split_of(g: Graph, train: list[int], val: list[int], seed: int = 0) -> Split:
    chosen = set(train) | set(val)
    test = [v for v in range(g.num_nodes) if v not in chosen]
    return Split(
        train=np.array(sorted(train), dtype=np.int64),
        val=np.array(sorted(val), dtype=np.int64),
        test=np.array(test, dtype=np.int64),
        seed=seed,
    )


def random_graph(
    rng: np.random.Generator,
    num_nodes: int,
    edge_prob: float = 0.3,
    num_classes: int = 3,
    num_features: int = 4,
) -> Graph:
    """Random undirected graph; connectivity not guaranteed."""
    edges = []
    for u in range(num_nodes):
        for v in range(u + 1, num_nodes):
            if rng.random() < edge_prob:
                edges.append((u, v))
    labels = rng.integers(0, num_classes, size=num_nodes)
    features = rng.normal(size=(num_nodes, num_features))
    return graph_from_edges(edges, num_nodes, features, labels, num_classes)


def random_split(rng: np.random.Generator, g: Graph, train_frac: float = 0.3) -> Split:
    perm = rng.permutation(g.num_nodes)
    n_train = max(1, int(g.num_nodes * train_frac))
    n_val = max(1, (g.num_nodes - n_train) // 2)
    return Split(
        train=np.sort(perm[:n_train]),
        val=np.sort(perm[n_train : n_train + n_val]),
        test=np.sort(perm[n_train + n_val :]),
        seed=int(rng.integers(1 << 30)),
    )


def homophilous_dataset(
    seed: int,
    num_classes: int = 4,
    per_class: int = 60,
    num_features: int = 16,
    p_in: float = 0.06,
    p_out: float = 0.004,
    feature_noise: float = 0.9,
) -> Graph:
    """Connected planted-partition graph with class-informative features.

    Nodes of the same class link densely and carry noisy copies of a class
    prototype, so both propagation and feature paths hold real signal.
    """
    rng = np.random.default_rng((seed, 1234))
    n = num_classes * per_class
    labels = np.repeat(np.arange(num_classes), per_class)
    labels = labels[rng.permutation(n)]
    prototypes = rng.normal(size=(num_classes, num_features))
    features = prototypes[labels] + feature_noise * rng.normal(size=(n, num_features))

    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            p = p_in if labels[u] == labels[v] else p_out
            if rng.random() < p:
                edges.append((u, v))
    g = graph_from_edges(edges, n, features, labels, num_classes)

    # stitch components together so preprocessing keeps every node
    seen = np.zeros(n, dtype=bool)
    reps = []
    for v in range(n):
        if seen[v]:
            continue
        stack = [v]
        seen[v] = True
        while stack:
            w = stack.pop()
            for u in g.neighbors(w):
                if not seen[u]:
                    seen[u] = True
                    stack.append(int(u))
        reps.append(v)
    if len(reps) > 1:
        edges.extend((reps[i], reps[i + 1]) for i in range(len(reps) - 1))
        g = graph_from_edges(edges, n, features, labels, num_classes)
    return g


@pytest.fixture
def path3() -> Graph:
    """3-node path with 2 classes: ends labeled 0 and 1."""
    return graph_from_edges(
        [(0, 1), (1, 2)],
        3,
        features=np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]]),
        labels=np.array([0, 1, 1]),
        num_classes=2,
    )


@pytest.fixture
def separable_graph() -> Graph:
    """Two feature-separable clusters of 8 nodes each, bridged once."""
    edges = []
    for base in (0, 8):
        for i in range(8):
            for j in range(i + 1, 8):
                if (i + j) % 2 == 0:
                    edges.append((base + i, base + j))
    edges.append((0, 8))
    labels = np.array([0] * 8 + [1] * 8)
    rng = np.random.default_rng(7)
    features = np.zeros((16, 4))
    features[:8, 0] = 2.0
    features[8:, 1] = 2.0
    features += 0.1 * rng.normal(size=(16, 4))
    return graph_from_edges(edges, 16, features, labels, 2)
