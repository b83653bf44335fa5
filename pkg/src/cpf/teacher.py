"""Built-in graph teachers and the soft-label exchange format.

Two trainable teachers are provided: a 2-layer graph convolution network and
a k-step simplified graph convolution (propagate features k times, then one
linear map). Either produces a `SoftLabelMatrix`: per-node probability rows
used as the distillation target, with training-set rows clamped to the
one-hot ground truth. External models can participate by exporting the same
soft_labels.tsv format.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from cpf import autodiff as ad
from cpf.autodiff import CSRMatrix, Tape
from cpf.graph import Graph, Split
from cpf.optim import AdamState, adam_step
from cpf.rng import derive_rng


class SoftLabelError(ValueError):
    """Raised for invalid soft-label matrices or files."""


class TrainingDiverged(RuntimeError):
    """Raised when a training loss becomes non-finite."""


@dataclass
class SoftLabelMatrix:
    """Per-node probability distributions over classes from one teacher."""

    probs: np.ndarray
    source: str

    def validate(self, g: Graph, tol: float = 1e-6) -> None:
        if self.probs.shape != (g.num_nodes, g.num_classes):
            raise SoftLabelError(
                f"soft labels shaped {self.probs.shape}, expected "
                f"({g.num_nodes}, {g.num_classes})"
            )
        if np.any(self.probs < 0):
            raise SoftLabelError("negative probability")
        sums = self.probs.sum(axis=1)
        worst = np.abs(sums - 1.0).max() if sums.size else 0.0
        if worst > tol:
            raise SoftLabelError(f"row sums deviate from 1 by up to {worst:.3g}")


def clamp_to_one_hot(
    probs: np.ndarray, nodes: np.ndarray, labels: np.ndarray
) -> np.ndarray:
    """Return a copy with the given rows replaced by one-hot label vectors."""
    out = probs.copy()
    out[nodes] = 0.0
    out[nodes, labels[nodes]] = 1.0
    return out


def normalized_adjacency(g: Graph) -> CSRMatrix:
    """Symmetrically normalized adjacency with self-loops added.

    Entry (v, u) is 1/sqrt((deg_v+1)(deg_u+1)) for u a neighbor of v or
    u == v.
    """
    deg = g.degrees()
    inv_sqrt = 1.0 / np.sqrt(deg + 1.0)
    n = g.num_nodes
    offsets = np.zeros(n + 1, dtype=np.int64)
    offsets[1:] = np.cumsum(deg + 1)
    cols = np.empty(offsets[-1], dtype=np.int64)
    vals = np.empty(offsets[-1], dtype=np.float64)
    for v in range(n):
        nbrs = g.neighbors(v)
        lo = int(np.searchsorted(nbrs, v))
        row = np.concatenate([nbrs[:lo], [v], nbrs[lo:]])
        cols[offsets[v] : offsets[v + 1]] = row
        vals[offsets[v] : offsets[v + 1]] = inv_sqrt[v] * inv_sqrt[row]
    return CSRMatrix(shape=(n, n), offsets=offsets, cols=cols, vals=vals)


@dataclass
class GCNTeacherParams:
    w1: np.ndarray
    w2: np.ndarray
    hidden_size: int
    dropout: float
    lr: float
    wd: float


@dataclass
class SGCTeacherParams:
    w: np.ndarray
    k: int
    lr: float
    wd: float


@dataclass
class TeacherConfig:
    """Training settings for a built-in teacher."""

    kind: str = "gcn"  # "gcn" | "sgc"
    hidden_size: int = 64
    dropout: float = 0.8
    lr: float = 0.01
    wd: float = 0.001
    k: int = 2
    max_epochs: int = 500
    patience: int = 50

    def __post_init__(self) -> None:
        if self.kind not in ("gcn", "sgc"):
            raise ValueError(f"unknown teacher kind {self.kind!r}")


@dataclass
class TeacherResult:
    params: GCNTeacherParams | SGCTeacherParams
    soft_labels: SoftLabelMatrix
    losses: list[float] = field(default_factory=list)
    val_accs: list[float] = field(default_factory=list)
    best_epoch: int = -1


def init_gcn_params(g: Graph, config: TeacherConfig, rng: np.random.Generator) -> GCNTeacherParams:
    return GCNTeacherParams(
        w1=ad.glorot_uniform(rng, g.num_features, config.hidden_size),
        w2=ad.glorot_uniform(rng, config.hidden_size, g.num_classes),
        hidden_size=config.hidden_size,
        dropout=config.dropout,
        lr=config.lr,
        wd=config.wd,
    )


def _gcn_probs_tape(
    tape: Tape,
    adj: CSRMatrix,
    features: np.ndarray,
    w1: ad.Value,
    w2: ad.Value,
    dropout_rate: float,
    training: bool,
    rng: np.random.Generator | None,
) -> ad.Value:
    x = ad.dropout(tape.const(features), dropout_rate, training, rng)
    hidden = ad.relu(ad.spmm(adj, ad.matmul(x, w1)))
    logits = ad.spmm(adj, ad.matmul(hidden, w2))
    return ad.row_softmax(logits)


def gcn_forward(
    g: Graph,
    params: GCNTeacherParams,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> SoftLabelMatrix:
    """Two-layer graph convolution; probability rows, not yet clamped."""
    if params.w1.shape != (g.num_features, params.hidden_size):
        raise ad.ShapeError("w1 shape does not match graph feature dim")
    if params.w2.shape != (params.hidden_size, g.num_classes):
        raise ad.ShapeError("w2 shape does not match class count")
    tape = Tape()
    adj = normalized_adjacency(g)
    probs = _gcn_probs_tape(
        tape,
        adj,
        g.features,
        tape.const(params.w1),
        tape.const(params.w2),
        params.dropout,
        training,
        rng,
    )
    return SoftLabelMatrix(probs=probs.data, source="builtin:gcn")


def sgc_propagate(g: Graph, k: int) -> np.ndarray:
    """Features propagated k times through the normalized adjacency."""
    if k < 1:
        raise ValueError("propagation power k must be >= 1")
    adj = normalized_adjacency(g)
    out = g.features
    for _ in range(k):
        out = adj.matmul(out)
    return out


def sgc_forward(g: Graph, w: np.ndarray, k: int) -> SoftLabelMatrix:
    """Simplified graph convolution: softmax(propagated features @ w)."""
    propagated = sgc_propagate(g, k)
    tape = Tape()
    probs = ad.row_softmax(ad.matmul(tape.const(propagated), tape.const(w)))
    return SoftLabelMatrix(probs=probs.data, source="builtin:sgc")


def _subset_accuracy(probs: np.ndarray, labels: np.ndarray, nodes: np.ndarray) -> float:
    return float(np.mean(probs[nodes].argmax(axis=1) == labels[nodes]))


def train_teacher(
    g: Graph,
    split: Split,
    config: TeacherConfig,
    seed: int = 0,
    clamp_validation: bool = False,
) -> TeacherResult:
    """Train a built-in teacher and freeze its soft labels.

    Cross-entropy on the training nodes, Adam with decoupled weight decay,
    early stopping on validation accuracy (best checkpoint kept). The final
    soft labels come from an eval-mode forward pass and are clamped to
    one-hot on the training nodes (optionally also on validation nodes).
    """
    init_rng = derive_rng(seed, "teacher-init")
    drop_rng = derive_rng(seed, "teacher-dropout")
    adj = normalized_adjacency(g)

    if config.kind == "gcn":
        params = init_gcn_params(g, config, init_rng)
        weights = [params.w1, params.w2]

        def forward_training(tape: Tape, leaves: list[ad.Value]) -> ad.Value:
            return _gcn_probs_tape(
                tape, adj, g.features, leaves[0], leaves[1], config.dropout, True, drop_rng
            )

        def eval_probs() -> np.ndarray:
            hidden = np.maximum(adj.matmul(g.features @ params.w1), 0.0)
            logits = adj.matmul(hidden @ params.w2)
            shifted = logits - logits.max(axis=1, keepdims=True)
            ex = np.exp(shifted)
            return ex / ex.sum(axis=1, keepdims=True)

        source = "builtin:gcn"
    else:
        propagated = sgc_propagate(g, config.k)
        params = SGCTeacherParams(
            w=ad.glorot_uniform(init_rng, g.num_features, g.num_classes),
            k=config.k,
            lr=config.lr,
            wd=config.wd,
        )
        weights = [params.w]

        def forward_training(tape: Tape, leaves: list[ad.Value]) -> ad.Value:
            return ad.row_softmax(ad.matmul(tape.const(propagated), leaves[0]))

        def eval_probs() -> np.ndarray:
            logits = propagated @ params.w
            shifted = logits - logits.max(axis=1, keepdims=True)
            ex = np.exp(shifted)
            return ex / ex.sum(axis=1, keepdims=True)

        source = "builtin:sgc"

    state = AdamState.init(weights, lr=config.lr, wd=config.wd)
    best_val = -1.0
    best_epoch = -1
    best_weights = [w.copy() for w in weights]
    stale = 0
    losses: list[float] = []
    val_accs: list[float] = []

    for epoch in range(config.max_epochs):
        tape = Tape()
        leaves = [tape.leaf(w) for w in weights]
        probs = forward_training(tape, leaves)
        loss = ad.cross_entropy_rows(probs, g.labels, split.train)
        loss_val = float(loss.data[0, 0])
        if not np.isfinite(loss_val):
            raise TrainingDiverged(f"non-finite teacher loss at epoch {epoch}")
        tape.backward(loss)
        adam_step(weights, [leaf.grad for leaf in leaves], state)

        val_acc = _subset_accuracy(eval_probs(), g.labels, split.val)
        losses.append(loss_val)
        val_accs.append(val_acc)
        if val_acc > best_val:
            best_val = val_acc
            best_epoch = epoch
            best_weights = [w.copy() for w in weights]
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    for w, best in zip(weights, best_weights):
        w[...] = best

    probs = eval_probs()
    clamp_nodes = split.train
    if clamp_validation:
        clamp_nodes = np.concatenate([split.train, split.val])
    probs = clamp_to_one_hot(probs, clamp_nodes, g.labels)
    soft = SoftLabelMatrix(probs=probs, source=source)
    soft.validate(g)
    return TeacherResult(
        params=params,
        soft_labels=soft,
        losses=losses,
        val_accs=val_accs,
        best_epoch=best_epoch,
    )


# ---------------------------------------------------------------------------
# soft-label file format


def write_soft_labels(m: SoftLabelMatrix, path: str | Path) -> None:
    """Write soft_labels.tsv: header line, then one probability row per node."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"#source={m.source}\t#classes={m.probs.shape[1]}\n")
        for row in m.probs:
            fh.write("\t".join(f"{x:.9g}" for x in row) + "\n")


def read_soft_labels(
    path: str | Path,
    g: Graph,
    split: Split | None = None,
    clamp_train: bool = False,
) -> SoftLabelMatrix:
    """Read and validate soft_labels.tsv against a graph.

    Row count and class count must match the graph; every row sum must be
    within 1e-4 of 1. With `clamp_train`, training rows are reset to the
    one-hot ground truth (requires `split`).
    """
    path = Path(path)
    if not path.is_file():
        raise SoftLabelError(f"soft label file not found: {path}")
    source = "external"
    num_classes = None
    rows: list[np.ndarray] = []
    with path.open("r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                for token in line.split("\t"):
                    if token.startswith("#source="):
                        source = token[len("#source=") :]
                    elif token.startswith("#classes="):
                        num_classes = int(token[len("#classes=") :])
                continue
            try:
                row = np.array([float(p) for p in line.split("\t")], dtype=np.float64)
            except ValueError:
                raise SoftLabelError(f"{path.name}:{ln}: non-numeric value") from None
            rows.append(row)
    probs = np.vstack(rows) if rows else np.zeros((0, 0))
    if probs.shape[0] != g.num_nodes:
        raise SoftLabelError(
            f"{probs.shape[0]} rows for a graph with {g.num_nodes} nodes"
        )
    if probs.shape[1] != g.num_classes or (
        num_classes is not None and num_classes != g.num_classes
    ):
        raise SoftLabelError(
            f"class count mismatch: file has {probs.shape[1]} columns "
            f"(header says {num_classes}), graph has {g.num_classes} classes"
        )
    if np.any(probs < 0):
        raise SoftLabelError("negative probability in soft label file")
    sums = probs.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > 1e-4)
    if bad.size:
        raise SoftLabelError(
            f"row {bad[0]} sums to {sums[bad[0]]:.6g}, outside 1 +- 1e-4"
        )
    if clamp_train:
        if split is None:
            raise SoftLabelError("clamp_train requires a split")
        probs = clamp_to_one_hot(probs, split.train, g.labels)
    return SoftLabelMatrix(probs=probs, source=source)
