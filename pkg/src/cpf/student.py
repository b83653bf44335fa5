"""Student models and the distillation training loop.

Four variants share one forward engine:

* ``plp``     — parameterized label propagation only (balance fixed at 1)
* ``ft``      — feature-transformation MLP only (balance fixed at 0)
* ``cpf-ind`` — full combination, confidences projected from node features
* ``cpf-tra`` — full combination, one free confidence per node

Each propagation layer updates an unlabeled node's class distribution as a
per-node convex combination of (a) a confidence-weighted average over the
node's neighborhood plus itself and (b) the MLP's prediction from the node's
raw features. Labeled nodes stay clamped to their one-hot ground truth at
every layer. Training minimizes the summed per-node Euclidean distance to a
teacher's soft labels over all non-training nodes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path

import numpy as np

from cpf import autodiff as ad
from cpf.autodiff import Tape
from cpf.graph import Graph, Split
from cpf.optim import AdamState, adam_step
from cpf.rng import derive_rng
from cpf.teacher import SoftLabelMatrix, TrainingDiverged

VARIANTS = ("plp", "ft", "cpf-ind", "cpf-tra")


@dataclass(frozen=True)
class LPConfig:
    """Classic label propagation settings."""

    smoothness: float = 0.0
    iterations: int = 10

    def __post_init__(self) -> None:
        if not 0.0 <= self.smoothness <= 1.0:
            raise ValueError("smoothness must lie in [0, 1]")


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], num_classes), dtype=np.float64)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def lp_init(g: Graph, split: Split) -> np.ndarray:
    """Layer-0 prediction: one-hot for training nodes, uniform elsewhere."""
    f = np.full((g.num_nodes, g.num_classes), 1.0 / g.num_classes, dtype=np.float64)
    f[split.train] = 0.0
    f[split.train, g.labels[split.train]] = 1.0
    return f


def _neighbor_sum(g: Graph, f: np.ndarray) -> np.ndarray:
    out = np.zeros_like(f)
    if g.csr_neighbors.size:
        contrib = f[g.csr_neighbors]
        nonempty = g.csr_offsets[:-1] < g.csr_offsets[1:]
        out[nonempty] = np.add.reduceat(
            contrib, g.csr_offsets[:-1][nonempty], axis=0
        )
    return out


def lp_step(g: Graph, f: np.ndarray, smoothness: float, split: Split) -> np.ndarray:
    """One classic propagation step; training rows reset to one-hot.

    An isolated unlabeled node uses its own row as the neighbor mean so the
    update stays well-defined on unpreprocessed data.
    """
    deg = g.degrees().astype(np.float64)
    mean = _neighbor_sum(g, f)
    isolated = deg == 0
    mean[~isolated] /= deg[~isolated, None]
    mean[isolated] = f[isolated]
    out = (1.0 - smoothness) * mean + smoothness * f
    out[split.train] = 0.0
    out[split.train, g.labels[split.train]] = 1.0
    return out


def lp_run(g: Graph, split: Split, config: LPConfig) -> np.ndarray:
    f = lp_init(g, split)
    for _ in range(config.iterations):
        f = lp_step(g, f, config.smoothness, split)
    return f


# ---------------------------------------------------------------------------
# propagation structure: directed pairs (u -> v) for u in N_v + {v}


@dataclass(frozen=True)
class PropStructure:
    """Target-major edge arrays including self-pairs, one segment per node."""

    src: np.ndarray
    tgt: np.ndarray
    offsets: np.ndarray
    num_nodes: int


def build_prop_structure(g: Graph) -> PropStructure:
    deg = g.degrees()
    offsets = np.zeros(g.num_nodes + 1, dtype=np.int64)
    offsets[1:] = np.cumsum(deg + 1)
    src = np.empty(offsets[-1], dtype=np.int64)
    for v in range(g.num_nodes):
        nbrs = g.neighbors(v)
        lo = int(np.searchsorted(nbrs, v))
        src[offsets[v] : offsets[v] + lo] = nbrs[:lo]
        src[offsets[v] + lo] = v
        src[offsets[v] + lo + 1 : offsets[v + 1]] = nbrs[lo:]
    tgt = np.repeat(np.arange(g.num_nodes), deg + 1)
    return PropStructure(src=src, tgt=tgt, offsets=offsets, num_nodes=g.num_nodes)


@dataclass
class StudentHyper:
    """Tunable knobs of a student run."""

    num_layers: int = 5
    hidden_size: int = 16
    dropout: float = 0.2
    lr: float = 0.01
    wd: float = 0.0005
    normalize_confidence_features: bool = False


def default_grid() -> dict[str, list]:
    """The full heuristic-search grid."""
    return {
        "num_layers": [5, 6, 7, 8, 9, 10],
        "hidden_size": [8, 16, 32, 64],
        "dropout": [0.2, 0.5, 0.8],
        "lr": [0.001, 0.005, 0.01],
        "wd": [0.0005, 0.001, 0.01],
    }


@dataclass
class StudentParams:
    """Learnable state of one student instance.

    Exactly one of `confidence` (one free score per node) and `feature_proj`
    (a projection vector applied to node features) is active. For the
    propagation-only and feature-only variants the balance is pinned via
    `fixed_balance` instead of the per-node logits.
    """

    variant: str
    num_layers: int
    hidden_size: int
    dropout: float
    balance_logit: np.ndarray | None
    fixed_balance: float | None
    confidence: np.ndarray | None
    feature_proj: np.ndarray | None
    mlp_w1: np.ndarray
    mlp_b1: np.ndarray
    mlp_w2: np.ndarray
    mlp_b2: np.ndarray
    normalize_confidence_features: bool = False

    def balance(self) -> np.ndarray:
        """Per-node combination weight in (0, 1) (or the pinned constant)."""
        if self.fixed_balance is not None:
            return np.full(self.balance_shape(), self.fixed_balance)
        return 1.0 / (1.0 + np.exp(-self.balance_logit))

    def balance_shape(self) -> tuple[int, int]:
        n = (
            self.balance_logit.shape[0]
            if self.balance_logit is not None
            else self.confidence.shape[0]
            if self.confidence is not None
            else 0
        )
        return (n, 1)

    def trainable(self) -> list[str]:
        """Names of the parameter arrays updated by the optimizer."""
        if self.variant == "plp":
            return ["confidence"] if self.confidence is not None else ["feature_proj"]
        if self.variant == "ft":
            return ["mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2"]
        conf = "feature_proj" if self.variant == "cpf-ind" else "confidence"
        return ["balance_logit", conf, "mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2"]


def init_student_params(
    g: Graph, variant: str, hyper: StudentHyper, rng: np.random.Generator
) -> StudentParams:
    """Fresh parameters: zero logits/confidences, Glorot MLP, zero biases."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown student variant {variant!r}")
    n, d, c = g.num_nodes, g.num_features, g.num_classes
    h = hyper.hidden_size
    inductive = variant == "cpf-ind"
    return StudentParams(
        variant=variant,
        num_layers=hyper.num_layers,
        hidden_size=h,
        dropout=hyper.dropout,
        balance_logit=None if variant in ("plp", "ft") else np.zeros((n, 1)),
        fixed_balance=1.0 if variant == "plp" else 0.0 if variant == "ft" else None,
        confidence=None if inductive else np.zeros((n, 1)),
        feature_proj=np.zeros((d, 1)) if inductive else None,
        mlp_w1=ad.glorot_uniform(rng, d, h),
        mlp_b1=np.zeros((1, h)),
        mlp_w2=ad.glorot_uniform(rng, h, c),
        mlp_b2=np.zeros((1, c)),
        normalize_confidence_features=hyper.normalize_confidence_features,
    )


@dataclass
class StudentPrediction:
    """Final probability rows, optionally with one snapshot per layer."""

    probs: np.ndarray
    per_layer: list[np.ndarray] | None = None


def _confidence_features(g: Graph, normalize: bool) -> np.ndarray:
    if not normalize:
        return g.features
    norms = np.sqrt((g.features**2).sum(axis=1, keepdims=True))
    return g.features / np.maximum(norms, 1e-12)


def _edge_weights_tape(
    tape: Tape, structure: PropStructure, conf: ad.Value
) -> ad.Value:
    """Per-pair softmax of source confidences within each target segment."""
    ce = ad.gather_rows(conf, structure.src)
    # constant per-segment max: shifting a softmax leaves value and grad intact
    seg_max = np.maximum.reduceat(ce.data, structure.offsets[:-1], axis=0)
    ex = ad.exp(ad.sub(ce, tape.const(seg_max[structure.tgt])))
    denom = ad.scatter_rows(ex, structure.tgt, structure.num_nodes)
    return ad.div_elem(ex, ad.gather_rows(denom, structure.tgt))


def _leaf_or_const(tape: Tape, leaves: dict[str, ad.Value], name: str, arr) -> ad.Value:
    leaf = leaves.get(name)
    return leaf if leaf is not None else tape.const(arr)


def _conf_value(
    tape: Tape, g: Graph, params: StudentParams, leaves: dict[str, ad.Value]
) -> ad.Value:
    if params.confidence is not None:
        return _leaf_or_const(tape, leaves, "confidence", params.confidence)
    proj = _leaf_or_const(tape, leaves, "feature_proj", params.feature_proj)
    feats = tape.const(_confidence_features(g, params.normalize_confidence_features))
    return ad.matmul(feats, proj)


def _ft_tape(
    tape: Tape,
    features: np.ndarray,
    leaves: dict[str, ad.Value],
    params: StudentParams,
    training: bool,
    rng: np.random.Generator | None,
) -> ad.Value:
    w1 = _leaf_or_const(tape, leaves, "mlp_w1", params.mlp_w1)
    b1 = _leaf_or_const(tape, leaves, "mlp_b1", params.mlp_b1)
    w2 = _leaf_or_const(tape, leaves, "mlp_w2", params.mlp_w2)
    b2 = _leaf_or_const(tape, leaves, "mlp_b2", params.mlp_b2)
    x = ad.dropout(tape.const(features), params.dropout, training, rng)
    hidden = ad.relu(ad.add(ad.matmul(x, w1), b1))
    hidden = ad.dropout(hidden, params.dropout, training, rng)
    logits = ad.add(ad.matmul(hidden, w2), b2)
    return ad.row_softmax(logits)


def _build_student(
    tape: Tape,
    g: Graph,
    split: Split,
    params: StudentParams,
    leaves: dict[str, ad.Value],
    structure: PropStructure,
    training: bool,
    rng: np.random.Generator | None,
    capture_layers: bool,
) -> tuple[ad.Value, list[np.ndarray] | None]:
    """Construct the full forward pass on `tape`; returns the final Value."""
    f0_data = lp_init(g, split)
    clamp_values = f0_data[split.train]
    layers = [f0_data.copy()] if capture_layers else None

    if params.fixed_balance == 0.0:
        # feature-only: propagation is ignored, reached fixed point in 1 layer
        ft = _ft_tape(tape, g.features, leaves, params, training, rng)
        out = ad.clamp_rows(ft, split.train, clamp_values)
        if capture_layers:
            layers.extend(out.data.copy() for _ in range(params.num_layers))
        return out, layers

    conf = _conf_value(tape, g, params, leaves)
    weights = _edge_weights_tape(tape, structure, conf)

    alpha = None
    ft = None
    if params.fixed_balance is None:
        logit = _leaf_or_const(tape, leaves, "balance_logit", params.balance_logit)
        alpha = ad.sigmoid(logit)
        ft = _ft_tape(tape, g.features, leaves, params, training, rng)

    f = tape.const(f0_data)
    for _ in range(params.num_layers):
        gathered = ad.gather_rows(f, structure.src)
        prop = ad.scatter_rows(
            ad.mul_elem(weights, gathered), structure.tgt, structure.num_nodes
        )
        if alpha is None:  # propagation-only
            combined = prop
        else:
            combined = ad.add(
                ad.mul_elem(alpha, prop),
                ad.mul_elem(ad.sub(tape.const(np.ones((1, 1))), alpha), ft),
            )
        f = ad.clamp_rows(combined, split.train, clamp_values)
        if capture_layers:
            layers.append(f.data.copy())
    return f, layers


def cpf_forward(
    g: Graph,
    split: Split,
    params: StudentParams,
    training: bool = False,
    rng: np.random.Generator | None = None,
    capture_layers: bool = False,
) -> StudentPrediction:
    """Run the student forward pass and return probability rows."""
    tape = Tape()
    structure = build_prop_structure(g)
    out, layers = _build_student(
        tape, g, split, params, {}, structure, training, rng, capture_layers
    )
    return StudentPrediction(probs=out.data, per_layer=layers)


def plp_edge_weights(
    g: Graph,
    confidence: np.ndarray | None = None,
    feature_proj: np.ndarray | None = None,
    normalize_features: bool = False,
) -> tuple[PropStructure, np.ndarray]:
    """Evaluate the propagation weights for every directed pair (u -> v).

    Pass per-node `confidence` scores, or a `feature_proj` vector to derive
    them from node features. Weights within each target's segment sum to 1.
    """
    if (confidence is None) == (feature_proj is None):
        raise ValueError("provide exactly one of confidence / feature_proj")
    if confidence is not None:
        conf = np.asarray(confidence, dtype=np.float64).reshape(-1, 1)
    else:
        feats = _confidence_features(g, normalize_features)
        conf = feats @ np.asarray(feature_proj, dtype=np.float64).reshape(-1, 1)
    tape = Tape()
    structure = build_prop_structure(g)
    w = _edge_weights_tape(tape, structure, tape.const(conf))
    return structure, w.data[:, 0]


def ft_forward(
    features: np.ndarray,
    params: StudentParams,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Feature-transformation MLP: probability rows from raw features."""
    tape = Tape()
    out = _ft_tape(tape, np.atleast_2d(features), {}, params, training, rng)
    return out.data


def distill_objective(
    g: Graph,
    split: Split,
    teacher: SoftLabelMatrix,
    params: StudentParams,
    trainable: tuple[str, ...] | list[str] = (),
    training: bool = False,
    rng: np.random.Generator | None = None,
    structure: PropStructure | None = None,
) -> tuple[Tape, ad.Value, dict[str, ad.Value]]:
    """Build the forward pass plus distillation loss on a fresh tape.

    Parameters named in `trainable` become differentiable leaves wrapping
    the live arrays; everything else enters as constants.
    """
    tape = Tape()
    if structure is None:
        structure = build_prop_structure(g)
    leaves = {name: tape.leaf(getattr(params, name)) for name in trainable}
    out, _ = _build_student(
        tape, g, split, params, leaves, structure, training, rng, False
    )
    rows = split.non_train()
    diff = ad.sub(ad.gather_rows(out, rows), tape.const(teacher.probs[rows]))
    return tape, ad.l2_row_norm_sum(diff), leaves


def distill_loss(
    pred: StudentPrediction | np.ndarray,
    teacher: SoftLabelMatrix | np.ndarray,
    split: Split,
) -> float:
    """Sum over non-training nodes of per-row Euclidean distance to teacher."""
    p = pred.probs if isinstance(pred, StudentPrediction) else pred
    t = teacher.probs if isinstance(teacher, SoftLabelMatrix) else teacher
    if p.shape != t.shape:
        raise ad.ShapeError("prediction and teacher shapes differ")
    rows = split.non_train()
    diff = p[rows] - t[rows]
    return float(np.sqrt((diff * diff).sum(axis=1) + 1e-12).sum())


@dataclass
class StudentResult:
    params: StudentParams
    losses: list[float] = field(default_factory=list)
    val_accs: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_acc: float = -1.0


def _subset_accuracy(probs: np.ndarray, labels: np.ndarray, nodes: np.ndarray) -> float:
    return float(np.mean(probs[nodes].argmax(axis=1) == labels[nodes]))


def _copy_params(params: StudentParams) -> StudentParams:
    arrays = {
        name: None if getattr(params, name) is None else getattr(params, name).copy()
        for name in (
            "balance_logit",
            "confidence",
            "feature_proj",
            "mlp_w1",
            "mlp_b1",
            "mlp_w2",
            "mlp_b2",
        )
    }
    return replace(params, **arrays)


def train_student(
    g: Graph,
    split: Split,
    teacher: SoftLabelMatrix,
    variant: str,
    hyper: StudentHyper,
    seed: int = 0,
    max_epochs: int = 1000,
    patience: int = 50,
) -> StudentResult:
    """Distill `teacher` into a student with full-batch Adam steps.

    Early-stops once validation accuracy has not improved for `patience`
    epochs and returns the parameters of the best-validation epoch.
    """
    teacher.validate(g, tol=1e-4)
    init_rng = derive_rng(seed, "student-init")
    drop_rng = derive_rng(seed, "student-dropout")
    params = init_student_params(g, variant, hyper, init_rng)
    structure = build_prop_structure(g)

    names = params.trainable()
    arrays = [getattr(params, name) for name in names]
    state = AdamState.init(arrays, lr=hyper.lr, wd=hyper.wd)

    result = StudentResult(params=params)
    best = _copy_params(params)
    stale = 0

    for epoch in range(max_epochs):
        tick = time.perf_counter()
        tape, loss, leaves = distill_objective(
            g, split, teacher, params, names,
            training=True, rng=drop_rng, structure=structure,
        )
        loss_val = float(loss.data[0, 0])
        if not np.isfinite(loss_val):
            raise TrainingDiverged(f"non-finite student loss at epoch {epoch}")
        tape.backward(loss)
        adam_step(arrays, [leaves[name].grad for name in names], state)

        eval_pred = cpf_forward(g, split, params, training=False)
        val_acc = _subset_accuracy(eval_pred.probs, g.labels, split.val)
        result.losses.append(loss_val)
        result.val_accs.append(val_acc)
        result.epoch_seconds.append(time.perf_counter() - tick)

        if val_acc > result.best_val_acc:
            result.best_val_acc = val_acc
            result.best_epoch = epoch
            best = _copy_params(params)
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break

    result.params = best
    return result


@dataclass
class Trial:
    hyper: StudentHyper
    val_acc: float
    best_epoch: int


@dataclass
class GridResult:
    best: StudentHyper
    best_val_acc: float
    trials: list[Trial]


def grid_search(
    g: Graph,
    split: Split,
    teacher: SoftLabelMatrix,
    variant: str,
    grid: dict[str, list] | None = None,
    seed: int = 0,
    max_trials: int | None = None,
    jobs: int = 1,
    max_epochs: int = 1000,
    patience: int = 50,
) -> GridResult:
    """Search hyperparameter combinations by validation accuracy.

    Exhaustive over the grid, or a seeded random subset of `max_trials`
    combinations. Ties prefer fewer propagation layers, then a smaller
    hidden size.
    """
    grid = dict(default_grid() if grid is None else grid)
    keys = sorted(grid)
    if not keys or any(not grid[k] for k in keys):
        raise ValueError("grid must be non-empty")
    combos = [dict(zip(keys, vals)) for vals in product(*(grid[k] for k in keys))]
    if max_trials is not None and max_trials < len(combos):
        rng = derive_rng(seed, "grid")
        picks = rng.choice(len(combos), size=max_trials, replace=False)
        combos = [combos[i] for i in sorted(picks)]

    def run(combo: dict) -> Trial:
        hyper = StudentHyper(**combo)
        res = train_student(
            g, split, teacher, variant, hyper, seed=seed,
            max_epochs=max_epochs, patience=patience,
        )
        return Trial(hyper=hyper, val_acc=res.best_val_acc, best_epoch=res.best_epoch)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            trials = list(pool.map(run, combos))
    else:
        trials = [run(c) for c in combos]

    ranked = sorted(
        trials, key=lambda t: (-t.val_acc, t.hyper.num_layers, t.hyper.hidden_size)
    )
    return GridResult(best=ranked[0].hyper, best_val_acc=ranked[0].val_acc, trials=trials)


# ---------------------------------------------------------------------------
# trained-student file format


def save_student(params: StudentParams, path: str | Path, seed: int = -1) -> None:
    """Write student.tsv: header plus #alpha / #conf-or-#z / #mlp sections."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    def rows(arr: np.ndarray):
        for row in np.atleast_2d(arr):
            yield "\t".join(f"{x:.9g}" for x in row)

    with path.open("w", encoding="utf-8") as fh:
        fh.write(
            f"#variant={params.variant}\t#layers={params.num_layers}"
            f"\t#hidden={params.hidden_size}\t#dropout={params.dropout:.9g}"
            f"\t#seed={seed}\t#norm_conf_feats={int(params.normalize_confidence_features)}\n"
        )
        if params.fixed_balance is not None:
            fh.write(f"#alpha\tfixed={params.fixed_balance:.9g}\n")
        else:
            fh.write("#alpha\n")
            for line in rows(params.balance_logit):
                fh.write(line + "\n")
        if params.confidence is not None:
            fh.write("#conf\n")
            for line in rows(params.confidence):
                fh.write(line + "\n")
        elif params.feature_proj is not None:
            fh.write("#z\n")
            for line in rows(params.feature_proj):
                fh.write(line + "\n")
        fh.write("#mlp\n")
        for arr in (params.mlp_w1, params.mlp_b1, params.mlp_w2, params.mlp_b2):
            fh.write(f"#shape\t{arr.shape[0]}\t{arr.shape[1]}\n")
            for line in rows(arr):
                fh.write(line + "\n")


def load_student(path: str | Path, g: Graph) -> tuple[StudentParams, int]:
    """Read student.tsv back into params; returns (params, recorded seed)."""
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("#variant="):
        raise ValueError(f"{path}: not a student file")
    header = dict(
        token.lstrip("#").split("=", 1) for token in lines[0].split("\t")
    )
    variant = header["variant"]
    fixed_balance = 1.0 if variant == "plp" else 0.0 if variant == "ft" else None

    sections: dict[str, list[str]] = {}
    current = None
    for line in lines[1:]:
        if line.startswith("#alpha"):
            current = "alpha"
            sections[current] = []
            if "fixed=" in line:
                continue
        elif line in ("#conf", "#z", "#mlp"):
            current = line[1:]
            sections[current] = []
        elif current is not None:
            sections[current].append(line)

    def parse(name: str) -> np.ndarray | None:
        body = [ln for ln in sections.get(name, []) if ln and not ln.startswith("#")]
        if not body:
            return None
        return np.array(
            [[float(x) for x in ln.split("\t")] for ln in body], dtype=np.float64
        )

    mlp_lines = sections.get("mlp", [])
    mats: list[np.ndarray] = []
    i = 0
    while i < len(mlp_lines):
        if not mlp_lines[i].startswith("#shape"):
            raise ValueError(f"{path}: malformed #mlp section")
        _, r, c = mlp_lines[i].split("\t")
        r = int(r)
        block = mlp_lines[i + 1 : i + 1 + r]
        mats.append(
            np.array([[float(x) for x in ln.split("\t")] for ln in block])
        )
        i += 1 + r
    if len(mats) != 4:
        raise ValueError(f"{path}: expected 4 matrices in #mlp section")

    params = StudentParams(
        variant=variant,
        num_layers=int(header["layers"]),
        hidden_size=int(header["hidden"]),
        dropout=float(header["dropout"]),
        balance_logit=parse("alpha"),
        fixed_balance=fixed_balance,
        confidence=parse("conf"),
        feature_proj=parse("z"),
        mlp_w1=mats[0],
        mlp_b1=mats[1],
        mlp_w2=mats[2],
        mlp_b2=mats[3],
        normalize_confidence_features=bool(int(header.get("norm_conf_feats", "0"))),
    )
    if params.mlp_w1.shape[0] != g.num_features:
        raise ValueError(f"{path}: MLP input dim does not match graph features")
    return params, int(header.get("seed", "-1"))


def confidence_scores(g: Graph, params: StudentParams) -> np.ndarray:
    """Per-node propagation confidence, whichever way it is parameterized."""
    if params.confidence is not None:
        return params.confidence[:, 0].copy()
    feats = _confidence_features(g, params.normalize_confidence_features)
    return (feats @ params.feature_proj)[:, 0]
