"""Accuracy metrics, sweep experiments, and interpretability probes.

Report files are flat TSV so they diff cleanly; case studies additionally
get a DOT rendering (one graph per case, nodes colored by predicted class)
for external plotting.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from cpf.graph import Graph, Split, make_split
from cpf.student import (
    StudentHyper,
    StudentParams,
    StudentPrediction,
    confidence_scores,
    cpf_forward,
    train_student,
)
from cpf.teacher import SoftLabelMatrix, TeacherConfig, train_teacher


def _probs_of(pred) -> np.ndarray:
    if isinstance(pred, (StudentPrediction, SoftLabelMatrix)):
        return pred.probs
    return np.asarray(pred)


def accuracy(pred, g: Graph, split: Split, subset: str = "test") -> float:
    """Fraction of subset nodes whose argmax matches the true label.

    Argmax ties resolve to the lowest class index.
    """
    nodes = {"train": split.train, "val": split.val, "test": split.test}[subset]
    if nodes.size == 0:
        raise ValueError(f"{subset} subset is empty")
    probs = _probs_of(pred)
    return float(np.mean(probs[nodes].argmax(axis=1) == g.labels[nodes]))


def relative_improvement(student_acc: float, teacher_acc: float) -> float:
    """Relative gain of the student over its teacher."""
    return student_acc / teacher_acc - 1.0


@dataclass
class ExperimentReport:
    """Outcome of one distillation run."""

    teacher_source: str
    teacher_acc: float
    student_accs: dict[str, float]
    relative_improvement: float
    seed: int
    hyperparams: dict[str, object] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for acc in [self.teacher_acc, *self.student_accs.values()]:
            if not 0.0 <= acc <= 1.0:
                raise ValueError(f"accuracy {acc} outside [0, 1]")


def build_report(
    g: Graph,
    split: Split,
    teacher: SoftLabelMatrix,
    student_preds: dict[str, StudentPrediction],
    seed: int,
    hyperparams: dict[str, object] | None = None,
    timings: dict[str, float] | None = None,
) -> ExperimentReport:
    teacher_acc = accuracy(teacher, g, split, "test")
    student_accs = {
        name: accuracy(pred, g, split, "test") for name, pred in student_preds.items()
    }
    best = max(student_accs.values())
    return ExperimentReport(
        teacher_source=teacher.source,
        teacher_acc=teacher_acc,
        student_accs=student_accs,
        relative_improvement=relative_improvement(best, teacher_acc),
        seed=seed,
        hyperparams=dict(hyperparams or {}),
        timings=dict(timings or {}),
    )


def write_report(report: ExperimentReport, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"teacher_source\t{report.teacher_source}\n")
        fh.write(f"teacher_acc\t{report.teacher_acc:.9g}\n")
        for name in sorted(report.student_accs):
            fh.write(f"student_acc.{name}\t{report.student_accs[name]:.9g}\n")
        fh.write(f"relative_improvement\t{report.relative_improvement:.9g}\n")
        fh.write(f"seed\t{report.seed}\n")
        for key in sorted(report.hyperparams):
            fh.write(f"hyper.{key}\t{report.hyperparams[key]}\n")
        # wall times are diagnostics, not reproducible outputs
        for key in sorted(report.timings):
            fh.write(f"#timing.{key}\t{report.timings[key]:.6g}\n")


def read_report(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        key, value = line.split("\t", 1)
        out[key] = value
    return out


def write_sweep(rows: list[dict[str, object]], path: str | Path, param_name: str) -> None:
    """One row per swept configuration."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"#{param_name}\tteacher_acc\tstudent_acc\timprovement\n")
        for row in rows:
            fh.write(
                f"{row[param_name]}\t{row['teacher_acc']:.9g}"
                f"\t{row['student_acc']:.9g}\t{row['improvement']:.9g}\n"
            )


@dataclass
class KSweepResult:
    accs: dict[int, float]
    gap: float
    rows: list[dict[str, object]]


def k_sweep(
    g: Graph,
    split: Split,
    teacher: SoftLabelMatrix,
    variant: str,
    ks: list[int],
    hyper: StudentHyper,
    seed: int = 0,
    max_epochs: int = 1000,
    patience: int = 50,
) -> KSweepResult:
    """Re-train the student for each propagation depth, everything else fixed."""
    teacher_acc = accuracy(teacher, g, split, "test")
    accs: dict[int, float] = {}
    rows = []
    for k in ks:
        h = StudentHyper(**{**hyper.__dict__, "num_layers": k})
        res = train_student(
            g, split, teacher, variant, h, seed=seed,
            max_epochs=max_epochs, patience=patience,
        )
        pred = cpf_forward(g, split, res.params)
        acc = accuracy(pred, g, split, "test")
        accs[k] = acc
        rows.append(
            {
                "k": k,
                "teacher_acc": teacher_acc,
                "student_acc": acc,
                "improvement": relative_improvement(acc, teacher_acc),
            }
        )
    gap = max(accs.values()) - min(accs.values())
    return KSweepResult(accs=accs, gap=gap, rows=rows)


def label_ratio_sweep(
    g: Graph,
    teacher_config: TeacherConfig,
    ratios: list[int],
    variant: str,
    hyper: StudentHyper,
    seed: int = 0,
    val_per_class: int = 30,
    max_epochs: int = 1000,
    patience: int = 50,
) -> list[dict[str, object]]:
    """Fresh split + teacher + student per labeled-per-class budget."""
    rows = []
    for ratio in ratios:
        split = make_split(g, ratio, val_per_class, seed=seed)
        tres = train_teacher(g, split, teacher_config, seed=seed)
        teacher_acc = accuracy(tres.soft_labels, g, split, "test")
        sres = train_student(
            g, split, tres.soft_labels, variant, hyper, seed=seed,
            max_epochs=max_epochs, patience=patience,
        )
        pred = cpf_forward(g, split, sres.params)
        student_acc = accuracy(pred, g, split, "test")
        rows.append(
            {
                "labeled_per_class": ratio,
                "teacher_acc": teacher_acc,
                "student_acc": student_acc,
                "improvement": relative_improvement(student_acc, teacher_acc),
            }
        )
    return rows


# ---------------------------------------------------------------------------
# interpretability probes


@dataclass
class CaseStudy:
    """One node's 1-hop neighborhood with its learned score."""

    node: int
    kind: str  # "balance" | "confidence"
    rank: str  # "top" | "bottom"
    value: float
    ego_nodes: list[int]
    ego_edges: list[tuple[int, int]]
    predicted: dict[int, int]
    neighbor_agreement: float


def neighbor_agreement(g: Graph, predicted: np.ndarray, node: int) -> float:
    """Fraction of a node's neighbors sharing its predicted label."""
    nbrs = g.neighbors(node)
    if nbrs.size == 0:
        return 0.0
    return float(np.mean(predicted[nbrs] == predicted[node]))


def _ego(g: Graph, node: int) -> tuple[list[int], list[tuple[int, int]]]:
    nodes = sorted({int(node), *map(int, g.neighbors(node))})
    node_set = set(nodes)
    edges = []
    for u in nodes:
        for v in g.neighbors(u):
            if u < v and int(v) in node_set:
                edges.append((int(u), int(v)))
    return nodes, edges


def _cases_for(
    g: Graph,
    scores: np.ndarray,
    kind: str,
    predicted: np.ndarray,
    top_k: int,
) -> list[CaseStudy]:
    top_k = min(top_k, g.num_nodes)
    order = np.argsort(scores, kind="stable")
    picks = [("top", order[::-1][:top_k]), ("bottom", order[:top_k])]
    out = []
    for rank, nodes in picks:
        for v in nodes:
            ego_nodes, ego_edges = _ego(g, int(v))
            out.append(
                CaseStudy(
                    node=int(v),
                    kind=kind,
                    rank=rank,
                    value=float(scores[v]),
                    ego_nodes=ego_nodes,
                    ego_edges=ego_edges,
                    predicted={u: int(predicted[u]) for u in ego_nodes},
                    neighbor_agreement=neighbor_agreement(g, predicted, int(v)),
                )
            )
    return out


def rank_interpretability(
    params: StudentParams,
    pred: StudentPrediction,
    g: Graph,
    top_k: int = 10,
) -> list[CaseStudy]:
    """Case studies for extreme balance and confidence scores.

    Returns `top_k` largest and smallest nodes per available score kind,
    each with its 1-hop ego graph, the predicted labels inside it, and the
    fraction of neighbors agreeing with the node's predicted label.
    """
    predicted = _probs_of(pred).argmax(axis=1)
    cases: list[CaseStudy] = []
    if params.fixed_balance is None:
        cases.extend(_cases_for(g, params.balance()[:, 0], "balance", predicted, top_k))
    cases.extend(
        _cases_for(g, confidence_scores(g, params), "confidence", predicted, top_k)
    )
    return cases


def agreement_gap(cases: list[CaseStudy], kind: str = "balance") -> float:
    """Mean neighbor agreement of top-ranked minus bottom-ranked nodes."""
    tops = [c.neighbor_agreement for c in cases if c.kind == kind and c.rank == "top"]
    bots = [c.neighbor_agreement for c in cases if c.kind == kind and c.rank == "bottom"]
    if not tops or not bots:
        raise ValueError(f"no cases of kind {kind!r}")
    return float(np.mean(tops) - np.mean(bots))


_DOT_COLORS = [
    "#e41a1c", "#377eb8", "#4daf4a", "#984ea3", "#ff7f00",
    "#ffff33", "#a65628", "#f781bf", "#999999", "#66c2a5",
]


def write_cases(
    cases: list[CaseStudy], json_path: str | Path, dot_path: str | Path
) -> None:
    """Emit cases.json plus one DOT graph per case for external rendering."""
    json_path, dot_path = Path(json_path), Path(dot_path)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    payload = [
        {
            "node": c.node,
            "kind": c.kind,
            "rank": c.rank,
            "value": c.value,
            "ego_nodes": c.ego_nodes,
            "ego_edges": [list(e) for e in c.ego_edges],
            "predicted": {str(k): v for k, v in c.predicted.items()},
            "neighbor_agreement": c.neighbor_agreement,
        }
        for c in cases
    ]
    json_path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")

    with dot_path.open("w", encoding="utf-8") as fh:
        for c in cases:
            fh.write(f"graph case_{c.kind}_{c.rank}_{c.node} {{\n")
            fh.write(f'  label="{c.kind} {c.rank} node {c.node} value {c.value:.4g}";\n')
            fh.write("  node [style=filled];\n")
            for v in c.ego_nodes:
                color = _DOT_COLORS[c.predicted[v] % len(_DOT_COLORS)]
                shape = "doublecircle" if v == c.node else "circle"
                fh.write(f'  n{v} [fillcolor="{color}", shape={shape}];\n')
            for u, v in c.ego_edges:
                fh.write(f"  n{u} -- n{v};\n")
            fh.write("}\n")
