"""Command-line surface: prepare data, train teachers, distill, sweep, explain.

Every subcommand resolves its settings from an optional flat key=value config
file overridden by flags, executes, and writes its outputs plus a manifest
under the output directory. The manifest is itself a valid config file, so
any run can be reproduced with ``--config <out>/manifest.tsv``.

Exit codes: 0 success, 1 invalid configuration, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

import cpf
from cpf import evaluate, student, teacher
from cpf.graph import BundleError, Graph, Split, SplitError, load_bundle, make_split, write_bundle
from cpf.student import StudentHyper, default_grid
from cpf.teacher import SoftLabelError, TeacherConfig, TrainingDiverged


class ConfigError(ValueError):
    """Invalid run configuration (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse problems are config problems
        raise ConfigError(message)


@dataclass
class RunConfig:
    """Resolved settings for one subcommand invocation."""

    command: str
    dataset: Path | None = None
    teacher_spec: str = "builtin:gcn"
    variant: str = "cpf-ind"
    seeds: list[int] = field(default_factory=lambda: [0])
    out: Path = Path("runs/out")
    labeled_per_class: int = 20
    val_per_class: int = 30
    val_total: int | None = None
    ks: list[int] = field(default_factory=lambda: [5, 6, 7, 8, 9, 10])
    ratios: list[int] = field(default_factory=lambda: [5, 10, 20, 50])
    teacher_cfg: TeacherConfig = field(default_factory=TeacherConfig)
    hyper: StudentHyper = field(default_factory=StudentHyper)
    max_epochs: int = 1000
    patience: int = 50
    grid: dict[str, list] | None = None
    max_trials: int | None = None
    jobs: int = 1
    top_k: int = 10
    student_file: Path | None = None
    split_file: Path | None = None
    inputs: list[Path] = field(default_factory=list)

    def flat(self) -> dict[str, str]:
        """Flat key=value view written into the manifest."""
        out = {
            "command": self.command,
            "teacher": self.teacher_spec,
            "variant": self.variant,
            "seeds": ",".join(str(s) for s in self.seeds),
            "out": str(self.out),
            "split.labeled_per_class": str(self.labeled_per_class),
            "split.val_per_class": str(self.val_per_class),
            "k": ",".join(str(k) for k in self.ks),
            "ratios": ",".join(str(r) for r in self.ratios),
            "teacher.hidden": str(self.teacher_cfg.hidden_size),
            "teacher.dropout": str(self.teacher_cfg.dropout),
            "teacher.lr": str(self.teacher_cfg.lr),
            "teacher.wd": str(self.teacher_cfg.wd),
            "teacher.k": str(self.teacher_cfg.k),
            "teacher.max_epochs": str(self.teacher_cfg.max_epochs),
            "teacher.patience": str(self.teacher_cfg.patience),
            "student.layers": str(self.hyper.num_layers),
            "student.hidden": str(self.hyper.hidden_size),
            "student.dropout": str(self.hyper.dropout),
            "student.lr": str(self.hyper.lr),
            "student.wd": str(self.hyper.wd),
            "student.max_epochs": str(self.max_epochs),
            "student.patience": str(self.patience),
            "jobs": str(self.jobs),
            "top_k": str(self.top_k),
        }
        if self.dataset is not None:
            out["dataset"] = str(self.dataset)
        if self.val_total is not None:
            out["split.val_total"] = str(self.val_total)
        if self.grid is not None:
            out["grid"] = ";".join(
                f"{k}=" + ",".join(str(v) for v in vs) for k, vs in sorted(self.grid.items())
            )
        if self.max_trials is not None:
            out["max_trials"] = str(self.max_trials)
        if self.student_file is not None:
            out["student"] = str(self.student_file)
        if self.split_file is not None:
            out["split_file"] = str(self.split_file)
        if self.inputs:
            out["inputs"] = ",".join(str(p) for p in self.inputs)
        return out


def _parse_int_list(text: str) -> list[int]:
    """Accept '5..10' ranges and '5,7,9' lists."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(p) for p in text.split(",") if p.strip()]


_GRID_KEYS = {
    "layers": "num_layers",
    "num_layers": "num_layers",
    "hidden": "hidden_size",
    "hidden_size": "hidden_size",
    "dropout": "dropout",
    "lr": "lr",
    "wd": "wd",
}


def _parse_grid(text: str) -> dict[str, list]:
    if text == "default":
        return default_grid()
    if text == "quick":
        return {
            "num_layers": [5, 8],
            "hidden_size": [16, 64],
            "dropout": [0.2, 0.5],
            "lr": [0.005, 0.01],
            "wd": [0.0005, 0.001],
        }
    grid: dict[str, list] = {}
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"bad grid entry {part!r}")
        key, vals = part.split("=", 1)
        key = key.strip()
        if key not in _GRID_KEYS:
            raise ConfigError(f"unknown grid key {key!r}")
        canonical = _GRID_KEYS[key]
        cast = int if canonical in ("num_layers", "hidden_size") else float
        grid[canonical] = [cast(v) for v in vals.split(",") if v.strip()]
    if not grid:
        raise ConfigError("empty grid specification")
    return grid


def read_config_file(path: Path) -> dict[str, str]:
    """Flat key=value lines; '#' comments and run.* metadata are skipped."""
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    out: dict[str, str] = {}
    for ln, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key=value")
        key, value = line.split("=", 1)
        key = key.strip()
        if key.startswith("run."):
            continue
        out[key] = value.strip()
    return out


def _build_config(command: str, args: argparse.Namespace) -> RunConfig:
    file_cfg: dict[str, str] = {}
    if getattr(args, "config", None):
        file_cfg = read_config_file(Path(args.config))

    def pick(flag_name: str, file_key: str, default=None):
        flag_val = getattr(args, flag_name, None)
        if flag_val is not None:
            return flag_val
        if file_key in file_cfg:
            return file_cfg[file_key]
        return default

    cfg = RunConfig(command=command)

    dataset = pick("dataset", "dataset")
    if dataset is not None:
        cfg.dataset = Path(dataset)
    cfg.teacher_spec = str(pick("teacher", "teacher", cfg.teacher_spec))
    cfg.variant = str(pick("variant", "variant", cfg.variant)).lower()
    if cfg.variant not in student.VARIANTS:
        raise ConfigError(f"unknown variant {cfg.variant!r}; pick one of {student.VARIANTS}")

    seeds = pick("seeds", "seeds")
    seed = pick("seed", "seed")
    if seeds is not None:
        cfg.seeds = _parse_int_list(str(seeds))
    elif seed is not None:
        cfg.seeds = [int(seed)]
    if not cfg.seeds:
        raise ConfigError("at least one seed is required")

    out = pick("out", "out")
    if out is None:
        root = os.environ.get("CPF_OUT", "runs")
        out = Path(root) / command
    cfg.out = Path(out)

    cfg.labeled_per_class = int(pick("labeled_per_class", "split.labeled_per_class", cfg.labeled_per_class))
    cfg.val_per_class = int(pick("val_per_class", "split.val_per_class", cfg.val_per_class))
    val_total = pick("val_total", "split.val_total")
    cfg.val_total = int(val_total) if val_total is not None else None

    k_text = pick("k", "k")
    if k_text is not None:
        cfg.ks = _parse_int_list(str(k_text))
    ratios = pick("ratios", "ratios")
    if ratios is not None:
        cfg.ratios = _parse_int_list(str(ratios))

    kind = "sgc" if cfg.teacher_spec == "builtin:sgc" else "gcn"
    defaults = {"gcn": dict(lr=0.01, wd=0.001, dropout=0.8), "sgc": dict(lr=0.1, wd=0.001, dropout=0.0)}[kind]
    cfg.teacher_cfg = TeacherConfig(
        kind=kind,
        hidden_size=int(pick("teacher_hidden", "teacher.hidden", 64)),
        dropout=float(pick("teacher_dropout", "teacher.dropout", defaults["dropout"])),
        lr=float(pick("teacher_lr", "teacher.lr", defaults["lr"])),
        wd=float(pick("teacher_wd", "teacher.wd", defaults["wd"])),
        k=int(pick("teacher_k", "teacher.k", 2)),
        max_epochs=int(pick("teacher_max_epochs", "teacher.max_epochs", 500)),
        patience=int(pick("teacher_patience", "teacher.patience", 50)),
    )
    cfg.hyper = StudentHyper(
        num_layers=int(pick("layers", "student.layers", 5)),
        hidden_size=int(pick("hidden", "student.hidden", 16)),
        dropout=float(pick("dropout", "student.dropout", 0.2)),
        lr=float(pick("lr", "student.lr", 0.01)),
        wd=float(pick("wd", "student.wd", 0.0005)),
    )
    cfg.max_epochs = int(pick("max_epochs", "student.max_epochs", 1000))
    cfg.patience = int(pick("patience", "student.patience", 50))

    grid_text = pick("grid", "grid")
    if grid_text is not None:
        cfg.grid = _parse_grid(str(grid_text))
    max_trials = pick("max_trials", "max_trials")
    cfg.max_trials = int(max_trials) if max_trials is not None else None
    cfg.jobs = int(pick("jobs", "jobs", 1))
    cfg.top_k = int(pick("top_k", "top_k", 10))

    student_file = pick("student", "student")
    if student_file is not None:
        cfg.student_file = Path(student_file)
    split_file = pick("split_file", "split_file")
    if split_file is not None:
        cfg.split_file = Path(split_file)
    if getattr(args, "inputs", None):
        cfg.inputs = [Path(p) for p in args.inputs]
    elif "inputs" in file_cfg:
        cfg.inputs = [Path(p) for p in file_cfg["inputs"].split(",")]

    _validate_paths(cfg)
    return cfg


def _validate_paths(cfg: RunConfig) -> None:
    needs_dataset = cfg.command in (
        "prepare", "train-teacher", "distill", "sweep-k", "sweep-labels", "explain",
    )
    if needs_dataset:
        if cfg.dataset is None:
            raise ConfigError("--dataset is required")
        if not cfg.dataset.is_dir():
            raise ConfigError(f"dataset directory not found: {cfg.dataset}")
    if cfg.teacher_spec.startswith("file:"):
        path = Path(cfg.teacher_spec[5:])
        if not path.is_file():
            raise ConfigError(f"soft label file not found: {path}")
    elif cfg.teacher_spec not in ("builtin:gcn", "builtin:sgc") and cfg.command != "prepare":
        if needs_dataset or cfg.command in ("train-teacher", "distill"):
            raise ConfigError(
                f"teacher must be builtin:gcn, builtin:sgc or file:<path>, got {cfg.teacher_spec!r}"
            )
    if cfg.command == "explain":
        if cfg.student_file is None:
            raise ConfigError("--student is required for explain")
        if not cfg.student_file.is_file():
            raise ConfigError(f"student file not found: {cfg.student_file}")
    if cfg.command == "report":
        if not cfg.inputs:
            raise ConfigError("report needs at least one input report file")
        for p in cfg.inputs:
            if not p.is_file():
                raise ConfigError(f"report input not found: {p}")


def write_manifest(cfg: RunConfig, out_dir: Path, wall_seconds: float) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "manifest.tsv").open("w", encoding="utf-8") as fh:
        for key, value in sorted(cfg.flat().items()):
            fh.write(f"{key}={value}\n")
        fh.write(f"run.version={cpf.__version__}\n")
        fh.write(f"run.wall_seconds={wall_seconds:.3f}\n")


def _load_dataset(cfg: RunConfig, seed: int) -> tuple[Graph, Split]:
    g, split = load_bundle(cfg.dataset)
    if split is None:
        split = make_split(
            g, cfg.labeled_per_class, cfg.val_per_class, seed=seed, val_total=cfg.val_total
        )
    return g, split


def _teacher_soft_labels(cfg: RunConfig, g: Graph, split: Split, seed: int):
    """Train a builtin teacher or import a soft-label file."""
    if cfg.teacher_spec.startswith("file:"):
        soft = teacher.read_soft_labels(Path(cfg.teacher_spec[5:]), g, split, clamp_train=True)
        return soft, None
    result = teacher.train_teacher(g, split, cfg.teacher_cfg, seed=seed)
    return result.soft_labels, result


# ---------------------------------------------------------------------------
# subcommands


def _cmd_prepare(cfg: RunConfig) -> None:
    seed = cfg.seeds[0]
    g, split = _load_dataset(cfg, seed)
    write_bundle(g, cfg.out, split=split)
    print(
        f"prepared bundle: {g.num_nodes} nodes, {g.num_edges} edges, "
        f"{g.num_features} features, {g.num_classes} classes -> {cfg.out}"
    )


def _cmd_train_teacher(cfg: RunConfig) -> None:
    for seed in cfg.seeds:
        g, split = _load_dataset(cfg, seed)
        soft, result = _teacher_soft_labels(cfg, g, split, seed)
        run_dir = cfg.out if len(cfg.seeds) == 1 else cfg.out / f"seed{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        teacher.write_soft_labels(soft, run_dir / "soft_labels.tsv")
        report = evaluate.ExperimentReport(
            teacher_source=soft.source,
            teacher_acc=evaluate.accuracy(soft, g, split, "test"),
            student_accs={},
            relative_improvement=0.0,
            seed=seed,
            hyperparams={"epochs": len(result.losses) if result else 0},
        )
        evaluate.write_report(report, run_dir / "report.tsv")
        print(f"seed {seed}: teacher {soft.source} test acc {report.teacher_acc:.4f}")


def _distill_one(cfg: RunConfig, seed: int, run_dir: Path) -> evaluate.ExperimentReport:
    timings: dict[str, float] = {}
    tick = time.perf_counter()
    g, split = _load_dataset(cfg, seed)
    soft, _ = _teacher_soft_labels(cfg, g, split, seed)
    timings["teacher"] = time.perf_counter() - tick

    hyper = cfg.hyper
    if cfg.grid is not None:
        tick = time.perf_counter()
        grid_res = student.grid_search(
            g, split, soft, cfg.variant, cfg.grid, seed=seed,
            max_trials=cfg.max_trials, jobs=cfg.jobs,
            max_epochs=cfg.max_epochs, patience=cfg.patience,
        )
        hyper = grid_res.best
        timings["grid_search"] = time.perf_counter() - tick

    tick = time.perf_counter()
    result = student.train_student(
        g, split, soft, cfg.variant, hyper, seed=seed,
        max_epochs=cfg.max_epochs, patience=cfg.patience,
    )
    timings["student"] = time.perf_counter() - tick

    pred = student.cpf_forward(g, split, result.params)
    run_dir.mkdir(parents=True, exist_ok=True)
    teacher.write_soft_labels(soft, run_dir / "soft_labels.tsv")
    student.save_student(result.params, run_dir / "student.tsv", seed=seed)
    write_bundle(g, run_dir / "data", split=split)
    report = evaluate.build_report(
        g, split, soft, {cfg.variant: pred}, seed,
        hyperparams={
            "layers": hyper.num_layers,
            "hidden": hyper.hidden_size,
            "dropout": hyper.dropout,
            "lr": hyper.lr,
            "wd": hyper.wd,
            "epochs": len(result.losses),
        },
        timings=timings,
    )
    evaluate.write_report(report, run_dir / "report.tsv")
    return report


def _cmd_distill(cfg: RunConfig) -> None:
    reports = []
    for seed in cfg.seeds:
        run_dir = cfg.out if len(cfg.seeds) == 1 else cfg.out / f"seed{seed}"
        report = _distill_one(cfg, seed, run_dir)
        reports.append(report)
        acc = report.student_accs[cfg.variant]
        print(
            f"seed {seed}: teacher {report.teacher_acc:.4f} -> "
            f"{cfg.variant} {acc:.4f} ({report.relative_improvement:+.2%})"
        )
    if len(reports) > 1:
        _write_seed_summary(reports, cfg.out / "summary.tsv", cfg.variant)


def _write_seed_summary(reports: list, path: Path, variant: str) -> None:
    teacher_accs = np.array([r.teacher_acc for r in reports])
    student_accs = np.array([r.student_accs[variant] for r in reports])
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"seeds\t{len(reports)}\n")
        fh.write(f"teacher_acc.mean\t{teacher_accs.mean():.9g}\n")
        fh.write(f"teacher_acc.std\t{teacher_accs.std(ddof=1) if len(reports) > 1 else 0.0:.9g}\n")
        fh.write(f"student_acc.mean\t{student_accs.mean():.9g}\n")
        fh.write(f"student_acc.std\t{student_accs.std(ddof=1) if len(reports) > 1 else 0.0:.9g}\n")
        fh.write(f"wins\t{int((student_accs > teacher_accs).sum())}\n")


def _cmd_sweep_k(cfg: RunConfig) -> None:
    seed = cfg.seeds[0]
    g, split = _load_dataset(cfg, seed)
    soft, _ = _teacher_soft_labels(cfg, g, split, seed)
    res = evaluate.k_sweep(
        g, split, soft, cfg.variant, cfg.ks, cfg.hyper, seed=seed,
        max_epochs=cfg.max_epochs, patience=cfg.patience,
    )
    evaluate.write_sweep(res.rows, cfg.out / "sweep.tsv", "k")
    print(f"k sweep over {cfg.ks}: gap {res.gap:.4f} -> {cfg.out / 'sweep.tsv'}")


def _cmd_sweep_labels(cfg: RunConfig) -> None:
    seed = cfg.seeds[0]
    g, _ = _load_dataset(cfg, seed)
    rows = evaluate.label_ratio_sweep(
        g, cfg.teacher_cfg, cfg.ratios, cfg.variant, cfg.hyper, seed=seed,
        val_per_class=cfg.val_per_class, max_epochs=cfg.max_epochs, patience=cfg.patience,
    )
    evaluate.write_sweep(rows, cfg.out / "sweep.tsv", "labeled_per_class")
    print(f"label sweep over {cfg.ratios} -> {cfg.out / 'sweep.tsv'}")


def _cmd_explain(cfg: RunConfig) -> None:
    g, bundle_split = load_bundle(cfg.dataset)
    split_path = cfg.split_file
    if split_path is None:
        sibling = cfg.student_file.parent / "data"
        if (sibling / "split.tsv").is_file():
            _, split = load_bundle(sibling)
        elif bundle_split is not None:
            split = bundle_split
        else:
            raise ConfigError("no split available: pass --split-file or prepare the dataset")
    else:
        _, split = load_bundle(split_path.parent if split_path.name == "split.tsv" else split_path)
    params, _seed = student.load_student(cfg.student_file, g)
    pred = student.cpf_forward(g, split, params)
    cases = evaluate.rank_interpretability(params, pred, g, top_k=cfg.top_k)
    cfg.out.mkdir(parents=True, exist_ok=True)
    evaluate.write_cases(cases, cfg.out / "cases.json", cfg.out / "cases.dot")
    print(f"wrote {len(cases)} case studies -> {cfg.out}")


def _cmd_report(cfg: RunConfig) -> None:
    records = [evaluate.read_report(p) for p in cfg.inputs]
    keys = sorted({k for r in records for k in r if _is_float(r[k])})
    cfg.out.mkdir(parents=True, exist_ok=True)
    with (cfg.out / "summary.tsv").open("w", encoding="utf-8") as fh:
        fh.write(f"inputs\t{len(records)}\n")
        for key in keys:
            vals = np.array([float(r[key]) for r in records if key in r])
            std = vals.std(ddof=1) if vals.size > 1 else 0.0
            fh.write(f"{key}.mean\t{vals.mean():.9g}\n")
            fh.write(f"{key}.std\t{std:.9g}\n")
    print(f"aggregated {len(records)} reports -> {cfg.out / 'summary.tsv'}")


def _is_float(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


_COMMANDS = {
    "prepare": _cmd_prepare,
    "train-teacher": _cmd_train_teacher,
    "distill": _cmd_distill,
    "sweep-k": _cmd_sweep_k,
    "sweep-labels": _cmd_sweep_labels,
    "explain": _cmd_explain,
    "report": _cmd_report,
}


def _add_common(p: _Parser) -> None:
    p.add_argument("--config", help="flat key=value config file; flags override")
    p.add_argument("--dataset", help="bundle directory")
    p.add_argument("--teacher", help="builtin:gcn | builtin:sgc | file:<soft_labels.tsv>")
    p.add_argument("--variant", help="plp | ft | cpf-ind | cpf-tra")
    p.add_argument("--seed", type=int, help="single master seed")
    p.add_argument("--seeds", help="comma list or lo..hi range of master seeds")
    p.add_argument("--out", help="output directory (default $CPF_OUT/<command>)")
    p.add_argument("--labeled-per-class", dest="labeled_per_class", type=int)
    p.add_argument("--val-per-class", dest="val_per_class", type=int)
    p.add_argument("--val-total", dest="val_total", type=int)
    p.add_argument("--k", help="propagation layers, e.g. 5..10 or 5,7,9")
    p.add_argument("--ratios", help="labeled-per-class values for sweep-labels")
    p.add_argument("--grid", help="default | quick | key=v,v;key=v,...")
    p.add_argument("--max-trials", dest="max_trials", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--student", help="trained student.tsv (explain)")
    p.add_argument("--split-file", dest="split_file", help="bundle dir holding split.tsv")
    p.add_argument("--layers", type=int, help="student propagation layers")
    p.add_argument("--hidden", type=int, help="student MLP hidden size")
    p.add_argument("--dropout", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--wd", type=float)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--teacher-hidden", dest="teacher_hidden", type=int)
    p.add_argument("--teacher-dropout", dest="teacher_dropout", type=float)
    p.add_argument("--teacher-lr", dest="teacher_lr", type=float)
    p.add_argument("--teacher-wd", dest="teacher_wd", type=float)
    p.add_argument("--teacher-k", dest="teacher_k", type=int)
    p.add_argument("--teacher-max-epochs", dest="teacher_max_epochs", type=int)
    p.add_argument("--teacher-patience", dest="teacher_patience", type=int)


def build_parser() -> _Parser:
    parser = _Parser(prog="cpf", description=__doc__)
    parser.add_argument("--version", action="version", version=f"cpf {cpf.__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        _add_common(p)
        if name == "report":
            p.add_argument("inputs", nargs="*", help="report.tsv files to aggregate")
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = _build_config(args.command, args)
    except ConfigError as exc:
        print(f"cpf: invalid configuration: {exc}", file=sys.stderr)
        return 1
    tick = time.perf_counter()
    try:
        _COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"cpf: invalid configuration: {exc}", file=sys.stderr)
        return 1
    except (TrainingDiverged, BundleError, SoftLabelError, SplitError, OSError) as exc:
        print(f"cpf: run failed: {exc}", file=sys.stderr)
        return 2
    write_manifest(cfg, cfg.out, time.perf_counter() - tick)
    return 0


if __name__ == "__main__":
    sys.exit(main())
