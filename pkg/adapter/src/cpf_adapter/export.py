"""Standalone entry point: convert datasets and export teacher soft labels.

Usage:

    cpf-adapter --dataset cora --raw-dir raw/ --out out/cora
    cpf-adapter --dataset cora --raw-dir raw/ --out out/cora --teacher gat
    cpf-adapter --bundle out/cora --teacher glp --out out/cora

Conversion writes the bundle TSV files (the split must be added by the
consumer's prepare step before teachers can train). Exporting trains the
named teacher on the bundle's own split.tsv - never a fresh split - and
writes soft_labels.<teacher>.tsv next to it. ``--teacher glp`` exports both
filter variants, tagged separately.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path

from cpf_adapter import formats, teachers


@dataclass
class ExportJob:
    """One teacher-export request resolved from the command line."""

    teacher: str
    bundle_dir: Path
    out_dir: Path
    seed: int = 0
    max_epochs: int | None = None
    variants: list[str] = field(init=False)

    def __post_init__(self) -> None:
        key = self.teacher.lower()
        if key == "glp":
            self.variants = ["glp-rnm", "glp-ar"]
        elif key in teachers.SETTINGS:
            self.variants = [key]
        else:
            raise ValueError(
                f"unsupported teacher {self.teacher!r}; supported: "
                f"{', '.join((*teachers.SETTINGS, 'glp'))}"
            )


def export_teacher(job: ExportJob) -> list[Path]:
    """Train each requested variant and write its soft-label file."""
    bundle = formats.read_bundle(job.bundle_dir)
    written = []
    for variant in job.variants:
        probs = teachers.train_external_teacher(
            variant, bundle, seed=job.seed, max_epochs=job.max_epochs
        )
        assert probs.shape[0] == bundle.num_nodes
        tag = teachers.SETTINGS[variant].name
        path = job.out_dir / f"soft_labels.{variant}.tsv"
        formats.write_soft_label_file(probs, f"external:{tag}", path)
        written.append(path)
    return written


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpf-adapter", description=__doc__)
    parser.add_argument(
        "--dataset",
        help="public dataset name to convert (cora, citeseer, pubmed, "
        "a-computers, a-photo)",
    )
    parser.add_argument("--raw-dir", help="directory holding the raw dataset files")
    parser.add_argument("--bundle", help="existing bundle directory (skip conversion)")
    parser.add_argument(
        "--teacher",
        help="teacher to train and export (gat, appnp, sage, gcnii, "
        "glp-rnm, glp-ar, or glp for both)",
    )
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--max-epochs", type=int, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out)
    try:
        if args.dataset:
            if not args.raw_dir:
                raise ValueError("--dataset conversion needs --raw-dir")
            raw = formats.convert_dataset(args.dataset, args.raw_dir, out_dir)
            print(
                f"converted {args.dataset}: {raw.features.shape[0]} nodes, "
                f"{raw.edges.shape[0]} edges, {raw.features.shape[1]} features, "
                f"{raw.num_classes} classes -> {out_dir}"
            )
        if args.teacher:
            bundle_dir = Path(args.bundle) if args.bundle else out_dir
            job = ExportJob(
                teacher=args.teacher,
                bundle_dir=bundle_dir,
                out_dir=out_dir,
                seed=args.seed,
                max_epochs=args.max_epochs,
            )
            for path in export_teacher(job):
                print(f"exported {path}")
        if not args.dataset and not args.teacher:
            raise ValueError("nothing to do: pass --dataset and/or --teacher")
    except (ValueError, formats.RawDataError) as exc:
        print(f"cpf-adapter: {exc}", file=sys.stderr)
        return 1
    except RuntimeError as exc:
        print(f"cpf-adapter: run failed: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
