"""End-to-end CLI runs on a small bundle."""

from __future__ import annotations

import numpy as np
import pytest

from cpf.cli import main
from cpf.graph import load_bundle, make_split, write_bundle
from tests.conftest import homophilous_dataset

FAST = [
    "--teacher-max-epochs", "25",
    "--max-epochs", "12",
    "--layers", "2",
    "--hidden", "4",
]


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    g = homophilous_dataset(3, num_classes=3, per_class=20, num_features=6)
    split = make_split(g, 4, 3, seed=0)
    write_bundle(g, root / "toy", split=split, meta={"name": "toy"})
    return root / "toy"


def run(*argv) -> int:
    return main(list(argv))


class TestPrepare:
    def test_prepare_writes_normalized_bundle(self, bundle, tmp_path, capsys):
        out = tmp_path / "prepared"
        assert run("prepare", "--dataset", str(bundle), "--out", str(out)) == 0
        g, split = load_bundle(out)
        assert split is not None
        assert (out / "manifest.tsv").is_file()
        assert "prepared bundle" in capsys.readouterr().out

    def test_prepare_creates_split_when_missing(self, bundle, tmp_path):
        raw = tmp_path / "raw"
        g, _ = load_bundle(bundle)
        write_bundle(g, raw)  # no split.tsv
        out = tmp_path / "prepared"
        assert run(
            "prepare", "--dataset", str(raw), "--out", str(out),
            "--labeled-per-class", "3", "--val-per-class", "2", "--seed", "1",
        ) == 0
        _, split = load_bundle(out)
        assert split.train.size == 9


class TestTrainTeacher:
    def test_builtin_sgc(self, bundle, tmp_path, capsys):
        out = tmp_path / "t"
        code = run(
            "train-teacher", "--dataset", str(bundle),
            "--teacher", "builtin:sgc", "--seed", "0", "--out", str(out), *FAST,
        )
        assert code == 0
        assert (out / "soft_labels.tsv").is_file()
        assert (out / "report.tsv").is_file()
        assert "test acc" in capsys.readouterr().out

    def test_builtin_gcn(self, bundle, tmp_path):
        out = tmp_path / "t"
        code = run(
            "train-teacher", "--dataset", str(bundle),
            "--teacher", "builtin:gcn", "--seed", "0", "--out", str(out),
            "--teacher-hidden", "8", "--teacher-dropout", "0.2", *FAST,
        )
        assert code == 0


class TestDistill:
    def test_builtin_teacher_report_fields(self, bundle, tmp_path):
        out = tmp_path / "d"
        code = run(
            "distill", "--dataset", str(bundle), "--teacher", "builtin:sgc",
            "--variant", "cpf-ind", "--seed", "1", "--out", str(out), *FAST,
        )
        assert code == 0
        report = dict(
            line.split("\t", 1)
            for line in (out / "report.tsv").read_text().splitlines()
        )
        assert "teacher_acc" in report
        assert "student_acc.cpf-ind" in report
        assert (out / "student.tsv").is_file()
        assert (out / "soft_labels.tsv").is_file()

    def test_file_teacher(self, bundle, tmp_path):
        t_out = tmp_path / "t"
        assert run(
            "train-teacher", "--dataset", str(bundle),
            "--teacher", "builtin:sgc", "--seed", "0", "--out", str(t_out), *FAST,
        ) == 0
        out = tmp_path / "d"
        code = run(
            "distill", "--dataset", str(bundle),
            "--teacher", f"file:{t_out / 'soft_labels.tsv'}",
            "--variant", "ft", "--seed", "1", "--out", str(out), *FAST,
        )
        assert code == 0
        report = dict(
            line.split("\t", 1)
            for line in (out / "report.tsv").read_text().splitlines()
        )
        assert report["teacher_source"] == "builtin:sgc"

    def test_multi_seed_writes_summary(self, bundle, tmp_path):
        out = tmp_path / "multi"
        code = run(
            "distill", "--dataset", str(bundle), "--teacher", "builtin:sgc",
            "--variant", "cpf-tra", "--seeds", "0,1", "--out", str(out), *FAST,
        )
        assert code == 0
        assert (out / "seed0" / "report.tsv").is_file()
        assert (out / "seed1" / "report.tsv").is_file()
        summary = (out / "summary.tsv").read_text()
        assert "student_acc.mean" in summary

    def test_manifest_rerun_reproduces_outputs(self, bundle, tmp_path):
        out1 = tmp_path / "r1"
        assert run(
            "distill", "--dataset", str(bundle), "--teacher", "builtin:sgc",
            "--variant", "cpf-tra", "--seed", "2", "--out", str(out1), *FAST,
        ) == 0
        out2 = tmp_path / "r2"
        assert run(
            "distill", "--config", str(out1 / "manifest.tsv"), "--out", str(out2),
        ) == 0
        for name in ("student.tsv", "soft_labels.tsv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

        def numeric_lines(path):
            return [
                ln for ln in path.read_text().splitlines() if not ln.startswith("#")
            ]

        assert numeric_lines(out1 / "report.tsv") == numeric_lines(out2 / "report.tsv")

    def test_grid_flag(self, bundle, tmp_path):
        out = tmp_path / "g"
        code = run(
            "distill", "--dataset", str(bundle), "--teacher", "builtin:sgc",
            "--variant", "cpf-tra", "--seed", "0", "--out", str(out),
            "--grid", "layers=2,3;hidden=4;dropout=0.2;lr=0.05;wd=0.0005",
            "--teacher-max-epochs", "25", "--max-epochs", "8",
        )
        assert code == 0
        report = dict(
            line.split("\t", 1)
            for line in (out / "report.tsv").read_text().splitlines()
        )
        assert report["hyper.layers"] in {"2", "3"}


class TestSweeps:
    def test_sweep_k_row_count(self, bundle, tmp_path):
        out = tmp_path / "sk"
        code = run(
            "sweep-k", "--dataset", str(bundle), "--teacher", "builtin:sgc",
            "--variant", "cpf-tra", "--seed", "0", "--k", "2..4",
            "--out", str(out), *FAST,
        )
        assert code == 0
        lines = (out / "sweep.tsv").read_text().splitlines()
        assert lines[0].startswith("#k")
        assert len(lines) == 1 + 3

    def test_sweep_labels(self, bundle, tmp_path):
        out = tmp_path / "sl"
        code = run(
            "sweep-labels", "--dataset", str(bundle), "--teacher", "builtin:sgc",
            "--variant", "ft", "--seed", "0", "--ratios", "2,4",
            "--val-per-class", "2", "--out", str(out), *FAST,
        )
        assert code == 0
        lines = (out / "sweep.tsv").read_text().splitlines()
        assert len(lines) == 1 + 2


class TestExplainAndReport:
    def test_explain_outputs_cases(self, bundle, tmp_path):
        d_out = tmp_path / "d"
        assert run(
            "distill", "--dataset", str(bundle), "--teacher", "builtin:sgc",
            "--variant", "cpf-tra", "--seed", "0", "--out", str(d_out), *FAST,
        ) == 0
        out = tmp_path / "x"
        code = run(
            "explain", "--dataset", str(bundle),
            "--student", str(d_out / "student.tsv"),
            "--top-k", "3", "--out", str(out),
        )
        assert code == 0
        assert (out / "cases.json").is_file()
        assert (out / "cases.dot").is_file()

    def test_report_aggregates(self, bundle, tmp_path):
        outs = []
        for seed in (0, 1):
            out = tmp_path / f"d{seed}"
            assert run(
                "distill", "--dataset", str(bundle), "--teacher", "builtin:sgc",
                "--variant", "ft", "--seed", str(seed), "--out", str(out), *FAST,
            ) == 0
            outs.append(out / "report.tsv")
        agg = tmp_path / "agg"
        code = run("report", "--out", str(agg), *[str(p) for p in outs])
        assert code == 0
        text = (agg / "summary.tsv").read_text()
        assert "teacher_acc.mean" in text
        assert "teacher_acc.std" in text


class TestErrors:
    def test_missing_dataset_is_config_error(self, tmp_path, capsys):
        assert run("distill", "--dataset", str(tmp_path / "nope")) == 1
        assert "invalid configuration" in capsys.readouterr().err

    def test_unknown_variant(self, bundle, capsys):
        assert run(
            "distill", "--dataset", str(bundle), "--variant", "nope"
        ) == 1
        assert "variant" in capsys.readouterr().err

    def test_bad_flag_is_config_error(self, capsys):
        assert run("distill", "--no-such-flag") == 1

    def test_corrupt_soft_labels_is_runtime_error(self, bundle, tmp_path, capsys):
        bad = tmp_path / "bad.tsv"
        g, _ = load_bundle(bundle)
        rows = "\n".join("0.25\t0.25\t0.25" for _ in range(g.num_nodes))
        bad.write_text(f"#source=x\t#classes=3\n{rows}\n")
        code = run(
            "distill", "--dataset", str(bundle), "--teacher", f"file:{bad}",
            "--variant", "ft", "--seed", "0", "--out", str(tmp_path / "o"), *FAST,
        )
        assert code == 2
        assert "run failed" in capsys.readouterr().err

    def test_malformed_bundle_is_runtime_error(self, tmp_path, capsys):
        broken = tmp_path / "broken"
        broken.mkdir()
        (broken / "edges.tsv").write_text("0\t1\n")
        (broken / "features.tsv").write_text("1.0\nnope\n")
        (broken / "labels.tsv").write_text("0\n1\n")
        code = run(
            "distill", "--dataset", str(broken), "--teacher", "builtin:sgc",
            "--out", str(tmp_path / "o"),
        )
        assert code == 2

    def test_cpf_out_env_var(self, bundle, tmp_path, monkeypatch):
        monkeypatch.setenv("CPF_OUT", str(tmp_path / "envroot"))
        assert run(
            "train-teacher", "--dataset", str(bundle),
            "--teacher", "builtin:sgc", "--seed", "0", *FAST,
        ) == 0
        assert (tmp_path / "envroot" / "train-teacher" / "soft_labels.tsv").is_file()
