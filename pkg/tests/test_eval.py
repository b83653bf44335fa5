"""Metrics, sweeps, reports, and interpretability case studies."""

from __future__ import annotations

import json

import numpy as np
import pytest

from cpf.evaluate import (
    CaseStudy,
    ExperimentReport,
    accuracy,
    agreement_gap,
    build_report,
    k_sweep,
    label_ratio_sweep,
    neighbor_agreement,
    rank_interpretability,
    read_report,
    relative_improvement,
    write_cases,
    write_report,
    write_sweep,
)
from cpf.graph import SplitError
from cpf.student import StudentHyper, cpf_forward, init_student_params, train_student
from cpf.teacher import SoftLabelMatrix, TeacherConfig
from tests.conftest import (
    graph_from_edges,
    homophilous_dataset,
    random_graph,
    random_split,
    split_of,
)


def one_hot_teacher(g) -> SoftLabelMatrix:
    probs = np.zeros((g.num_nodes, g.num_classes))
    probs[np.arange(g.num_nodes), g.labels] = 1.0
    return SoftLabelMatrix(probs=probs, source="oracle")


class TestAccuracy:
    def test_perfect_predictions(self):
        rng = np.random.default_rng(0)
        g = random_graph(rng, 10, num_classes=3)
        split = random_split(rng, g)
        assert accuracy(one_hot_teacher(g), g, split, "test") == 1.0
        assert accuracy(one_hot_teacher(g), g, split, "val") == 1.0

    def test_uniform_rows_follow_tie_rule(self):
        # ties resolve to class 0, so accuracy equals class-0 frequency
        g = graph_from_edges(
            [(i, i + 1) for i in range(9)], 10,
            labels=np.array([0, 1] * 5), num_classes=2,
        )
        split = split_of(g, train=[0], val=[1])
        probs = np.full((10, 2), 0.5)
        test_labels = g.labels[split.test]
        expected = float(np.mean(test_labels == 0))
        assert accuracy(probs, g, split, "test") == expected

    def test_argmax_invariant_to_row_rescaling(self):
        rng = np.random.default_rng(1)
        g = random_graph(rng, 8, num_classes=3)
        split = random_split(rng, g)
        probs = rng.dirichlet(np.ones(3), size=8)
        scaled = probs * rng.uniform(0.5, 4.0, size=(8, 1))
        assert accuracy(probs, g, split, "test") == accuracy(scaled, g, split, "test")

    def test_empty_subset_rejected(self):
        g = graph_from_edges([(0, 1)], 2, labels=np.array([0, 1]))
        split = split_of(g, train=[0], val=[1])  # test empty
        with pytest.raises(ValueError):
            accuracy(one_hot_teacher(g), g, split, "test")


class TestReport:
    def test_relative_improvement_formula(self):
        assert relative_improvement(0.8576, 0.8244) == 0.8576 / 0.8244 - 1.0
        assert abs(relative_improvement(0.8576, 0.8244) - 0.040) < 0.001

    def test_build_report_uses_best_student(self):
        rng = np.random.default_rng(2)
        g = random_graph(rng, 12, num_classes=2)
        split = random_split(rng, g)
        teacher = one_hot_teacher(g)
        good = cpf_forward(
            g, split, init_student_params(g, "cpf-tra", StudentHyper(), rng)
        )
        report = build_report(g, split, teacher, {"cpf-tra": good}, seed=0)
        assert report.teacher_acc == 1.0
        assert report.relative_improvement == relative_improvement(
            report.student_accs["cpf-tra"], 1.0
        )

    def test_report_accuracy_bounds_enforced(self):
        with pytest.raises(ValueError):
            ExperimentReport(
                teacher_source="x", teacher_acc=1.2,
                student_accs={}, relative_improvement=0.0, seed=0,
            )

    def test_write_read_round_trip(self, tmp_path):
        report = ExperimentReport(
            teacher_source="builtin:gcn",
            teacher_acc=0.75,
            student_accs={"cpf-ind": 0.8, "plp": 0.6},
            relative_improvement=relative_improvement(0.8, 0.75),
            seed=3,
            hyperparams={"layers": 5},
            timings={"student": 1.25},
        )
        write_report(report, tmp_path / "report.tsv")
        back = read_report(tmp_path / "report.tsv")
        assert "timing.student" not in back  # timings are comment-only
        assert float(back["teacher_acc"]) == 0.75
        assert float(back["student_acc.cpf-ind"]) == 0.8
        assert back["hyper.layers"] == "5"
        assert float(back["relative_improvement"]) == pytest.approx(
            report.relative_improvement, abs=1e-9
        )

    def test_write_sweep_format(self, tmp_path):
        rows = [
            {"k": 5, "teacher_acc": 0.7, "student_acc": 0.75, "improvement": 0.75 / 0.7 - 1},
            {"k": 6, "teacher_acc": 0.7, "student_acc": 0.74, "improvement": 0.74 / 0.7 - 1},
        ]
        write_sweep(rows, tmp_path / "sweep.tsv", "k")
        lines = (tmp_path / "sweep.tsv").read_text().splitlines()
        assert lines[0] == "#k\tteacher_acc\tstudent_acc\timprovement"
        assert len(lines) == 3
        assert lines[1].split("\t")[0] == "5"


class TestSweeps:
    def test_k_sweep_feature_only_target_is_k_independent(self, separable_graph):
        # the feature-only student ignores propagation depth entirely
        split = split_of(separable_graph, train=[0, 1, 8, 9], val=[2, 10])
        res = k_sweep(
            separable_graph, split, one_hot_teacher(separable_graph),
            "ft", [2, 3, 4], StudentHyper(hidden_size=8, dropout=0.0, lr=0.05),
            seed=0, max_epochs=30,
        )
        assert res.gap == 0.0
        assert len(res.rows) == 3

    def test_k_sweep_rows_carry_improvement(self, separable_graph):
        split = split_of(separable_graph, train=[0, 1, 8, 9], val=[2, 10])
        res = k_sweep(
            separable_graph, split, one_hot_teacher(separable_graph),
            "cpf-tra", [1, 2], StudentHyper(hidden_size=4, dropout=0.0, lr=0.05),
            seed=0, max_epochs=20,
        )
        for row in res.rows:
            assert row["improvement"] == relative_improvement(
                row["student_acc"], row["teacher_acc"]
            )

    def test_label_ratio_sweep_deterministic(self):
        g = homophilous_dataset(0, num_classes=3, per_class=30, num_features=8)
        config = TeacherConfig(kind="sgc", lr=0.1, wd=0.001, max_epochs=30)
        hyper = StudentHyper(num_layers=2, hidden_size=4, dropout=0.2, lr=0.05)
        kw = dict(seed=4, val_per_class=3, max_epochs=15)
        a = label_ratio_sweep(g, config, [2, 5], "cpf-tra", hyper, **kw)
        b = label_ratio_sweep(g, config, [2, 5], "cpf-tra", hyper, **kw)
        assert a == b
        assert [row["labeled_per_class"] for row in a] == [2, 5]

    def test_label_ratio_sweep_refuses_oversized_request(self):
        g = homophilous_dataset(1, num_classes=3, per_class=20, num_features=8)
        config = TeacherConfig(kind="sgc", max_epochs=5)
        with pytest.raises(SplitError):
            label_ratio_sweep(
                g, config, [25], "cpf-tra", StudentHyper(), seed=0, val_per_class=3
            )


class TestInterpretability:
    def test_star_center_outranks_conflicting_leaf(self):
        # center 0 with 4 leaves; predictions agree with center except leaf 4
        g = graph_from_edges(
            [(0, 1), (0, 2), (0, 3), (0, 4)], 5,
            labels=np.array([0, 0, 0, 0, 1]), num_classes=2,
        )
        predicted = np.array([0, 0, 0, 0, 1])
        center = neighbor_agreement(g, predicted, 0)
        conflict = neighbor_agreement(g, predicted, 4)
        assert center == 0.75
        assert conflict == 0.0
        assert center > conflict

    def test_isolated_node_agreement_zero(self):
        g = graph_from_edges([(0, 1)], 3, labels=np.array([0, 0, 1]))
        assert neighbor_agreement(g, np.array([0, 0, 1]), 2) == 0.0

    def test_top_k_clipped_to_num_nodes(self):
        rng = np.random.default_rng(5)
        g = random_graph(rng, 4, num_classes=2)
        split = random_split(rng, g)
        params = init_student_params(g, "cpf-tra", StudentHyper(), rng)
        params.balance_logit = rng.normal(size=(4, 1))
        pred = cpf_forward(g, split, params)
        cases = rank_interpretability(params, pred, g, top_k=99)
        balance_cases = [c for c in cases if c.kind == "balance"]
        assert len(balance_cases) == 2 * g.num_nodes

    def test_ego_edges_are_induced_subgraph(self):
        rng = np.random.default_rng(6)
        g = random_graph(rng, 12, edge_prob=0.35, num_classes=2)
        split = random_split(rng, g)
        params = init_student_params(g, "cpf-tra", StudentHyper(), rng)
        params.balance_logit = rng.normal(size=(12, 1))
        params.confidence = rng.normal(size=(12, 1))
        pred = cpf_forward(g, split, params)
        for case in rank_interpretability(params, pred, g, top_k=3):
            assert case.node in case.ego_nodes
            for u in g.neighbors(case.node):
                assert int(u) in case.ego_nodes
            for u, v in case.ego_edges:
                assert v in g.neighbors(u)

    def test_rankings_pick_extremes(self):
        rng = np.random.default_rng(7)
        g = random_graph(rng, 10, num_classes=2)
        split = random_split(rng, g)
        params = init_student_params(g, "cpf-tra", StudentHyper(), rng)
        params.balance_logit = np.arange(10, dtype=float).reshape(10, 1)
        pred = cpf_forward(g, split, params)
        cases = rank_interpretability(params, pred, g, top_k=2)
        tops = [c.node for c in cases if c.kind == "balance" and c.rank == "top"]
        bots = [c.node for c in cases if c.kind == "balance" and c.rank == "bottom"]
        assert tops == [9, 8]
        assert bots == [0, 1]

    def test_fixed_balance_variant_has_no_balance_cases(self):
        rng = np.random.default_rng(8)
        g = random_graph(rng, 6, num_classes=2)
        split = random_split(rng, g)
        params = init_student_params(g, "plp", StudentHyper(), rng)
        pred = cpf_forward(g, split, params)
        cases = rank_interpretability(params, pred, g, top_k=2)
        assert all(c.kind == "confidence" for c in cases)

    def test_agreement_gap_statistic(self):
        cases = [
            CaseStudy(0, "balance", "top", 1.0, [0], [], {0: 0}, 0.9),
            CaseStudy(1, "balance", "top", 0.9, [1], [], {1: 0}, 0.7),
            CaseStudy(2, "balance", "bottom", 0.1, [2], [], {2: 0}, 0.2),
            CaseStudy(3, "balance", "bottom", 0.0, [3], [], {3: 0}, 0.4),
        ]
        assert abs(agreement_gap(cases, "balance") - (0.8 - 0.3)) < 1e-12

    def test_write_cases_json_and_dot(self, tmp_path):
        rng = np.random.default_rng(9)
        g = random_graph(rng, 8, edge_prob=0.4, num_classes=3)
        split = random_split(rng, g)
        params = init_student_params(g, "cpf-tra", StudentHyper(), rng)
        params.balance_logit = rng.normal(size=(8, 1))
        pred = cpf_forward(g, split, params)
        cases = rank_interpretability(params, pred, g, top_k=2)
        write_cases(cases, tmp_path / "cases.json", tmp_path / "cases.dot")

        payload = json.loads((tmp_path / "cases.json").read_text())
        assert len(payload) == len(cases)
        assert {"node", "kind", "rank", "value", "ego_nodes", "ego_edges",
                "predicted", "neighbor_agreement"} <= set(payload[0])

        dot = (tmp_path / "cases.dot").read_text()
        assert dot.count("graph case_") == len(cases)
        assert "style=filled" in dot
        assert "--" in dot
