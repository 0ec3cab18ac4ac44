"""CLI pipeline runs: artifacts, reproducibility, exit codes."""

import csv
import json

import numpy as np
import pytest

from cxrmine.classify import load_ontology
from cxrmine.cli import RunConfig, load_config, main, run
from cxrmine.labels import read_labels_csv
from cxrmine.stats import write_predictions_csv
from cxrmine.synth import generate_corpus, make_eval_fixture


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    bundle = generate_corpus(n_reports=400, seed=3, tag_fraction=0.85, reject_rate=0.05)
    bundle.write_reports(root / "reports.jsonl")
    bundle.write_tags(root / "tags.jsonl")
    return root, bundle


def base_config(data_root, out_dir, **overrides):
    config = RunConfig(
        reports=str(data_root / "reports.jsonl"),
        tag_store=str(data_root / "tags.jsonl"),
        out_dir=str(out_dir),
        seed=11,
        validation_min_pos=2,
        test_base=30,
        test_min_pos=2,
        bootstrap_n=300,
    )
    for key, value in overrides.items():
        setattr(config, key, value)
    return config


def read_csv_rows(path):
    with open(path, encoding="utf-8") as fh:
        return list(csv.reader(line for line in fh if not line.startswith("#")))


class TestSubcommands:
    def test_ingest_writes_stats_and_rejects(self, data_dir, tmp_path):
        root, bundle = data_dir
        artifacts = run("ingest", base_config(root, tmp_path / "out"))
        stats = json.loads((tmp_path / "out" / "corpus_stats.json").read_text())
        assert stats["n_rejected"] == bundle.n_rejects
        assert stats["n_studies"] == len(bundle.truth)
        assert 0.0 <= stats["lateral_fraction"] <= 1.0
        assert any(p.name == "rejects.csv" for p in artifacts)

    def test_pool_and_coverage(self, data_dir, tmp_path):
        root, _ = data_dir
        run("pool", base_config(root, tmp_path / "out"))
        rows = read_csv_rows(tmp_path / "out" / "pool.csv")
        assert rows[0] == ["canonical_text", "report_count", "occurrence_count", "rank"]
        assert int(rows[1][1]) >= int(rows[2][1])  # rank order

        run("coverage", base_config(root, tmp_path / "out"))
        cov = read_csv_rows(tmp_path / "out" / "coverage.csv")
        values = [int(r[1]) for r in cov[1:]]
        assert values == sorted(values)

    def test_coverage_on_empty_corpus(self, tmp_path):
        reports = tmp_path / "empty.jsonl"
        reports.write_text("")
        config = RunConfig(reports=str(reports), out_dir=str(tmp_path / "out"))
        run("coverage", config)
        rows = read_csv_rows(tmp_path / "out" / "coverage.csv")
        assert rows[1:] == [["0", "0"]]

    def test_build_labels_any_hit_superset(self, data_dir, tmp_path):
        root, _ = data_dir
        ontology = load_ontology()
        run("build-labels", base_config(root, tmp_path / "fc", policy="fully_covered"))
        run("build-labels", base_config(root, tmp_path / "ah", policy="any_hit"))
        fully = read_labels_csv(tmp_path / "fc" / "labels_fully_covered.csv", ontology)
        any_hit = read_labels_csv(tmp_path / "ah" / "labels_any_hit.csv", ontology)
        fully_ids = {s.study_id for s in fully}
        any_ids = {s.study_id for s in any_hit}
        assert fully_ids < any_ids
        # the shared rows are identical (policy only adds studies)
        any_by_id = {s.study_id: s for s in any_hit}
        for s in fully:
            assert any_by_id[s.study_id] == s

    def test_eval_identity_predictions(self, data_dir, tmp_path):
        root, _ = data_dir
        ontology = load_ontology()
        out = tmp_path / "out"
        config = base_config(root, out, policy="any_hit")
        run("build-labels", config)
        labeled = read_labels_csv(out / "labels_any_hit.csv", ontology)

        # predictions exactly equal to the text labels
        predictions = {s.study_id: np.asarray(s.labels, dtype=float) for s in labeled}
        write_predictions_csv(predictions, ontology, root / "predictions.csv")

        rows, _ = make_eval_fixture(labeled, ontology, ["cardiomegaly"], seed=2,
                                    flip_rate=0.2, set_size=30)
        with open(root / "ratings.jsonl", "w") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")

        config.predictions = str(root / "predictions.csv")
        config.ratings = str(root / "ratings.jsonl")
        config.labels = str(out / "labels_any_hit.csv")
        run("eval", config)

        report = read_csv_rows(out / "eval_report.csv")
        header, row = report[0], report[1]
        assert row[header.index("finding")] == "cardiomegaly"
        # identity predictions: model AAR equals the report-vs-raters agreement,
        # because report_opinion is the text label too
        assert float(row[header.index("model_aar")]) == pytest.approx(
            float(row[header.index("report_agreement")]))

    def test_noise_report(self, data_dir, tmp_path):
        root, _ = data_dir
        ontology = load_ontology()
        out = tmp_path / "out"
        config = base_config(root, out, policy="any_hit")
        run("build-labels", config)
        labeled = read_labels_csv(out / "labels_any_hit.csv", ontology)
        rows, _ = make_eval_fixture(labeled, ontology, ["cardiomegaly", "tube"], seed=4,
                                    set_size=30)
        with open(root / "ratings2.jsonl", "w") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
        config.ratings = str(root / "ratings2.jsonl")
        run("noise", config)
        report = read_csv_rows(out / "noise_report.csv")
        header = report[0]
        for row in report[1:]:
            fc = row[header.index("pct_pos_included_fully_covered")]
            ah = row[header.index("pct_pos_included_any_hit")]
            if fc and ah:
                assert float(ah) >= float(fc)


class TestReproducibility:
    def test_rerun_byte_identical(self, data_dir, tmp_path):
        root, _ = data_dir
        config_a = base_config(root, tmp_path / "a", policy="any_hit")
        config_b = base_config(root, tmp_path / "b", policy="any_hit")
        run("build-labels", config_a)
        run("build-labels", config_b)
        for name in ("labels_any_hit.csv", "validation_subset_any_hit.csv",
                     "test_subset_any_hit.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_artifacts_name_config_digest_and_seed(self, data_dir, tmp_path):
        root, _ = data_dir
        config = base_config(root, tmp_path / "out")
        run("pool", config)
        first = (tmp_path / "out" / "pool.csv").read_text().splitlines()[0]
        assert f"seed={config.seed}" in first
        assert f"config={config.digest()}" in first

    def test_manifest_records_inputs_and_seed(self, data_dir, tmp_path):
        root, _ = data_dir
        config = base_config(root, tmp_path / "out")
        run("ingest", config)
        manifest = json.loads((tmp_path / "out" / "manifest_ingest.json").read_text())
        assert manifest["seed"] == config.seed
        assert manifest["config_digest"] == config.digest()
        assert "reports" in manifest["inputs"]
        assert len(manifest["inputs"]["reports"]["sha256"]) == 64


class TestConfigFile:
    def test_load_and_override(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# pipeline config\nseed = 7\npolicy = fully_covered\n"
            "ratios = 70,20,10\nout_dir = somewhere\n"
        )
        config = load_config(path)
        assert config.seed == 7
        assert config.policy == "fully_covered"
        assert config.ratios == (70, 20, 10)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("bogus = 1\n")
        with pytest.raises(ValueError):
            load_config(path)


class TestExitCodes:
    def test_missing_input_is_2(self, tmp_path):
        code = main(["ingest", "--reports", str(tmp_path / "nope.jsonl"),
                     "--out", str(tmp_path / "out")])
        assert code == 2

    def test_malformed_rules_is_3(self, data_dir, tmp_path):
        root, _ = data_dir
        bad_rules = tmp_path / "rules.tsv"
        bad_rules.write_text("broken\t(unclosed\tnegative\n")
        code = main(["coverage", "--reports", str(root / "reports.jsonl"),
                     "--rules", str(bad_rules), "--out", str(tmp_path / "out")])
        assert code == 3

    def test_strict_malformed_reports_is_3(self, tmp_path):
        reports = tmp_path / "bad.jsonl"
        reports.write_text("{not json\n")
        code = main(["ingest", "--reports", str(reports), "--strict",
                     "--out", str(tmp_path / "out")])
        assert code == 3

    def test_happy_path_is_0(self, data_dir, tmp_path):
        root, _ = data_dir
        code = main(["ingest", "--reports", str(root / "reports.jsonl"),
                     "--out", str(tmp_path / "out")])
        assert code == 0

    def test_env_var_data_dir(self, data_dir, tmp_path, monkeypatch):
        root, _ = data_dir
        monkeypatch.setenv("CXRMINE_DATA_DIR", str(root))
        code = main(["ingest", "--reports", "reports.jsonl", "--out", str(tmp_path / "out")])
        assert code == 0
