"""Ingestion: acceptance constraints, reject reasons, partition property."""

import json

import pytest

from cxrmine.ingest import IngestError, corpus_stats, load_reports


def make_record(**overrides):
    record = {
        "study_id": "S1",
        "patient_id": "P1",
        "age_years": 40,
        "report_text": "The heart is enlarged.",
        "has_pa": True,
        "has_lateral": True,
    }
    record.update(overrides)
    return record


def write_reports(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write((rec if isinstance(rec, str) else json.dumps(rec)) + "\n")


def test_valid_record_accepted(tmp_path):
    path = tmp_path / "reports.jsonl"
    write_reports(path, [make_record()])
    corpus = load_reports(path)
    assert len(corpus.studies) == 1
    assert corpus.studies[0].study_id == "S1"
    assert not corpus.rejected


def test_under_age_rejected(tmp_path):
    path = tmp_path / "reports.jsonl"
    write_reports(path, [make_record(age_years=17)])
    corpus = load_reports(path)
    assert not corpus.studies
    assert corpus.rejected[0].reason == "under_age"


def test_missing_pa_rejected_even_with_lateral(tmp_path):
    path = tmp_path / "reports.jsonl"
    write_reports(path, [make_record(has_pa=False, has_lateral=True)])
    corpus = load_reports(path)
    assert corpus.rejected[0].reason == "missing_pa"


def test_empty_report_rejected(tmp_path):
    path = tmp_path / "reports.jsonl"
    write_reports(path, [make_record(report_text="   \n  ")])
    corpus = load_reports(path)
    assert corpus.rejected[0].reason == "empty_report"


def test_missing_lateral_defaults_to_false(tmp_path):
    path = tmp_path / "reports.jsonl"
    record = make_record()
    del record["has_lateral"]
    write_reports(path, [record])
    corpus = load_reports(path)
    assert corpus.studies[0].has_lateral is False


def test_duplicate_id_keeps_first(tmp_path):
    path = tmp_path / "reports.jsonl"
    write_reports(path, [make_record(age_years=30), make_record(age_years=50)])
    corpus = load_reports(path)
    assert len(corpus.studies) == 1
    assert corpus.studies[0].age_years == 30
    assert corpus.rejected[0].reason == "duplicate_id"


def test_malformed_line_lenient_vs_strict(tmp_path):
    path = tmp_path / "reports.jsonl"
    write_reports(path, ["{not json", make_record()])
    corpus = load_reports(path, strict=False)
    assert len(corpus.studies) == 1
    assert corpus.rejected[0].reason == "malformed"
    with pytest.raises(IngestError):
        load_reports(path, strict=True)


def test_missing_required_field_is_malformed(tmp_path):
    path = tmp_path / "reports.jsonl"
    record = make_record()
    del record["age_years"]
    write_reports(path, [record])
    corpus = load_reports(path)
    assert corpus.rejected[0].reason == "malformed"


def test_partition_property(tmp_path):
    path = tmp_path / "reports.jsonl"
    records = [
        make_record(study_id=f"S{i}", age_years=15 + i, has_pa=(i % 3 != 0))
        for i in range(20)
    ]
    records.append("not json at all")
    write_reports(path, records)
    corpus = load_reports(path)
    assert len(corpus.studies) + len(corpus.rejected) == 21
    accepted_ids = {s.study_id for s in corpus.studies}
    assert len(accepted_ids) == len(corpus.studies)


def test_load_is_idempotent(tmp_path):
    path = tmp_path / "reports.jsonl"
    write_reports(path, [make_record(study_id=f"S{i}") for i in range(5)] + ["oops"])
    assert load_reports(path) == load_reports(path)


def test_missing_file_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_reports(tmp_path / "nope.jsonl")


def test_corpus_stats_empty():
    from cxrmine.ingest import ReportCorpus

    stats = corpus_stats(ReportCorpus(studies=()))
    assert stats.n_studies == 0
    assert stats.lateral_fraction == 0.0


def test_corpus_stats_lateral_fraction(tmp_path):
    path = tmp_path / "reports.jsonl"
    write_reports(
        path,
        [make_record(study_id=f"S{i}", has_lateral=(i < 85)) for i in range(100)],
    )
    stats = corpus_stats(load_reports(path))
    assert stats.n_studies == 100
    assert stats.lateral_fraction == pytest.approx(0.85)


def test_corpus_stats_all_lateral(tmp_path):
    path = tmp_path / "reports.jsonl"
    write_reports(path, [make_record(study_id=f"S{i}", has_lateral=True) for i in range(4)])
    assert corpus_stats(load_reports(path)).lateral_fraction == 1.0
