"""Build labeled training sets from report analyses.

Two admission policies: fully_covered keeps a study only when every
potentially positive sentence was resolved (tagged or auto-filtered);
any_hit additionally keeps studies with at least one recognized positive
finding even if other candidate sentences remain untagged, trading label
noise for volume. Excluding-category studies are dropped before either
policy applies. The fully_covered set is always a subset of the any_hit
set, and so are its per-finding positives.

Partitions are patient-level: a stable 64-bit hash of (seed, patient_id)
drops every study of a patient into the same train/validation/test
bucket, reproducibly across processes and machines.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .classify import Ontology, ReportAnalysis
from .fileio import atomic_write, stable_hash64

FULLY_COVERED = "fully_covered"
ANY_HIT = "any_hit"
POLICIES = (FULLY_COVERED, ANY_HIT)

COVERAGE_FULL = "fully_covered"
COVERAGE_ANY_HIT_ONLY = "any_hit_only"

PARTITIONS = ("train", "validation", "test")


@dataclass(frozen=True)
class LabeledStudy:
    study_id: str
    patient_id: str
    labels: tuple[int, ...]
    coverage: str
    partition: str = ""

    def positive_ids(self) -> list[int]:
        return [i + 1 for i, bit in enumerate(self.labels) if bit]


def label_vector(positive_findings: frozenset[str], ontology: Ontology) -> tuple[int, ...]:
    """Binary vector indexed by finding id; unmentioned findings stay 0."""
    bits = [0] * len(ontology)
    for name in positive_findings:
        bits[ontology.by_name[name].id - 1] = 1
    return tuple(bits)


def build_label_sets(analyses: list[ReportAnalysis], patient_of: dict[str, str],
                     ontology: Ontology, policy: str) -> list[LabeledStudy]:
    """Turn report analyses into labeled studies under one admission policy.

    Excluded studies are dropped unconditionally. fully_covered admits
    studies with no untagged candidate sentence (normal all-negative
    studies included); any_hit also admits studies with >= 1 positive
    finding despite untagged candidates. Unknown study_ids (not in
    patient_of) raise KeyError.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    out = []
    for analysis in analyses:
        if analysis.excluded:
            continue
        fully = not analysis.has_unknown_candidate
        if not fully and not (policy == ANY_HIT and analysis.positive_findings):
            continue
        out.append(
            LabeledStudy(
                study_id=analysis.study_id,
                patient_id=patient_of[analysis.study_id],
                labels=label_vector(analysis.positive_findings, ontology),
                coverage=COVERAGE_FULL if fully else COVERAGE_ANY_HIT_ONLY,
            )
        )
    return out


def partition_by_patient(studies: list[LabeledStudy], ratios: tuple[int, int, int] = (80, 10, 10),
                         seed: int = 0) -> list[LabeledStudy]:
    """Assign train/validation/test partitions at patient granularity.

    bucket = stable_hash64(seed, patient_id) mod 100 mapped through the
    ratios, so all studies of one patient land together and the split
    never drifts between runs or hosts.
    """
    if sum(ratios) != 100:
        raise ValueError(f"partition ratios must sum to 100, got {ratios}")
    train_end = ratios[0]
    val_end = ratios[0] + ratios[1]
    out = []
    for study in studies:
        bucket = stable_hash64(seed, study.patient_id) % 100
        if bucket < train_end:
            part = "train"
        elif bucket < val_end:
            part = "validation"
        else:
            part = "test"
        out.append(replace(study, partition=part))
    return out


def select_validation_subset(studies: list[LabeledStudy], ontology: Ontology,
                             min_pos: int = 25) -> tuple[list[LabeledStudy], dict[str, int]]:
    """Greedy subset with at least min_pos positives per finding.

    Findings are processed rarest first (availability ascending, id
    tiebreak); studies are scanned in input order, so the result is
    deterministic. Findings that cannot reach the quota are returned in
    the shortfall map with the count actually available.
    """
    k = len(ontology)
    available = [0] * k
    for s in studies:
        for i, bit in enumerate(s.labels):
            available[i] += bit
    order = sorted(range(k), key=lambda i: (available[i], i))

    selected_idx: list[int] = []
    selected_set: set[int] = set()
    counts = [0] * k
    shortfalls: dict[str, int] = {}
    for fi in order:
        if available[fi] < min_pos:
            shortfalls[ontology.findings[fi].name] = available[fi]
        for si, s in enumerate(studies):
            if counts[fi] >= min_pos:
                break
            if s.labels[fi] and si not in selected_set:
                selected_set.add(si)
                selected_idx.append(si)
                for i, bit in enumerate(s.labels):
                    counts[i] += bit
    subset = [studies[si] for si in sorted(selected_idx)]
    return subset, shortfalls


def build_broad_test_set(studies: list[LabeledStudy], ontology: Ontology, base: int = 5000,
                         min_pos: int = 100, seed: int = 0) -> tuple[list[LabeledStudy], dict[str, int]]:
    """Random base sample topped up until every finding has min_pos positives.

    A seeded uniform sample of `base` studies is drawn first; then, finding
    by finding, random positives are added from the remainder until the
    quota is met or the partition has no more positives to give (recorded
    as a shortfall). Output preserves input order.
    """
    rng = np.random.default_rng(seed)
    n = len(studies)
    k = len(ontology)
    take = min(base, n)
    selected = set(rng.choice(n, size=take, replace=False).tolist()) if take else set()

    counts = [0] * k
    for si in selected:
        for i, bit in enumerate(studies[si].labels):
            counts[i] += bit

    shortfalls: dict[str, int] = {}
    for fi in range(k):
        if counts[fi] >= min_pos:
            continue
        candidates = [si for si in range(n) if si not in selected and studies[si].labels[fi]]
        need = min_pos - counts[fi]
        rng.shuffle(candidates)
        for si in candidates[:need]:
            selected.add(si)
            for i, bit in enumerate(studies[si].labels):
                counts[i] += bit
        if counts[fi] < min_pos:
            shortfalls[ontology.findings[fi].name] = counts[fi]
    subset = [studies[si] for si in sorted(selected)]
    return subset, shortfalls


@dataclass(frozen=True)
class NoiseRow:
    """Per-finding label noise, measured against the report-as-expert opinion.

    pct_included: of report-positive evaluation studies, how many made it
    into the policy's labeled set. pct_correct: of those included, how
    many carry a positive training label for the finding. None means the
    denominator was empty.
    """

    finding: str
    included_fully_covered: float | None
    included_any_hit: float | None
    correct_fully_covered: float | None
    correct_any_hit: float | None


def estimate_label_noise(matrices, labeled_by_policy: dict[str, dict[str, LabeledStudy]],
                         ontology: Ontology) -> list[NoiseRow]:
    """Cross-reference report opinions in evaluation sets with training labels.

    `matrices` are RatingMatrix objects carrying report_opinion;
    `labeled_by_policy` maps each policy name to its labeled studies by
    study_id.
    """
    rows = []
    for matrix in matrices:
        if matrix.report_opinion is None:
            raise ValueError(f"rating matrix for {matrix.finding!r} has no report opinion")
        fi = ontology.by_name[matrix.finding].id - 1
        report_pos = [sid for sid, op in zip(matrix.studies, matrix.report_opinion) if op]
        values: dict[str, tuple[float | None, float | None]] = {}
        for policy in POLICIES:
            labeled = labeled_by_policy[policy]
            included = [sid for sid in report_pos if sid in labeled]
            pct_included = 100.0 * len(included) / len(report_pos) if report_pos else None
            if included:
                correct = sum(1 for sid in included if labeled[sid].labels[fi])
                pct_correct = 100.0 * correct / len(included)
            else:
                pct_correct = None
            values[policy] = (pct_included, pct_correct)
        rows.append(
            NoiseRow(
                finding=matrix.finding,
                included_fully_covered=values[FULLY_COVERED][0],
                included_any_hit=values[ANY_HIT][0],
                correct_fully_covered=values[FULLY_COVERED][1],
                correct_any_hit=values[ANY_HIT][1],
            )
        )
    return rows


# ---------------------------------------------------------------------------
# CSV artifacts

def write_labels_csv(studies: list[LabeledStudy], ontology: Ontology, path: str | Path,
                     header_comment: str | None = None) -> None:
    with atomic_write(path) as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["study_id", "patient_id", "partition", "coverage"] + ontology.names())
        for s in studies:
            writer.writerow([s.study_id, s.patient_id, s.partition, s.coverage, *s.labels])


def read_labels_csv(path: str | Path, ontology: Ontology) -> list[LabeledStudy]:
    studies = []
    with open(path, encoding="utf-8") as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(rows, None)
        expected = ["study_id", "patient_id", "partition", "coverage"] + ontology.names()
        if header != expected:
            raise ValueError(f"{path}: label CSV header does not match the ontology")
        for row in rows:
            studies.append(
                LabeledStudy(
                    study_id=row[0],
                    patient_id=row[1],
                    partition=row[2],
                    coverage=row[3],
                    labels=tuple(int(v) for v in row[4:]),
                )
            )
    return studies


def _fmt_pct(value: float | None) -> str:
    return "" if value is None else f"{value:.1f}"


def write_noise_csv(rows: list[NoiseRow], path: str | Path,
                    header_comment: str | None = None) -> None:
    with atomic_write(path) as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["finding", "pct_pos_included_fully_covered", "pct_pos_included_any_hit",
             "pct_pos_correct_fully_covered", "pct_pos_correct_any_hit"]
        )
        for row in rows:
            writer.writerow(
                [row.finding, _fmt_pct(row.included_fully_covered), _fmt_pct(row.included_any_hit),
                 _fmt_pct(row.correct_fully_covered), _fmt_pct(row.correct_any_hit)]
            )
