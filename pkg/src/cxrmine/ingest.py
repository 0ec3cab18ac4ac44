"""Load and validate raw chest X-ray report records into a study corpus.

Input is a UTF-8 file with one JSON object per line:

    {"study_id": ..., "patient_id": ..., "age_years": ..., "report_text": ...,
     "has_pa": ..., "has_lateral": ...}

Acceptance requires a PA view, age 18 or above, and non-empty report text.
Everything else is rejected with a machine-readable reason. When several
reasons apply, the first in this precedence order wins:
malformed > duplicate_id > empty_report > missing_pa > under_age.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

MIN_AGE_YEARS = 18

REQUIRED_FIELDS = ("study_id", "patient_id", "age_years", "report_text", "has_pa")


class IngestError(Exception):
    """Fatal ingestion problem: unreadable file, or a bad line in strict mode."""


@dataclass(frozen=True)
class StudyRecord:
    """One CXR examination with its free-text report."""

    study_id: str
    patient_id: str
    age_years: int
    report_text: str
    has_pa: bool
    has_lateral: bool = False


@dataclass(frozen=True)
class RejectedRecord:
    raw: str
    reason: str
    line_number: int


@dataclass(frozen=True)
class ReportCorpus:
    """Immutable result of loading a reports file.

    Every input line ends up in exactly one of `studies` or `rejected`.
    """

    studies: tuple[StudyRecord, ...]
    rejected: tuple[RejectedRecord, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.studies)


def _validate_record(obj: dict) -> StudyRecord | str:
    """Return a StudyRecord, or a rejection reason string."""
    for name in REQUIRED_FIELDS:
        if name not in obj:
            return "malformed"
    study_id = obj["study_id"]
    patient_id = obj["patient_id"]
    age = obj["age_years"]
    text = obj["report_text"]
    has_pa = obj["has_pa"]
    has_lateral = obj.get("has_lateral", False)
    if not isinstance(study_id, str) or not isinstance(patient_id, str):
        return "malformed"
    if not isinstance(age, int) or isinstance(age, bool) or age < 0:
        return "malformed"
    if not isinstance(text, str):
        return "malformed"
    if not isinstance(has_pa, bool) or not isinstance(has_lateral, bool):
        return "malformed"
    if not text.strip():
        return "empty_report"
    if not has_pa:
        return "missing_pa"
    if age < MIN_AGE_YEARS:
        return "under_age"
    return StudyRecord(
        study_id=study_id,
        patient_id=patient_id,
        age_years=age,
        report_text=text,
        has_pa=has_pa,
        has_lateral=has_lateral,
    )


def load_reports(path: str | Path, strict: bool = False) -> ReportCorpus:
    """Load a line-delimited JSON reports file into a ReportCorpus.

    Lenient mode (default) turns malformed lines into rejects and keeps
    going; strict mode raises IngestError on the first bad line. An
    unreadable file is always fatal. Duplicate study_ids keep the first
    occurrence; later ones are rejected with reason duplicate_id.
    """
    path = Path(path)
    try:
        raw_lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise IngestError(f"cannot read reports file {path}: {exc}") from exc

    studies: list[StudyRecord] = []
    rejected: list[RejectedRecord] = []
    seen_ids: set[str] = set()

    for lineno, line in enumerate(raw_lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise ValueError("record is not a JSON object")
        except ValueError as exc:
            if strict:
                raise IngestError(f"{path}:{lineno}: malformed record: {exc}") from exc
            rejected.append(RejectedRecord(raw=line, reason="malformed", line_number=lineno))
            continue

        result = _validate_record(obj)
        if isinstance(result, str):
            if result == "malformed" and strict:
                raise IngestError(f"{path}:{lineno}: malformed record")
            rejected.append(RejectedRecord(raw=line, reason=result, line_number=lineno))
            continue
        if result.study_id in seen_ids:
            rejected.append(RejectedRecord(raw=line, reason="duplicate_id", line_number=lineno))
            continue
        seen_ids.add(result.study_id)
        studies.append(result)

    return ReportCorpus(studies=tuple(studies), rejected=tuple(rejected))


@dataclass(frozen=True)
class CorpusStats:
    n_studies: int
    n_rejected: int
    lateral_fraction: float
    rejects_by_reason: tuple[tuple[str, int], ...]


def corpus_stats(corpus: ReportCorpus) -> CorpusStats:
    """Summarize a corpus: totals and the fraction of studies with a lateral view."""
    n = len(corpus.studies)
    with_lateral = sum(1 for s in corpus.studies if s.has_lateral)
    reasons: dict[str, int] = {}
    for rej in corpus.rejected:
        reasons[rej.reason] = reasons.get(rej.reason, 0) + 1
    return CorpusStats(
        n_studies=n,
        n_rejected=len(corpus.rejected),
        lateral_fraction=(with_lateral / n) if n else 0.0,
        rejects_by_reason=tuple(sorted(reasons.items())),
    )
