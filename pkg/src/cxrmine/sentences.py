"""Sentence segmentation, canonicalization, and the frequency-ranked pool.

Reports are split at '.', '?', ';' and newline runs, except inside
protected spans (decimal numbers and configured abbreviations). Joining
the segments and dropping whitespace always reproduces the input's
non-whitespace characters in order, so no text is ever lost or reordered.

Canonical sentences are lowercased, whitespace-collapsed, and stripped of
trailing terminal punctuation; a trailing '?' is kept because hedged
sentences like "infiltrate?" carry their own meaning. The unique-sentence
pool is built over canonical forms, so its size is a post-normalization
count.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path

from .fileio import atomic_write

BOUNDARY_CHARS = ".?;"

DEFAULT_ABBREVIATIONS_PATH = Path(__file__).parent / "data" / "abbreviations.txt"


def load_abbreviations(path: str | Path) -> tuple[str, ...]:
    """Read the splitter's protected-abbreviation list (one per line, '#' comments).

    Entries are written without the trailing dot ("e.g" protects "e.g.").
    """
    entries = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            entries.append(line.lower())
    return tuple(entries)


DEFAULT_ABBREVIATIONS = load_abbreviations(DEFAULT_ABBREVIATIONS_PATH)


@dataclass(frozen=True)
class Sentence:
    raw_text: str
    study_id: str = ""
    index_in_report: int = 0


def _protected_dot_positions(text: str, abbreviations: tuple[str, ...]) -> set[int]:
    """Indices of '.' characters that must not act as sentence boundaries."""
    protected: set[int] = set()
    for m in re.finditer(r"(?<=\d)\.(?=\d)", text):
        protected.add(m.start())
    if abbreviations:
        alts = "|".join(re.escape(a) for a in sorted(abbreviations, key=len, reverse=True))
        pattern = re.compile(r"(?<![a-z0-9])(?:%s)\." % alts, re.IGNORECASE)
        for m in pattern.finditer(text):
            for i in range(m.start(), m.end()):
                if text[i] == ".":
                    protected.add(i)
    return protected


def segment(report_text: str, study_id: str = "",
            abbreviations: tuple[str, ...] = DEFAULT_ABBREVIATIONS) -> list[Sentence]:
    """Split a report into sentences.

    Boundaries fall after '.', '?' and ';' (unless the dot sits inside a
    decimal number or a protected abbreviation) and at newline runs.
    Whitespace-only segments are dropped; surviving sentences are indexed
    consecutively from 0.
    """
    if not report_text:
        return []
    protected = _protected_dot_positions(report_text, abbreviations)

    pieces: list[str] = []
    start = 0
    for i, ch in enumerate(report_text):
        if ch in BOUNDARY_CHARS and (ch != "." or i not in protected):
            pieces.append(report_text[start : i + 1])
            start = i + 1
        elif ch == "\n":
            pieces.append(report_text[start:i])
            start = i + 1
    pieces.append(report_text[start:])

    sentences = []
    for piece in pieces:
        trimmed = piece.strip()
        if trimmed:
            sentences.append(
                Sentence(raw_text=trimmed, study_id=study_id, index_in_report=len(sentences))
            )
    return sentences


_WS_RUN = re.compile(r"\s+")


def normalize(raw_text: str) -> str | None:
    """Canonicalize a sentence; returns None for degenerate (empty) results.

    Casefold (so "ß"/"SS" style pairs meet), collapse whitespace runs,
    strip trailing '.', ';', '!' (repeatedly, so the result is a fixed
    point) while keeping a trailing '?'. Case, surrounding/internal
    whitespace runs, and trailing periods never distinguish two canonical
    sentences.
    """
    text = _WS_RUN.sub(" ", raw_text.casefold()).strip()
    while text and text[-1] in ".;!":
        text = text[:-1].rstrip()
    return text or None


@dataclass(frozen=True)
class PoolEntry:
    text: str
    report_count: int
    occurrence_count: int
    rank: int  # 1-based; rank 1 is the most report-frequent entry


class SentencePool:
    """Unique canonical sentences with report/occurrence counts, rank-ordered.

    Rank is descending by report_count with lexicographic tie-break, a
    strict total order so two builds of the same corpus agree byte for
    byte.
    """

    def __init__(self, counts: dict[str, tuple[int, int]]):
        ordered = sorted(counts.items(), key=lambda kv: (-kv[1][0], kv[0]))
        self.entries: dict[str, PoolEntry] = {}
        self.ranked: list[PoolEntry] = []
        for rank, (text, (rc, oc)) in enumerate(ordered, start=1):
            entry = PoolEntry(text=text, report_count=rc, occurrence_count=oc, rank=rank)
            self.entries[text] = entry
            self.ranked.append(entry)

    def __len__(self) -> int:
        return len(self.ranked)

    def __contains__(self, text: str) -> bool:
        return text in self.entries

    def get(self, text: str) -> PoolEntry | None:
        return self.entries.get(text)


def build_sentence_pool(corpus, abbreviations: tuple[str, ...] = DEFAULT_ABBREVIATIONS) -> SentencePool:
    """Build the unique-sentence pool over a ReportCorpus.

    report_count counts distinct reports containing the canonical
    sentence; occurrence_count counts every occurrence, so
    report_count <= occurrence_count always holds.
    """
    counts: dict[str, list[int]] = {}
    for study in corpus.studies:
        seen_in_report: set[str] = set()
        for sent in segment(study.report_text, study.study_id, abbreviations):
            canon = normalize(sent.raw_text)
            if canon is None:
                continue
            entry = counts.setdefault(canon, [0, 0])
            entry[1] += 1
            if canon not in seen_in_report:
                entry[0] += 1
                seen_in_report.add(canon)
    return SentencePool({text: (rc, oc) for text, (rc, oc) in counts.items()})


def coverage_curve(pool: SentencePool, corpus, rules,
                   abbreviations: tuple[str, ...] = DEFAULT_ABBREVIATIONS) -> list[tuple[int, int]]:
    """Reports fully covered as a function of how many top sentences are tagged.

    A report counts as covered at k if every positive-candidate sentence
    in it (per the auto-filters in `rules`) sits among the top-k ranked
    positive-candidate pool entries. covered(0) is the number of reports
    with no positive-candidate sentence at all, and the curve is
    non-decreasing by construction.
    """
    from .classify import CANDIDATE

    candidate_position: dict[str, int] = {}
    for entry in pool.ranked:
        if rules.apply(entry.text) == CANDIDATE:
            candidate_position[entry.text] = len(candidate_position) + 1
    n_candidates = len(candidate_position)

    # threshold[r] = smallest k at which report r becomes covered
    never = n_candidates + 1
    counts = [0] * (n_candidates + 2)
    for study in corpus.studies:
        threshold = 0
        for sent in segment(study.report_text, study.study_id, abbreviations):
            canon = normalize(sent.raw_text)
            if canon is None or rules.apply(canon) != CANDIDATE:
                continue
            pos = candidate_position.get(canon, never)
            threshold = max(threshold, pos)
        counts[min(threshold, never)] += 1

    curve = []
    covered = 0
    for k in range(n_candidates + 1):
        covered += counts[k]
        curve.append((k, covered))
    return curve


def write_pool_csv(pool: SentencePool, path: str | Path, header_comment: str | None = None) -> None:
    with atomic_write(path) as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["canonical_text", "report_count", "occurrence_count", "rank"])
        for entry in pool.ranked:
            writer.writerow([entry.text, entry.report_count, entry.occurrence_count, entry.rank])


def read_pool_csv(path: str | Path) -> SentencePool:
    counts: dict[str, tuple[int, int]] = {}
    with open(path, encoding="utf-8") as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(rows, None)
        if header is None or header[:3] != ["canonical_text", "report_count", "occurrence_count"]:
            raise ValueError(f"{path}: not a sentence-pool CSV")
        for row in rows:
            counts[row[0]] = (int(row[1]), int(row[2]))
    return SentencePool(counts)
