"""Sentence categories, the finding ontology, filter rules, and report analysis.

A canonical sentence is either auto-classified by ordered regex filters
(negative / neutral / excluding, first match wins, no match = candidate)
or carries a human tag, which always overrides the filters. Positive tags
map the sentence to one or more findings through the merge-aware
ontology; any finding name outside the ontology is a hard error, never a
silent drop.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .sentences import DEFAULT_ABBREVIATIONS, normalize, segment

POSITIVE = "positive"
NEGATIVE = "negative"
NEUTRAL = "neutral"
EXCLUDING = "excluding"
CANDIDATE = "candidate"

TAG_CATEGORIES = (POSITIVE, NEGATIVE, NEUTRAL, EXCLUDING)
FILTER_CATEGORIES = (NEGATIVE, NEUTRAL, EXCLUDING)

DATA_DIR = Path(__file__).parent / "data"
DEFAULT_ONTOLOGY_PATH = DATA_DIR / "ontology.json"
DEFAULT_RULES_PATH = DATA_DIR / "filter_rules.tsv"


class UnknownFindingError(KeyError):
    """A raw finding name that neither names a finding nor has a merge entry."""


@dataclass(frozen=True)
class Finding:
    id: int
    name: str


class Ontology:
    """The canonical finding list plus the raw-name merge map.

    Merge targets must themselves be canonical findings (the map is
    closed); identity merges are implied for every canonical name.
    """

    def __init__(self, findings: list[Finding], merges: dict[str, str] | None = None):
        self.findings = sorted(findings, key=lambda f: f.id)
        self.by_id = {f.id: f for f in self.findings}
        self.by_name = {f.name: f for f in self.findings}
        if len(self.by_id) != len(self.findings) or len(self.by_name) != len(self.findings):
            raise ValueError("ontology findings must have unique ids and names")
        self.merges = dict(merges or {})
        for raw, target in self.merges.items():
            if target not in self.by_name:
                raise ValueError(f"merge target {target!r} (from {raw!r}) is not a canonical finding")

    def __len__(self) -> int:
        return len(self.findings)

    def names(self) -> list[str]:
        return [f.name for f in self.findings]

    def canonical_finding(self, raw_name: str) -> Finding:
        """Resolve a raw finding name through the merge map to its canonical Finding."""
        name = raw_name.strip().lower()
        if name in self.by_name:
            return self.by_name[name]
        if name in self.merges:
            return self.by_name[self.merges[name]]
        raise UnknownFindingError(raw_name)


def load_ontology(path: str | Path = DEFAULT_ONTOLOGY_PATH) -> Ontology:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    findings = [Finding(id=int(f["id"]), name=str(f["name"])) for f in data["findings"]]
    merges = {str(k).lower(): str(v).lower() for k, v in data.get("merges", {}).items()}
    return Ontology(findings, merges)


def canonical_finding(raw_name: str, ontology: Ontology) -> Finding:
    return ontology.canonical_finding(raw_name)


@dataclass(frozen=True)
class FilterRule:
    name: str
    pattern: re.Pattern
    category: str


class FilterRuleSet:
    """Ordered auto-filter rules; the first matching rule decides the category."""

    def __init__(self, rules: list[FilterRule]):
        for rule in rules:
            if rule.category not in FILTER_CATEGORIES:
                raise ValueError(f"rule {rule.name!r}: bad category {rule.category!r}")
        self.rules = list(rules)

    def __len__(self) -> int:
        return len(self.rules)

    def apply(self, canonical_text: str) -> str:
        for rule in self.rules:
            if rule.pattern.search(canonical_text):
                return rule.category
        return CANDIDATE


def apply_filters(canonical_text: str, rules: FilterRuleSet) -> str:
    """Auto-classify a canonical sentence: negative/neutral/excluding or candidate."""
    return rules.apply(canonical_text)


def load_rules(path: str | Path = DEFAULT_RULES_PATH) -> FilterRuleSet:
    """Load ordered (rule_name, regex, category) records from a TSV file.

    Blank lines and '#' comment lines are skipped. A pattern that does not
    compile is a validation error naming the offending rule.
    """
    rules = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected rule_name<TAB>regex<TAB>category")
        name, pattern_text, category = (p.strip() for p in parts)
        try:
            pattern = re.compile(pattern_text)
        except re.error as exc:
            raise ValueError(f"{path}:{lineno}: rule {name!r} has invalid regex: {exc}") from exc
        rules.append(FilterRule(name=name, pattern=pattern, category=category))
    return FilterRuleSet(rules)


@dataclass(frozen=True)
class SentenceTag:
    """A human verdict on one canonical sentence.

    Positive tags carry at least one canonical finding name; every other
    category carries none.
    """

    canonical_text: str
    category: str
    findings: tuple[str, ...] = ()
    rater_id: str = ""
    timestamp: str = ""

    def __post_init__(self):
        if self.category not in TAG_CATEGORIES:
            raise ValueError(f"invalid tag category {self.category!r}")
        if self.category == POSITIVE and not self.findings:
            raise ValueError("positive tag requires at least one finding")
        if self.category != POSITIVE and self.findings:
            raise ValueError(f"{self.category} tag must not carry findings")


TagStore = dict[str, SentenceTag]


def tag_from_record(obj: dict, ontology: Ontology) -> SentenceTag:
    """Build a SentenceTag from one JSON record, canonicalizing finding names."""
    findings = tuple(
        sorted({ontology.canonical_finding(name).name for name in obj.get("findings", [])})
    )
    return SentenceTag(
        canonical_text=str(obj["canonical_text"]),
        category=str(obj["category"]),
        findings=findings,
        rater_id=str(obj.get("rater_id", "")),
        timestamp=str(obj.get("timestamp", "")),
    )


def load_tag_store(path: str | Path, ontology: Ontology) -> TagStore:
    """Load line-delimited SentenceTag records; the last record per sentence wins."""
    store: TagStore = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            tag = tag_from_record(obj, ontology)
        except UnknownFindingError:
            raise
        except (ValueError, KeyError) as exc:
            raise ValueError(f"{path}:{lineno}: bad tag record: {exc}") from exc
        store[tag.canonical_text] = tag
    return store


@dataclass(frozen=True)
class ReportAnalysis:
    """Per-study verdict feeding the label builder."""

    study_id: str
    positive_findings: frozenset[str] = field(default_factory=frozenset)
    has_unknown_candidate: bool = False
    excluded: bool = False


def classify_report(study, tags: TagStore, rules: FilterRuleSet, ontology: Ontology,
                    abbreviations: tuple[str, ...] = DEFAULT_ABBREVIATIONS) -> ReportAnalysis:
    """Analyze one study's report sentence by sentence.

    Human tags take precedence over the auto-filters. positive_findings is
    the merged union over positive-tagged sentences; has_unknown_candidate
    flags any untagged sentence the filters could not rule out; excluded
    flags any excluding sentence (by rule or tag), which makes the study
    unusable for training under both policies.
    """
    positive: set[str] = set()
    has_unknown = False
    excluded = False
    for sent in segment(study.report_text, study.study_id, abbreviations):
        canon = normalize(sent.raw_text)
        if canon is None:
            continue
        tag = tags.get(canon)
        if tag is not None:
            if tag.category == POSITIVE:
                for name in tag.findings:
                    positive.add(ontology.canonical_finding(name).name)
            elif tag.category == EXCLUDING:
                excluded = True
            continue
        auto = rules.apply(canon)
        if auto == EXCLUDING:
            excluded = True
        elif auto == CANDIDATE:
            has_unknown = True
    return ReportAnalysis(
        study_id=study.study_id,
        positive_findings=frozenset(positive),
        has_unknown_candidate=has_unknown,
        excluded=excluded,
    )
