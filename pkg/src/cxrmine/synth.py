"""Synthetic report corpora with known ground truth.

Reports are assembled from sentence banks wired to the shipped ontology
and filter rules: positive templates (tagged to findings, some through
merge names), auto-filterable negative/neutral/excluding sentences, and
"unknown" candidate sentences that no rule matches and nobody tags. A
study's true label vector is the union of its positive sentences'
findings, so a pipeline run can be checked bit-for-bit against the
generator on fully covered studies.

`tag_fraction` controls how much of the positive bank gets human tags;
anything below 1.0 leaves untagged positive sentences behind, which turn
into unknown candidates and split the fully_covered and any_hit sets
apart the same way partial tagging does on real data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .classify import Ontology, load_ontology
from .fileio import atomic_write
from .labels import LabeledStudy
from .sentences import normalize

NEGATIVE_BANK = [
    "No acute disease.",
    "No pleural effusion.",
    "No evidence of pneumothorax.",
    "Normal cardiac shadow.",
    "The lungs are clear.",
    "Heart size is within normal limits.",
    "Unremarkable mediastinal contour.",
    "No focal infiltrate.",
]

NEUTRAL_BANK = [
    "84 year old man with cough.",
    "62 year old woman with fever.",
    "Lung nodule follow up.",
    "Comparison made to CT chest.",
    "Clinical history: shortness of breath.",
    "Clinical correlation is recommended.",
]

EXCLUDING_BANK = [
    "No change in the appearance of the chest since yesterday.",
    "Unchanged position of the support lines.",
    "Stable appearance relative to the prior comparison.",
]

UNKNOWN_BANK = [
    "Questionable density projecting over the mediastinum.",
    "Subtle lucency at the right costophrenic region.",
    "Faint shadow over the left apex.",
    "Slightly asymmetric perihilar haziness.",
]

# Canonical-candidate sentences resolved only by a human tag (exercise
# tag-over-rule precedence on the negative and excluding paths).
TAGGED_NEGATIVE = "The cardiac silhouette is not enlarged."
TAGGED_EXCLUDING = "Similar appearance of the chest."

POSITIVE_TEMPLATES = (
    "There is {name}.",
    "{name} is seen.",
    "Findings compatible with {name}.",
)

# A few positives phrased through merge names, plus a decimal-bearing one.
MERGE_SENTENCES = [
    ("Twisted aorta.", ("twisted aorta",)),
    ("Osteoporosis of the spine.", ("osteoporosis",)),
    ("Nasogastric tube in place.", ("nasogastric tube",)),
    ("Nodule measuring 5.5 cm in the right upper lobe.", ("nodule",)),
    ("Infiltrate?", ("consolidation",)),
]


@dataclass(frozen=True)
class TruthRecord:
    labels: tuple[int, ...]
    fully_covered: bool
    excluded: bool


@dataclass
class SyntheticBundle:
    records: list[dict]
    tags: list[dict]
    truth: dict[str, TruthRecord]
    ontology: Ontology
    n_rejects: int = 0
    untagged_positive_texts: set[str] = field(default_factory=set)

    def write_reports(self, path) -> None:
        with atomic_write(path) as fh:
            for rec in self.records:
                fh.write(json.dumps(rec) + "\n")

    def write_tags(self, path) -> None:
        with atomic_write(path) as fh:
            for tag in self.tags:
                fh.write(json.dumps(tag) + "\n")


def _positive_bank(ontology: Ontology) -> list[tuple[str, tuple[str, ...]]]:
    bank = []
    for finding in ontology.findings:
        for template in POSITIVE_TEMPLATES:
            bank.append((template.format(name=finding.name), (finding.name,)))
    bank.extend(MERGE_SENTENCES)
    return bank


def generate_corpus(n_reports: int = 1000, seed: int = 0, tag_fraction: float = 1.0,
                    unknown_rate: float = 0.15, exclude_rate: float = 0.03,
                    reject_rate: float = 0.0, ontology: Ontology | None = None) -> SyntheticBundle:
    """Generate a reports file, a tag store, and the per-study ground truth."""
    rng = np.random.default_rng(seed)
    ontology = ontology or load_ontology()
    bank = _positive_bank(ontology)

    tagged_idx = set(rng.choice(len(bank), size=int(round(tag_fraction * len(bank))),
                                replace=False).tolist())
    tags: list[dict] = []
    untagged_texts: set[str] = set()
    for i, (text, raw_names) in enumerate(bank):
        canon = normalize(text)
        if i in tagged_idx:
            tags.append({"canonical_text": canon, "category": "positive",
                         "findings": list(raw_names), "rater_id": "synth"})
        else:
            untagged_texts.add(canon)
    tags.append({"canonical_text": normalize(TAGGED_NEGATIVE), "category": "negative",
                 "findings": [], "rater_id": "synth"})
    tags.append({"canonical_text": normalize(TAGGED_EXCLUDING), "category": "excluding",
                 "findings": [], "rater_id": "synth"})

    n_patients = max(1, int(0.8 * n_reports))
    records: list[dict] = []
    truth: dict[str, TruthRecord] = {}
    n_rejects = 0

    for i in range(n_reports):
        study_id = f"S{i:06d}"
        patient_id = f"P{rng.integers(0, n_patients):06d}"
        record = {
            "study_id": study_id,
            "patient_id": patient_id,
            "age_years": int(rng.integers(18, 95)),
            "has_pa": True,
            "has_lateral": bool(rng.random() < 0.85),
        }

        if reject_rate and rng.random() < reject_rate:
            kind = rng.integers(0, 3)
            if kind == 0:
                record["age_years"] = int(rng.integers(1, 18))
            elif kind == 1:
                record["has_pa"] = False
            else:
                record["report_text"] = "   "
            record.setdefault("report_text", "Report for a rejected study.")
            records.append(record)
            n_rejects += 1
            continue

        sentences: list[str] = []
        positive_names: set[str] = set()
        fully_covered = True
        excluded = False

        n_pos = int(rng.integers(0, 4))
        for bi in rng.choice(len(bank), size=n_pos, replace=False):
            text, raw_names = bank[bi]
            sentences.append(text)
            if bi in tagged_idx:
                positive_names.update(ontology.canonical_finding(r).name for r in raw_names)
            else:
                fully_covered = False  # untagged positive acts as an unknown candidate

        for bi in rng.choice(len(NEGATIVE_BANK), size=int(rng.integers(1, 3)), replace=False):
            sentences.append(NEGATIVE_BANK[bi])
        if rng.random() < 0.5:
            sentences.append(NEUTRAL_BANK[rng.integers(0, len(NEUTRAL_BANK))])
        if rng.random() < unknown_rate:
            sentences.append(UNKNOWN_BANK[rng.integers(0, len(UNKNOWN_BANK))])
            fully_covered = False
        if rng.random() < exclude_rate:
            sentences.append(EXCLUDING_BANK[rng.integers(0, len(EXCLUDING_BANK))])
            excluded = True
        if rng.random() < 0.10:
            sentences.append(TAGGED_NEGATIVE)
        if rng.random() < 0.02:
            sentences.append(TAGGED_EXCLUDING)
            excluded = True

        order = rng.permutation(len(sentences))
        record["report_text"] = " ".join(sentences[j] for j in order)
        records.append(record)

        bits = [0] * len(ontology)
        for name in positive_names:
            bits[ontology.by_name[name].id - 1] = 1
        truth[study_id] = TruthRecord(labels=tuple(bits), fully_covered=fully_covered,
                                      excluded=excluded)

    return SyntheticBundle(records=records, tags=tags, truth=truth, ontology=ontology,
                           n_rejects=n_rejects, untagged_positive_texts=untagged_texts)


def make_eval_fixture(labeled: list[LabeledStudy], ontology: Ontology, findings: list[str],
                      seed: int = 0, n_raters: int = 3, flip_rate: float = 0.1,
                      set_size: int = 60) -> tuple[list[dict], dict[str, np.ndarray]]:
    """Simulated rating records and model confidences for evaluation runs.

    Raters judge each study as its text label flipped with `flip_rate`;
    the report opinion is the text label itself; confidences concentrate
    around the label with mild noise. Returns (rating rows, predictions
    for every labeled study).
    """
    rng = np.random.default_rng(seed)
    rows: list[dict] = []
    for finding in findings:
        fi = ontology.by_name[finding].id - 1
        positives = [s for s in labeled if s.labels[fi] == 1]
        negatives = [s for s in labeled if s.labels[fi] == 0]
        n_pos = min(len(positives), set_size // 2)
        n_neg = min(len(negatives), set_size - n_pos)
        chosen = [(s, "pos_pool") for s in positives[:n_pos]]
        chosen += [(negatives[i], "neg_pool")
                   for i in rng.choice(len(negatives), size=n_neg, replace=False)]
        for study, origin in chosen:
            bit = study.labels[fi]
            for r in range(n_raters):
                judged = int(bit ^ (rng.random() < flip_rate))
                rows.append({
                    "set_id": f"set_{finding.replace(' ', '_')}",
                    "finding": finding,
                    "study_id": study.study_id,
                    "rater_id": f"rad{r + 1}",
                    "label": judged,
                    "pool_origin": origin,
                    "report_opinion": int(bit),
                })

    predictions: dict[str, np.ndarray] = {}
    for study in labeled:
        bits = np.asarray(study.labels, dtype=float)
        noise = rng.uniform(-0.08, 0.08, size=bits.size)
        predictions[study.study_id] = np.clip(bits * 0.8 + 0.1 + noise, 0.0, 1.0)
    return rows, predictions
