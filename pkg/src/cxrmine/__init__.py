"""cxrmine: mine chest X-ray reports into multi-label finding datasets.

The pipeline turns free-text reports into a 40-finding binary label
corpus: ingest and validate studies, segment and canonicalize sentences,
auto-filter negative/neutral/excluding sentences with ordered regex
rules, apply human sentence tags through a merge-aware ontology, and
assemble labeled training sets under the fully-covered or any-hit
policy with a reproducible patient-level split. Agreement-rate
statistics, bootstrap confidence intervals, threshold selection, and
ROC/AUC metrics evaluate label quality and model predictions, and an
HTTP annotation service feeds the human-in-the-loop workflows.
"""

__version__ = "0.1.0"

from .classify import (
    FilterRuleSet,
    Finding,
    Ontology,
    ReportAnalysis,
    SentenceTag,
    UnknownFindingError,
    apply_filters,
    canonical_finding,
    classify_report,
    load_ontology,
    load_rules,
    load_tag_store,
)
from .ingest import IngestError, ReportCorpus, StudyRecord, corpus_stats, load_reports
from .labels import (
    ANY_HIT,
    FULLY_COVERED,
    LabeledStudy,
    build_broad_test_set,
    build_label_sets,
    estimate_label_noise,
    partition_by_patient,
    select_validation_subset,
)
from .sentences import (
    Sentence,
    SentencePool,
    build_sentence_pool,
    coverage_curve,
    normalize,
    segment,
)
from .stats import (
    DeltaCI,
    RatingMatrix,
    RocResult,
    aar,
    agreement_rate,
    avg_radiologist_rate,
    bce_mean_loss,
    bootstrap_delta_ci,
    heatmap,
    roc_auc,
    select_threshold,
)

__all__ = [
    "__version__",
    "ANY_HIT",
    "FULLY_COVERED",
    "DeltaCI",
    "FilterRuleSet",
    "Finding",
    "IngestError",
    "LabeledStudy",
    "Ontology",
    "RatingMatrix",
    "ReportAnalysis",
    "ReportCorpus",
    "RocResult",
    "Sentence",
    "SentencePool",
    "SentenceTag",
    "StudyRecord",
    "UnknownFindingError",
    "aar",
    "agreement_rate",
    "apply_filters",
    "avg_radiologist_rate",
    "bce_mean_loss",
    "bootstrap_delta_ci",
    "build_broad_test_set",
    "build_label_sets",
    "build_sentence_pool",
    "canonical_finding",
    "classify_report",
    "corpus_stats",
    "coverage_curve",
    "estimate_label_noise",
    "heatmap",
    "load_ontology",
    "load_reports",
    "load_rules",
    "load_tag_store",
    "normalize",
    "partition_by_patient",
    "roc_auc",
    "segment",
    "select_threshold",
    "select_validation_subset",
]
