"""Mining reports into labels, end to end on a synthetic corpus.

Walks the whole pipeline in library calls: generate a corpus with known
ground truth, ingest it, build the frequency-ranked sentence pool, look
at the coverage curve, classify reports through filters + tags, and
build labeled sets under both admission policies.

Run: python demos/01_mine_reports.py
"""

import tempfile
from pathlib import Path

from cxrmine import (
    build_label_sets,
    build_sentence_pool,
    classify_report,
    corpus_stats,
    coverage_curve,
    load_ontology,
    load_reports,
    load_rules,
    load_tag_store,
    partition_by_patient,
)
from cxrmine.synth import generate_corpus

workdir = Path(tempfile.mkdtemp(prefix="cxrmine_demo_"))
print(f"working in {workdir}\n")

# --- 1. a corpus with known truth: 2,000 reports, 90% of the positive
#         sentence bank tagged, some unknown and excluding sentences mixed in
bundle = generate_corpus(n_reports=2000, seed=42, tag_fraction=0.9,
                         unknown_rate=0.15, exclude_rate=0.03, reject_rate=0.02)
bundle.write_reports(workdir / "reports.jsonl")
bundle.write_tags(workdir / "tags.jsonl")

corpus = load_reports(workdir / "reports.jsonl")
stats = corpus_stats(corpus)
print(f"ingested {stats.n_studies} studies, rejected {stats.n_rejected} "
      f"({dict(stats.rejects_by_reason)})")
print(f"lateral view present in {stats.lateral_fraction:.0%} of studies\n")

# --- 2. the unique-sentence pool, ranked by how many reports reuse each one
pool = build_sentence_pool(corpus)
print(f"sentence pool: {len(pool)} unique canonical sentences")
print("most reused sentences:")
for entry in pool.ranked[:5]:
    print(f"  rank {entry.rank:2d}  {entry.report_count:5d} reports  {entry.text!r}")
print()

# --- 3. how many reports become fully covered as tagging proceeds top-down
rules = load_rules()
curve = coverage_curve(pool, corpus, rules)
for k in (0, 10, 50, len(curve) - 1):
    k = min(k, len(curve) - 1)
    print(f"tagging the top {curve[k][0]:3d} sentences fully covers "
          f"{curve[k][1]:5d} reports")
print()

# --- 4. classify reports and build both label sets
ontology = load_ontology()
tags = load_tag_store(workdir / "tags.jsonl", ontology)
analyses = [classify_report(s, tags, rules, ontology) for s in corpus.studies]
patient_of = {s.study_id: s.patient_id for s in corpus.studies}

for policy in ("fully_covered", "any_hit"):
    labeled = build_label_sets(analyses, patient_of, ontology, policy)
    labeled = partition_by_patient(labeled, seed=0)
    n_normal = sum(1 for s in labeled if not any(s.labels))
    parts = {p: sum(1 for s in labeled if s.partition == p)
             for p in ("train", "validation", "test")}
    print(f"{policy:>13}: {len(labeled):5d} studies "
          f"({n_normal} normal, partitions {parts})")

print("\nthe any_hit set admits studies with untagged candidate sentences as "
      "long as one recognized positive finding exists; the extra volume comes "
      "at the price of false-negative label noise on the untagged findings.")
