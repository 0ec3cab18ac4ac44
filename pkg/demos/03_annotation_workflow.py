"""The human-in-the-loop tagging and rating workflows, driven in-process.

Spins the annotation service up without a network socket (FastAPI test
transport), walks the sentence queue the way a tagger would, rates an
evaluation set as two raters, then restarts the service from its event
log to show that nothing lives outside the log.

Run: python demos/03_annotation_workflow.py
For a real server: cxrmine serve --reports ... --eval-sets ... --out ...
"""

import json
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from cxrmine import build_sentence_pool, load_ontology, load_reports, load_rules
from cxrmine.service import AnnotationState, EvalSet, EvalStudy, create_app
from cxrmine.synth import generate_corpus

workdir = Path(tempfile.mkdtemp(prefix="cxrmine_demo_"))
bundle = generate_corpus(n_reports=300, seed=3)
bundle.write_reports(workdir / "reports.jsonl")

ontology = load_ontology()
rules = load_rules()
pool = build_sentence_pool(load_reports(workdir / "reports.jsonl"))
eval_sets = {
    "edema_set": EvalSet(
        set_id="edema_set", finding="pulmonary edema",
        studies=tuple(EvalStudy(study_id=f"S{i:06d}", pa_image=f"/images/S{i:06d}_pa.png",
                                report_opinion=i % 2) for i in range(6)),
    )
}

log_path = workdir / "events.jsonl"
state = AnnotationState(log_path=log_path, ontology=ontology, pool=pool,
                        rules=rules, eval_sets=eval_sets)
client = TestClient(create_app(state))

# --- a tagger works the queue: most reused sentences come first. Here the
#     "tagger" recognizes the generator's positive phrasings and maps the
#     rest to negative/neutral, exactly what a human does at the browser.
def demo_tagger(text):
    for prefix, suffix in (("there is ", ""), ("", " is seen"),
                           ("findings compatible with ", "")):
        candidate = text.removeprefix(prefix).removesuffix(suffix)
        if candidate != text or (prefix == "" and suffix == ""):
            try:
                ontology.canonical_finding(candidate)
                return "positive", [candidate]
            except KeyError:
                continue
    if "not enlarged" in text:
        return "negative", []
    return "neutral", []


print("sentence tagging queue (top of the pool first):")
for _ in range(6):
    item = client.get("/api/sentences/next?rater=demo").json()
    if item.get("done"):
        break
    category, findings = demo_tagger(item["text"])
    ack = client.post("/api/sentences/tag", json={
        "canonical_text": item["text"], "category": category,
        "findings": findings, "rater_id": "demo"}).json()
    print(f"  rank {item['rank']:3d} ({item['report_count']} reports) "
          f"{item['text']!r} -> {category} [event {ack['event_id']}]")

# --- two raters rate the evaluation set; orders are seeded per rater
print("\nevaluation-set rating:")
for rater in ("rad_a", "rad_b"):
    order = []
    while True:
        item = client.get(f"/api/eval/edema_set/next?rater={rater}").json()
        if item.get("done"):
            break
        order.append(item["study_id"])
        client.post("/api/eval/edema_set/rating", json={
            "study_id": item["study_id"], "finding": "pulmonary edema",
            "rater_id": rater, "label": "present"})
    print(f"  {rater} served order: {order}")

progress = client.get("/api/progress").json()
print(f"\nprogress: {progress['sentences']['tagged']} sentences tagged, "
      f"eval raters {list(progress['eval_sets']['edema_set']['by_rater'])}")

# --- kill the service; the log alone reconstructs identical state
reborn = AnnotationState(log_path=log_path, ontology=ontology, pool=pool,
                         rules=rules, eval_sets=eval_sets)
assert TestClient(create_app(reborn)).get("/api/progress").json() == progress
print(f"restart from {log_path.name}: progress identical, "
      f"{reborn.next_event_id - 1} events replayed")

export = workdir / "ratings.jsonl"
reborn.write_ratings(export)
print(f"ratings exported for eval_stats: {len(export.read_text().splitlines())} rows")
print(json.dumps(json.loads(export.read_text().splitlines()[0]), indent=2))
