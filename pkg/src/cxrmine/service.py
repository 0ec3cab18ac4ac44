"""HTTP annotation service for sentence tagging and evaluation-set rating.

State lives in an append-only line-delimited JSON event log; replaying the
log from empty reconstructs the exact same effective state, so the service
can be killed and restarted at will. Conflicting submissions resolve
latest-wins per logical key (the log keeps the full history for audit).

API (JSON bodies, UTF-8):
    GET  /api/sentences/next?rater=...    highest-ranked untagged candidate
    POST /api/sentences/tag               sentence tag submission
    GET  /api/findings                    ontology listing
    GET  /api/eval/{set_id}/next?rater=   next unrated study, seeded shuffle
    POST /api/eval/{set_id}/rating        study rating submission
    GET  /api/progress                    tagging/rating counts
Errors return {"error": ..., "detail": ...} with 400 for malformed
payloads, 404 for unknown sets, 422 for semantic violations.
"""

from __future__ import annotations

import json
import random
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .classify import (
    CANDIDATE,
    POSITIVE,
    TAG_CATEGORIES,
    FilterRuleSet,
    Ontology,
    UnknownFindingError,
)
from .fileio import atomic_write, stable_hash64
from .sentences import SentencePool


@dataclass(frozen=True)
class EvalStudy:
    study_id: str
    pa_image: str = ""
    lateral_image: str = ""
    report_opinion: int | None = None
    pool_origin: str = ""


@dataclass(frozen=True)
class EvalSet:
    set_id: str
    finding: str
    studies: tuple[EvalStudy, ...]


def load_eval_sets(path: str | Path) -> dict[str, EvalSet]:
    """Load evaluation-set definitions from a JSON file (list of sets)."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    sets = {}
    for entry in data:
        studies = tuple(
            EvalStudy(
                study_id=str(s["study_id"]),
                pa_image=str(s.get("pa_image", "")),
                lateral_image=str(s.get("lateral_image", "")),
                report_opinion=None if s.get("report_opinion") is None else int(s["report_opinion"]),
                pool_origin=str(s.get("pool_origin", "")),
            )
            for s in entry["studies"]
        )
        eval_set = EvalSet(set_id=str(entry["set_id"]), finding=str(entry["finding"]),
                           studies=studies)
        sets[eval_set.set_id] = eval_set
    return sets


@dataclass
class ServiceConfig:
    queue_coverage: str = "single"  # or "per_rater"
    shuffle_seed: int = 0


class AnnotationState:
    """Event-sourced service state: one writer, consistent snapshots for reads."""

    def __init__(self, log_path: str | Path, ontology: Ontology,
                 pool: SentencePool | None = None, rules: FilterRuleSet | None = None,
                 eval_sets: dict[str, EvalSet] | None = None,
                 config: ServiceConfig | None = None):
        self.log_path = Path(log_path)
        self.ontology = ontology
        self.pool = pool
        self.rules = rules
        self.eval_sets = eval_sets or {}
        self.config = config or ServiceConfig()
        self._lock = threading.Lock()

        self.next_event_id = 1
        self.effective_tags: dict[str, dict] = {}
        self.tagged_by: dict[str, set[str]] = {}
        self.ratings: dict[tuple[str, str, str, str], dict] = {}
        self.n_tag_events = 0
        self.n_rating_events = 0

        self.queue: list = []
        if pool is not None:
            self.queue = [
                entry for entry in pool.ranked
                if rules is None or rules.apply(entry.text) == CANDIDATE
            ]
        self._replay()

    # -- event log ---------------------------------------------------------

    def _replay(self) -> None:
        if not self.log_path.exists():
            return
        for line in self.log_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            event = json.loads(line)
            self._apply(event)
            self.next_event_id = max(self.next_event_id, int(event["event_id"]) + 1)

    def _apply(self, event: dict) -> None:
        payload = event["payload"]
        if event["kind"] == "sentence_tag":
            text = payload["canonical_text"]
            self.effective_tags[text] = payload
            self.tagged_by.setdefault(text, set()).add(payload.get("rater_id", ""))
            self.n_tag_events += 1
        elif event["kind"] == "study_rating":
            key = (payload["set_id"], payload["finding"], payload["study_id"],
                   payload["rater_id"])
            self.ratings[key] = payload
            self.n_rating_events += 1

    def append_event(self, kind: str, payload: dict) -> int:
        with self._lock:
            event = {
                "event_id": self.next_event_id,
                "kind": kind,
                "received_at": datetime.now(timezone.utc).isoformat(),
                "payload": payload,
            }
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(event) + "\n")
                fh.flush()
            self._apply(event)
            self.next_event_id += 1
            return event["event_id"]

    # -- sentence queue ----------------------------------------------------

    def next_sentence(self, rater_id: str):
        if self.pool is None:
            return None
        for entry in self.queue:
            if self.config.queue_coverage == "per_rater":
                if rater_id in self.tagged_by.get(entry.text, set()):
                    continue
            elif entry.text in self.effective_tags:
                continue
            return entry
        return "done"

    # -- evaluation queue ----------------------------------------------------

    def _serving_order(self, eval_set: EvalSet, rater_id: str) -> list[int]:
        order = list(range(len(eval_set.studies)))
        rng = random.Random(stable_hash64(self.config.shuffle_seed, eval_set.set_id, rater_id))
        rng.shuffle(order)
        return order

    def next_eval_study(self, set_id: str, rater_id: str):
        eval_set = self.eval_sets.get(set_id)
        if eval_set is None:
            return None
        for idx in self._serving_order(eval_set, rater_id):
            study = eval_set.studies[idx]
            key = (set_id, eval_set.finding, study.study_id, rater_id)
            if key not in self.ratings:
                return eval_set, study
        return "done"

    # -- snapshots -----------------------------------------------------------

    def progress(self) -> dict:
        tagged_texts = set(self.effective_tags)
        queue_texts = {entry.text for entry in self.queue}
        by_rater: dict[str, int] = {}
        for text, raters in self.tagged_by.items():
            for rater in raters:
                by_rater[rater] = by_rater.get(rater, 0) + 1
        eval_progress = {}
        for set_id, eval_set in self.eval_sets.items():
            raters = sorted({key[3] for key in self.ratings if key[0] == set_id})
            per_rater = {}
            for rater in raters:
                rated = sum(
                    1 for s in eval_set.studies
                    if (set_id, eval_set.finding, s.study_id, rater) in self.ratings
                )
                per_rater[rater] = {"rated": rated, "unrated": len(eval_set.studies) - rated}
            eval_progress[set_id] = {
                "finding": eval_set.finding,
                "n_studies": len(eval_set.studies),
                "by_rater": per_rater,
            }
        return {
            "sentences": {
                "queue_total": len(self.queue),
                "tagged": len(tagged_texts),
                "untagged": len(queue_texts - tagged_texts),
                "tag_events": self.n_tag_events,
                "by_rater": by_rater,
            },
            "eval_sets": eval_progress,
        }

    def export_tag_records(self) -> list[dict]:
        """Effective sentence tags in tag-store file order (sorted by text)."""
        return [self.effective_tags[text] for text in sorted(self.effective_tags)]

    def export_rating_records(self) -> list[dict]:
        """Effective ratings as eval_stats-loadable rows, enriched from set definitions."""
        rows = []
        for key in sorted(self.ratings):
            set_id, finding, study_id, rater_id = key
            payload = self.ratings[key]
            row = {
                "set_id": set_id,
                "finding": finding,
                "study_id": study_id,
                "rater_id": rater_id,
                "label": payload["label"],
            }
            eval_set = self.eval_sets.get(set_id)
            if eval_set is not None:
                for study in eval_set.studies:
                    if study.study_id == study_id:
                        if study.report_opinion is not None:
                            row["report_opinion"] = study.report_opinion
                        if study.pool_origin:
                            row["pool_origin"] = study.pool_origin
                        break
            rows.append(row)
        return rows

    def write_tag_store(self, path: str | Path) -> None:
        with atomic_write(path) as fh:
            for record in self.export_tag_records():
                fh.write(json.dumps(record) + "\n")

    def write_ratings(self, path: str | Path) -> None:
        with atomic_write(path) as fh:
            for record in self.export_rating_records():
                fh.write(json.dumps(record) + "\n")


# ---------------------------------------------------------------------------
# HTTP layer

class TagBody(BaseModel):
    canonical_text: str
    category: str
    findings: list[str] = []
    rater_id: str = ""
    timestamp: str = ""


class RatingBody(BaseModel):
    study_id: str
    finding: str = ""
    rater_id: str = ""
    label: str | int
    set_id: str = ""


def _error(status: int, error: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": error, "detail": detail})


def create_app(state: AnnotationState, images_dir: str | Path | None = None,
               ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="cxrmine annotation service")

    @app.exception_handler(RequestValidationError)
    async def malformed_payload(request: Request, exc: RequestValidationError):
        return _error(400, "malformed_payload", str(exc.errors()[:3]))

    @app.get("/api/sentences/next")
    def sentences_next(rater: str = ""):
        entry = state.next_sentence(rater)
        if entry is None:
            return _error(503, "no_pool", "no sentence pool loaded")
        if entry == "done":
            return {"done": True}
        return {
            "text": entry.text,
            "report_count": entry.report_count,
            "occurrence_count": entry.occurrence_count,
            "rank": entry.rank,
        }

    @app.post("/api/sentences/tag")
    def sentences_tag(body: TagBody):
        if body.category not in TAG_CATEGORIES:
            return _error(422, "invalid_category", f"category must be one of {TAG_CATEGORIES}")
        if body.category == POSITIVE and not body.findings:
            return _error(422, "missing_findings", "a positive tag needs at least one finding")
        if body.category != POSITIVE and body.findings:
            return _error(422, "unexpected_findings", f"{body.category} tags carry no findings")
        try:
            findings = sorted({state.ontology.canonical_finding(f).name for f in body.findings})
        except UnknownFindingError as exc:
            return _error(422, "unknown_finding", f"not in the ontology: {exc.args[0]!r}")
        payload = {
            "canonical_text": body.canonical_text,
            "category": body.category,
            "findings": findings,
            "rater_id": body.rater_id,
            "timestamp": body.timestamp or datetime.now(timezone.utc).isoformat(),
        }
        event_id = state.append_event("sentence_tag", payload)
        return {"event_id": event_id}

    @app.get("/api/findings")
    def findings():
        return {
            "findings": [{"id": f.id, "name": f.name} for f in state.ontology.findings],
            "merges": dict(state.ontology.merges),
        }

    @app.get("/api/eval/{set_id}/next")
    def eval_next(set_id: str, rater: str = ""):
        result = state.next_eval_study(set_id, rater)
        if result is None:
            return _error(404, "unknown_set", f"no evaluation set {set_id!r}")
        if result == "done":
            return {"done": True}
        eval_set, study = result
        return {
            "study_id": study.study_id,
            "finding": eval_set.finding,
            "pa_image": study.pa_image,
            "lateral_image": study.lateral_image,
        }

    @app.post("/api/eval/{set_id}/rating")
    def eval_rating(set_id: str, body: RatingBody):
        eval_set = state.eval_sets.get(set_id)
        if eval_set is None:
            return _error(404, "unknown_set", f"no evaluation set {set_id!r}")
        if body.set_id and body.set_id != set_id:
            return _error(422, "set_mismatch", "body set_id does not match the URL")
        if body.finding and body.finding != eval_set.finding:
            return _error(422, "finding_mismatch",
                          f"set {set_id!r} rates {eval_set.finding!r}, not {body.finding!r}")
        if body.study_id not in {s.study_id for s in eval_set.studies}:
            return _error(422, "study_not_in_set", f"study {body.study_id!r} not in {set_id!r}")
        if isinstance(body.label, str):
            text = body.label.strip().lower()
            if text not in ("present", "absent"):
                return _error(422, "invalid_label", "label must be 'present' or 'absent'")
            label = 1 if text == "present" else 0
        else:
            label = 1 if body.label else 0
        payload = {
            "set_id": set_id,
            "finding": eval_set.finding,
            "study_id": body.study_id,
            "rater_id": body.rater_id,
            "label": label,
        }
        event_id = state.append_event("study_rating", payload)
        return {"event_id": event_id}

    @app.get("/api/progress")
    def progress():
        return state.progress()

    if images_dir is not None:
        app.mount("/images", StaticFiles(directory=str(images_dir)), name="images")
    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
