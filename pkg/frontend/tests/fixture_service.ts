/**
 * In-memory fixture implementing the annotation service semantics: ranked
 * sentence queue (single coverage), latest-wins tags and ratings, seeded
 * per-rater serving order, and the JSONL-style export. Exposes a
 * fetch-compatible function so the real ApiClient runs against it
 * unchanged.
 */

import type {
  EvalStudyItem,
  RatingSubmission,
  SentenceItem,
  TagSubmission,
} from "../src/types.js";

export interface FixtureStudy {
  study_id: string;
  pa_image: string;
  lateral_image: string;
}

export interface FixtureEvalSet {
  set_id: string;
  finding: string;
  studies: FixtureStudy[];
}

interface StoredEvent {
  event_id: number;
  kind: "sentence_tag" | "study_rating";
  payload: TagSubmission | (RatingSubmission & { set_id: string });
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

function error(status: number, code: string, detail: string): Response {
  return json(status, { error: code, detail });
}

/** Deterministic per-(set, rater) order: sort by a tiny string hash. */
function servingOrder(n: number, setId: string, rater: string): number[] {
  const keyed = Array.from({ length: n }, (_, i) => {
    let h = 2166136261;
    for (const ch of `${setId}|${rater}|${i}`) {
      h = (h ^ ch.charCodeAt(0)) * 16777619;
      h >>>= 0;
    }
    return { i, h };
  });
  keyed.sort((a, b) => a.h - b.h || a.i - b.i);
  return keyed.map((k) => k.i);
}

export class FixtureService {
  private events: StoredEvent[] = [];
  private tags = new Map<string, TagSubmission>();
  private ratings = new Map<string, RatingSubmission & { set_id: string }>();
  private nextEventId = 1;
  /** Set to make the next N POSTs fail before reaching the service. */
  failNextPosts = 0;

  constructor(
    private readonly sentences: SentenceItem[],
    private readonly evalSets: FixtureEvalSet[],
    private readonly findingNames: string[],
  ) {}

  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    const parsed = new URL(url, "http://fixture");
    const path = parsed.pathname;
    const method = init?.method ?? "GET";

    if (method === "POST" && this.failNextPosts > 0) {
      this.failNextPosts -= 1;
      throw new TypeError("NetworkError: connection reset (fixture)");
    }

    if (method === "GET" && path === "/api/sentences/next") {
      const next = this.sentences.find((s) => !this.tags.has(s.text));
      return json(200, next ?? { done: true });
    }

    if (method === "POST" && path === "/api/sentences/tag") {
      const body = JSON.parse(String(init?.body ?? "null"));
      if (!body || typeof body.canonical_text !== "string" || !body.category) {
        return error(400, "malformed_payload", "canonical_text and category required");
      }
      if (body.category === "positive" && (!body.findings || body.findings.length === 0)) {
        return error(422, "missing_findings", "a positive tag needs at least one finding");
      }
      for (const name of body.findings ?? []) {
        if (!this.findingNames.includes(name)) {
          return error(422, "unknown_finding", `not in the ontology: ${name}`);
        }
      }
      const tag = body as TagSubmission;
      this.tags.set(tag.canonical_text, tag);
      this.events.push({ event_id: this.nextEventId, kind: "sentence_tag", payload: tag });
      return json(200, { event_id: this.nextEventId++ });
    }

    if (method === "GET" && path === "/api/findings") {
      return json(200, {
        findings: this.findingNames.map((name, i) => ({ id: i + 1, name })),
        merges: {},
      });
    }

    const evalNext = path.match(/^\/api\/eval\/([^/]+)\/next$/);
    if (method === "GET" && evalNext) {
      const set = this.evalSets.find((s) => s.set_id === evalNext[1]);
      if (!set) return error(404, "unknown_set", `no evaluation set ${evalNext[1]}`);
      const rater = parsed.searchParams.get("rater") ?? "";
      for (const idx of servingOrder(set.studies.length, set.set_id, rater)) {
        const study = set.studies[idx]!;
        if (!this.ratings.has(`${set.set_id}|${study.study_id}|${rater}`)) {
          const item: EvalStudyItem = {
            study_id: study.study_id,
            finding: set.finding,
            pa_image: study.pa_image,
            lateral_image: study.lateral_image,
          };
          return json(200, item);
        }
      }
      return json(200, { done: true });
    }

    const evalRate = path.match(/^\/api\/eval\/([^/]+)\/rating$/);
    if (method === "POST" && evalRate) {
      const set = this.evalSets.find((s) => s.set_id === evalRate[1]);
      if (!set) return error(404, "unknown_set", `no evaluation set ${evalRate[1]}`);
      const body = JSON.parse(String(init?.body ?? "null"));
      if (!body || typeof body.study_id !== "string" || !body.label) {
        return error(400, "malformed_payload", "study_id and label required");
      }
      if (!set.studies.some((s) => s.study_id === body.study_id)) {
        return error(422, "study_not_in_set", `study ${body.study_id} not in set`);
      }
      if (body.finding && body.finding !== set.finding) {
        return error(422, "finding_mismatch", `set rates ${set.finding}`);
      }
      const rating = { ...(body as RatingSubmission), set_id: set.set_id };
      this.ratings.set(`${set.set_id}|${rating.study_id}|${rating.rater_id}`, rating);
      this.events.push({
        event_id: this.nextEventId,
        kind: "study_rating",
        payload: rating,
      });
      return json(200, { event_id: this.nextEventId++ });
    }

    if (method === "GET" && path === "/api/progress") {
      return json(200, {
        sentences: {
          queue_total: this.sentences.length,
          tagged: this.tags.size,
          untagged: this.sentences.filter((s) => !this.tags.has(s.text)).length,
        },
      });
    }

    return error(404, "unknown_route", `${method} ${path}`);
  };

  /** Effective (latest-wins) tag records, like the service's export. */
  exportTags(): TagSubmission[] {
    return [...this.tags.values()];
  }

  /** Effective (latest-wins) rating records. */
  exportRatings(): Array<RatingSubmission & { set_id: string }> {
    return [...this.ratings.values()];
  }

  eventCount(): number {
    return this.events.length;
  }
}

export function makeFixture(nSentences = 30, nStudies = 10): FixtureService {
  const sentences: SentenceItem[] = Array.from({ length: nSentences }, (_, i) => ({
    text: `candidate sentence number ${i}`,
    report_count: 1000 - i * 7,
    occurrence_count: 1100 - i * 7,
    rank: i + 1,
  }));
  const studies: FixtureStudy[] = Array.from({ length: nStudies }, (_, i) => ({
    study_id: `S${String(i).padStart(4, "0")}`,
    pa_image: `/images/S${i}_pa.png`,
    lateral_image: i % 3 === 0 ? "" : `/images/S${i}_lat.png`,
  }));
  return new FixtureService(
    sentences,
    [{ set_id: "set_cm", finding: "cardiomegaly", studies }],
    ["cardiomegaly", "pleural effusion", "nodule", "abnormal aorta"],
  );
}
