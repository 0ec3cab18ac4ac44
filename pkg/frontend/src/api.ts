/**
 * Thin fetch client for the annotation service.
 *
 * The fetch implementation is injectable so tests can run the client
 * against an in-memory fixture service; the browser entry point passes
 * nothing and gets window.fetch.
 */

import type {
  Ack,
  EvalStudyItem,
  FindingInfo,
  RatingSubmission,
  SentenceItem,
  TagSubmission,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    detail: string,
  ) {
    super(`${code}: ${detail}`);
  }
}

async function parseError(res: Response): Promise<ApiError> {
  let code = "http_error";
  let detail = res.statusText;
  try {
    const body = await res.json();
    if (body && typeof body.error === "string") {
      code = body.error;
      detail = body.detail ?? detail;
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(res.status, code, detail);
}

export class AnnotationApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async get<T>(path: string): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path);
    if (!res.ok) throw await parseError(res);
    return res.json();
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) throw await parseError(res);
    return res.json();
  }

  /** Next untagged candidate sentence, or null when the queue is done. */
  async nextSentence(rater: string): Promise<SentenceItem | null> {
    const body = await this.get<SentenceItem & { done?: boolean }>(
      `/api/sentences/next?rater=${encodeURIComponent(rater)}`,
    );
    return body.done ? null : body;
  }

  async submitTag(tag: TagSubmission): Promise<number> {
    const ack = await this.post<Ack>("/api/sentences/tag", tag);
    return ack.event_id;
  }

  async findings(): Promise<FindingInfo[]> {
    const body = await this.get<{ findings: FindingInfo[] }>("/api/findings");
    return body.findings;
  }

  /** Next unrated study of the set for this rater, or null when done. */
  async nextEvalStudy(setId: string, rater: string): Promise<EvalStudyItem | null> {
    const body = await this.get<EvalStudyItem & { done?: boolean }>(
      `/api/eval/${encodeURIComponent(setId)}/next?rater=${encodeURIComponent(rater)}`,
    );
    return body.done ? null : body;
  }

  async submitRating(setId: string, rating: RatingSubmission): Promise<number> {
    const ack = await this.post<Ack>(
      `/api/eval/${encodeURIComponent(setId)}/rating`,
      rating,
    );
    return ack.event_id;
  }

  async progress(): Promise<unknown> {
    return this.get("/api/progress");
  }
}
