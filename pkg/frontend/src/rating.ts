/**
 * Evaluation-set rating workflow: one study at a time in the service's
 * seeded order, a single present/absent question, advance on acknowledged
 * POST. Reloading the page resumes wherever the service says; nothing
 * about queue position lives in the client.
 */

import type { AnnotationApi } from "./api.js";
import type { EvalStudyItem, RatingLabel, RatingSubmission } from "./types.js";

export type RatingPhase = "loading" | "ready" | "submitting" | "error" | "done";

export class StudyRatingController {
  phase: RatingPhase = "loading";
  current: EvalStudyItem | null = null;
  errorMessage = "";
  lastSubmitted: RatingSubmission | null = null;
  lastStudy: EvalStudyItem | null = null;
  submittedCount = 0;

  private pendingLabel: RatingLabel | null = null;
  private listeners: Array<() => void> = [];

  constructor(
    private readonly api: AnnotationApi,
    private readonly setId: string,
    private readonly raterId: string,
  ) {}

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  async start(): Promise<void> {
    await this.loadNext();
  }

  private async loadNext(): Promise<void> {
    this.phase = "loading";
    this.notify();
    try {
      this.current = await this.api.nextEvalStudy(this.setId, this.raterId);
      this.phase = this.current === null ? "done" : "ready";
      this.errorMessage = "";
      this.pendingLabel = null;
    } catch (err) {
      this.phase = "error";
      this.errorMessage = `could not fetch the next study: ${String(err)}`;
    }
    this.notify();
  }

  /** Studies without a lateral view render single-image. */
  hasLateral(): boolean {
    return this.current !== null && this.current.lateral_image !== "";
  }

  async rate(label: RatingLabel): Promise<void> {
    if (this.phase !== "ready" || this.current === null) return;
    const rating: RatingSubmission = {
      study_id: this.current.study_id,
      finding: this.current.finding,
      rater_id: this.raterId,
      label,
    };
    this.phase = "submitting";
    this.pendingLabel = label;
    this.notify();
    try {
      await this.api.submitRating(this.setId, rating);
    } catch (err) {
      this.phase = "error";
      this.errorMessage = `rating not acknowledged: ${String(err)}`;
      this.notify();
      return;
    }
    this.lastSubmitted = rating;
    this.lastStudy = this.current;
    this.submittedCount += 1;
    await this.loadNext();
  }

  async retry(): Promise<void> {
    if (this.phase !== "error") return;
    if (this.current !== null && this.pendingLabel !== null) {
      this.phase = "ready";
      this.notify();
      await this.rate(this.pendingLabel);
    } else {
      await this.loadNext();
    }
  }

  /** Re-open the last rated study; resubmitting overwrites latest-wins. */
  undo(): void {
    if (this.lastStudy === null || this.phase === "submitting") return;
    this.current = this.lastStudy;
    this.phase = "ready";
    this.errorMessage = "";
    this.notify();
  }
}
