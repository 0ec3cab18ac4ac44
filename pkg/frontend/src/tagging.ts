/**
 * Sentence tagging workflow: serve the queue top-down, collect a category
 * plus findings for positives, advance only once the service acknowledges
 * the POST. The service is the only authority on queue position; this
 * controller holds nothing a reload could lose except the in-progress,
 * unsubmitted selection.
 */

import type { AnnotationApi } from "./api.js";
import type { Category, SentenceItem, TagSubmission } from "./types.js";

export type TaggingPhase = "loading" | "ready" | "submitting" | "error" | "done";

export class SentenceTaggingController {
  phase: TaggingPhase = "loading";
  current: SentenceItem | null = null;
  category: Category | null = null;
  selectedFindings = new Set<string>();
  errorMessage = "";
  /** Last acknowledged submission; undo restores it for a latest-wins resubmit. */
  lastSubmitted: TagSubmission | null = null;
  submittedCount = 0;

  private listeners: Array<() => void> = [];

  constructor(
    private readonly api: AnnotationApi,
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
      this.current = await this.api.nextSentence(this.raterId);
      this.category = null;
      this.selectedFindings.clear();
      this.phase = this.current === null ? "done" : "ready";
      this.errorMessage = "";
    } catch (err) {
      this.phase = "error";
      this.errorMessage = `could not fetch the next sentence: ${String(err)}`;
    }
    this.notify();
  }

  setCategory(category: Category): void {
    if (this.phase !== "ready") return;
    this.category = category;
    if (category !== "positive") this.selectedFindings.clear();
    this.notify();
  }

  toggleFinding(name: string): void {
    if (this.phase !== "ready") return;
    if (this.selectedFindings.has(name)) {
      this.selectedFindings.delete(name);
    } else {
      this.selectedFindings.add(name);
    }
    this.notify();
  }

  /** Positive tags need at least one finding; everything else just a category. */
  canSubmit(): boolean {
    return (
      this.phase === "ready" &&
      this.current !== null &&
      this.category !== null &&
      (this.category !== "positive" || this.selectedFindings.size > 0)
    );
  }

  async submit(): Promise<void> {
    if (!this.canSubmit() || this.current === null || this.category === null) return;
    const tag: TagSubmission = {
      canonical_text: this.current.text,
      category: this.category,
      findings: [...this.selectedFindings].sort(),
      rater_id: this.raterId,
    };
    this.phase = "submitting";
    this.notify();
    try {
      await this.api.submitTag(tag);
    } catch (err) {
      // keep the item and selection on screen; the banner offers a retry
      this.phase = "error";
      this.errorMessage = `submission not acknowledged: ${String(err)}`;
      this.notify();
      return;
    }
    this.lastSubmitted = tag;
    this.submittedCount += 1;
    await this.loadNext();
  }

  /** Retry after a failed fetch or an unacknowledged submission. */
  async retry(): Promise<void> {
    if (this.phase !== "error") return;
    if (this.current !== null && this.category !== null) {
      this.phase = "ready";
      this.notify();
      await this.submit();
    } else {
      await this.loadNext();
    }
  }

  /**
   * Pull the last acknowledged tag back on screen for correction; the
   * resubmission overwrites it (the service resolves latest-wins).
   */
  undo(): void {
    if (this.lastSubmitted === null || this.phase === "submitting") return;
    this.current = {
      text: this.lastSubmitted.canonical_text,
      report_count: 0,
      occurrence_count: 0,
      rank: 0,
    };
    this.category = this.lastSubmitted.category;
    this.selectedFindings = new Set(this.lastSubmitted.findings);
    this.phase = "ready";
    this.errorMessage = "";
    this.notify();
  }
}
