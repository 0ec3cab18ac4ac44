/** Payload shapes of the annotation service API. */

export type Category = "positive" | "negative" | "neutral" | "excluding";

export const CATEGORIES: Category[] = ["positive", "negative", "neutral", "excluding"];

export interface SentenceItem {
  text: string;
  report_count: number;
  occurrence_count: number;
  rank: number;
}

export interface TagSubmission {
  canonical_text: string;
  category: Category;
  findings: string[];
  rater_id: string;
}

export interface FindingInfo {
  id: number;
  name: string;
}

export interface EvalStudyItem {
  study_id: string;
  finding: string;
  pa_image: string;
  lateral_image: string;
}

export type RatingLabel = "present" | "absent";

export interface RatingSubmission {
  study_id: string;
  finding: string;
  rater_id: string;
  label: RatingLabel;
}

export interface Ack {
  event_id: number;
}

export interface ServiceError {
  error: string;
  detail: string;
}
