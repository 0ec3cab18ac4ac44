/**
 * UI round trip against the fixture service: tag 20 sentences, rate 10
 * studies, check every submission appears exactly once in the export,
 * and confirm a "page reload" (fresh controllers, same service) resumes
 * at the correct queue position.
 */

import { describe, expect, it } from "vitest";

import { AnnotationApi } from "../src/api.js";
import { StudyRatingController } from "../src/rating.js";
import { SentenceTaggingController } from "../src/tagging.js";
import { makeFixture } from "./fixture_service.js";

function apiFor(fixture: ReturnType<typeof makeFixture>): AnnotationApi {
  return new AnnotationApi("", fixture.fetch);
}

describe("round trip", () => {
  it("tags 20 sentences; each appears exactly once in the export", async () => {
    const fixture = makeFixture(30);
    const controller = new SentenceTaggingController(apiFor(fixture), "rad_a");
    await controller.start();

    for (let i = 0; i < 20; i++) {
      expect(controller.phase).toBe("ready");
      if (i % 3 === 0) {
        controller.setCategory("positive");
        controller.toggleFinding("cardiomegaly");
        if (i % 6 === 0) controller.toggleFinding("nodule");
      } else if (i % 3 === 1) {
        controller.setCategory("negative");
      } else {
        controller.setCategory("neutral");
      }
      await controller.submit();
    }

    expect(controller.submittedCount).toBe(20);
    const exported = fixture.exportTags();
    expect(exported).toHaveLength(20);
    const texts = exported.map((t) => t.canonical_text);
    expect(new Set(texts).size).toBe(20);
    // the queue is served top-down: exactly the 20 highest-ranked sentences
    for (let i = 0; i < 20; i++) {
      expect(texts).toContain(`candidate sentence number ${i}`);
    }
    expect(fixture.eventCount()).toBe(20);
  });

  it("rates 10 studies; each appears exactly once in the export", async () => {
    const fixture = makeFixture(5, 10);
    const controller = new StudyRatingController(apiFor(fixture), "set_cm", "rad_b");
    await controller.start();

    let guard = 0;
    while (controller.phase === "ready" && guard++ < 20) {
      await controller.rate(guard % 2 ? "present" : "absent");
    }

    expect(controller.phase).toBe("done");
    expect(controller.submittedCount).toBe(10);
    const exported = fixture.exportRatings();
    expect(exported).toHaveLength(10);
    expect(new Set(exported.map((r) => r.study_id)).size).toBe(10);
    expect(exported.every((r) => r.rater_id === "rad_b")).toBe(true);
  });

  it("reload resumes the tagging queue at the correct position", async () => {
    const fixture = makeFixture(30);
    const first = new SentenceTaggingController(apiFor(fixture), "rad_a");
    await first.start();
    for (let i = 0; i < 7; i++) {
      first.setCategory("negative");
      await first.submit();
    }
    expect(first.current?.text).toBe("candidate sentence number 7");

    // page reload: brand-new controller, no client state carried over
    const reloaded = new SentenceTaggingController(apiFor(fixture), "rad_a");
    await reloaded.start();
    expect(reloaded.phase).toBe("ready");
    expect(reloaded.current?.text).toBe("candidate sentence number 7");
    expect(fixture.exportTags()).toHaveLength(7);
  });

  it("reload resumes the rating queue at the correct position", async () => {
    const fixture = makeFixture(5, 10);
    const first = new StudyRatingController(apiFor(fixture), "set_cm", "rad_c");
    await first.start();
    const served: string[] = [];
    for (let i = 0; i < 4; i++) {
      served.push(first.current!.study_id);
      await first.rate("present");
    }
    const expectedNext = first.current!.study_id;

    const reloaded = new StudyRatingController(apiFor(fixture), "set_cm", "rad_c");
    await reloaded.start();
    expect(reloaded.current?.study_id).toBe(expectedNext);
    expect(served).not.toContain(expectedNext);
    expect(fixture.exportRatings()).toHaveLength(4);
  });

  it("different raters get independent queues over the same set", async () => {
    const fixture = makeFixture(5, 10);
    const a = new StudyRatingController(apiFor(fixture), "set_cm", "rad_a");
    const b = new StudyRatingController(apiFor(fixture), "set_cm", "rad_b");
    await a.start();
    await b.start();
    for (let i = 0; i < 10; i++) await a.rate("present");
    expect(a.phase).toBe("done");
    expect(b.phase).toBe("ready"); // b still has its whole queue
    await b.rate("absent");
    expect(fixture.exportRatings()).toHaveLength(11);
  });
});
