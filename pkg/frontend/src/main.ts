/**
 * Browser entry point: wires the two workflow controllers to the DOM.
 *
 * Configuration comes from the URL: ?rater=R picks the rater token,
 * ?set=ID switches to study rating for that evaluation set, ?api=URL
 * points at a non-same-origin service. Sentence tagging is the default
 * mode.
 *
 * Keys — tagging: 1..4 categories, Enter submit, u undo, / focus search.
 * Rating: p present, a absent, u undo, z toggle 1:1 pixels.
 */

import { AnnotationApi } from "./api.js";
import { createHotkeyHandler } from "./hotkeys.js";
import { StudyRatingController } from "./rating.js";
import { SentenceTaggingController } from "./tagging.js";
import { CATEGORIES, type Category, type FindingInfo } from "./types.js";

const params = new URLSearchParams(window.location.search);
const raterId = params.get("rater") ?? localStorage.getItem("cxrmine_rater") ?? "";
const setId = params.get("set");
const api = new AnnotationApi(params.get("api") ?? "");

const app = document.getElementById("app")!;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = "",
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function renderRaterGate(): void {
  app.replaceChildren();
  const box = el("div", "panel");
  box.append(el("h2", "", "Who is tagging?"));
  const input = el("input");
  input.placeholder = "rater id, e.g. rad_a";
  const button = el("button", "primary", "Start");
  button.onclick = () => {
    if (!input.value.trim()) return;
    localStorage.setItem("cxrmine_rater", input.value.trim());
    const next = new URL(window.location.href);
    next.searchParams.set("rater", input.value.trim());
    window.location.href = next.toString();
  };
  box.append(input, button);
  app.append(box);
}

// ---------------------------------------------------------------------------
// sentence tagging

const CATEGORY_KEYS: Record<string, Category> = {
  "1": "positive",
  "2": "negative",
  "3": "neutral",
  "4": "excluding",
};

async function runTagging(): Promise<void> {
  const controller = new SentenceTaggingController(api, raterId);
  let findings: FindingInfo[] = [];
  try {
    findings = await api.findings();
  } catch {
    app.replaceChildren(el("div", "banner error", "service unreachable; reload to retry"));
    return;
  }
  let search = "";

  function render(): void {
    app.replaceChildren();
    const panel = el("div", "panel");
    panel.append(el("h2", "", "Sentence tagging"));

    if (controller.phase === "done") {
      panel.append(el("p", "done", "Queue exhausted — every candidate sentence is tagged."));
      panel.append(el("p", "", `${controller.submittedCount} tags submitted this session.`));
      app.append(panel);
      return;
    }
    if (controller.phase === "loading") {
      panel.append(el("p", "", "loading..."));
      app.append(panel);
      return;
    }
    if (controller.errorMessage) {
      const banner = el("div", "banner error", controller.errorMessage + " ");
      const retry = el("button", "", "Retry");
      retry.onclick = () => void controller.retry();
      banner.append(retry);
      panel.append(banner);
    }

    const sentence = controller.current;
    if (sentence) {
      panel.append(el("blockquote", "sentence", sentence.text));
      if (sentence.rank > 0) {
        panel.append(
          el("p", "meta",
             `rank ${sentence.rank} · appears in ${sentence.report_count} reports`),
        );
      } else {
        panel.append(el("p", "meta", "resubmission (undo) — latest tag wins"));
      }

      const categoryRow = el("div", "categories");
      CATEGORIES.forEach((category, i) => {
        const button = el(
          "button",
          "category" + (controller.category === category ? " selected" : ""),
          `${i + 1} ${category}`,
        );
        button.onclick = () => controller.setCategory(category);
        categoryRow.append(button);
      });
      panel.append(categoryRow);

      if (controller.category === "positive") {
        const box = el("div", "findings");
        const searchInput = el("input");
        searchInput.id = "finding-search";
        searchInput.placeholder = "search findings... (/)";
        searchInput.value = search;
        searchInput.oninput = () => {
          search = searchInput.value;
          renderList();
        };
        const list = el("div", "finding-list");
        const renderList = () => {
          list.replaceChildren();
          const needle = search.trim().toLowerCase();
          for (const finding of findings) {
            if (needle && !finding.name.includes(needle)) continue;
            const item = el(
              "label",
              "finding" +
                (controller.selectedFindings.has(finding.name) ? " selected" : ""),
            );
            const checkbox = el("input");
            checkbox.type = "checkbox";
            checkbox.checked = controller.selectedFindings.has(finding.name);
            checkbox.onchange = () => controller.toggleFinding(finding.name);
            item.append(checkbox, ` ${finding.id}. ${finding.name}`);
            list.append(item);
          }
        };
        renderList();
        box.append(searchInput, list);
        panel.append(box);
      }

      const submit = el("button", "primary", "Submit (Enter)");
      submit.disabled = !controller.canSubmit();
      submit.onclick = () => void controller.submit();
      panel.append(submit);
      if (controller.lastSubmitted) {
        const undo = el("button", "", "Undo last (u)");
        undo.onclick = () => controller.undo();
        panel.append(undo);
      }
    }
    app.append(panel);

    const focused = document.getElementById("finding-search");
    if (focused instanceof HTMLInputElement && search) focused.focus();
  }

  controller.onChange(render);
  document.addEventListener(
    "keydown",
    createHotkeyHandler({
      "1": () => controller.setCategory(CATEGORY_KEYS["1"]!),
      "2": () => controller.setCategory(CATEGORY_KEYS["2"]!),
      "3": () => controller.setCategory(CATEGORY_KEYS["3"]!),
      "4": () => controller.setCategory(CATEGORY_KEYS["4"]!),
      enter: () => void controller.submit(),
      u: () => controller.undo(),
      "/": () => document.getElementById("finding-search")?.focus(),
    }),
  );
  await controller.start();
}

// ---------------------------------------------------------------------------
// study rating

async function runRating(set: string): Promise<void> {
  const controller = new StudyRatingController(api, set, raterId);
  let oneToOne = false;

  function imagePane(src: string, label: string): HTMLElement {
    const pane = el("figure", "view");
    pane.append(el("figcaption", "", label));
    if (!src) {
      pane.append(el("div", "placeholder", "no image reference"));
      return pane;
    }
    const img = el("img");
    img.src = src;
    img.className = oneToOne ? "one-to-one" : "fit";
    img.onerror = () => {
      // missing asset: placeholder plus warning, rating stays possible
      img.replaceWith(el("div", "placeholder warn", `image missing: ${src}`));
    };
    // wheel zooms, dragging pans (via the pane's scroll box)
    let scale = 1;
    pane.onwheel = (e) => {
      e.preventDefault();
      scale = Math.min(8, Math.max(0.25, scale * (e.deltaY < 0 ? 1.1 : 1 / 1.1)));
      img.style.transformOrigin = "0 0";
      img.style.transform = scale === 1 ? "" : `scale(${scale})`;
    };
    let dragging = false;
    let startX = 0, startY = 0, scrollX = 0, scrollY = 0;
    img.onmousedown = (e) => {
      dragging = true;
      startX = e.clientX;
      startY = e.clientY;
      scrollX = pane.scrollLeft;
      scrollY = pane.scrollTop;
      e.preventDefault();
    };
    pane.onmousemove = (e) => {
      if (!dragging) return;
      pane.scrollLeft = scrollX - (e.clientX - startX);
      pane.scrollTop = scrollY - (e.clientY - startY);
    };
    pane.onmouseup = pane.onmouseleave = () => (dragging = false);
    pane.append(img);
    return pane;
  }

  function render(): void {
    app.replaceChildren();
    const panel = el("div", "panel wide");
    panel.append(el("h2", "", `Study rating — ${set}`));

    if (controller.phase === "done") {
      panel.append(el("p", "done", "Set complete — every study is rated."));
      panel.append(el("p", "", `${controller.submittedCount} ratings this session.`));
      app.append(panel);
      return;
    }
    if (controller.phase === "loading") {
      panel.append(el("p", "", "loading..."));
      app.append(panel);
      return;
    }
    if (controller.errorMessage) {
      const banner = el("div", "banner error", controller.errorMessage + " ");
      const retry = el("button", "", "Retry");
      retry.onclick = () => void controller.retry();
      banner.append(retry);
      panel.append(banner);
    }

    const study = controller.current;
    if (study) {
      panel.append(
        el("p", "question",
           `Is "${study.finding}" present on study ${study.study_id}?`),
      );
      const views = el("div", controller.hasLateral() ? "views dual" : "views single");
      views.append(imagePane(study.pa_image, "PA"));
      if (controller.hasLateral()) {
        views.append(imagePane(study.lateral_image, "Lateral"));
      }
      panel.append(views);

      const row = el("div", "answers");
      const present = el("button", "primary", "Present (p)");
      present.onclick = () => void controller.rate("present");
      const absent = el("button", "primary", "Absent (a)");
      absent.onclick = () => void controller.rate("absent");
      const zoom = el("button", "", oneToOne ? "Fit view (z)" : "1:1 pixels (z)");
      zoom.onclick = () => {
        oneToOne = !oneToOne;
        render();
      };
      row.append(present, absent, zoom);
      if (controller.lastStudy) {
        const undo = el("button", "", "Undo last (u)");
        undo.onclick = () => controller.undo();
        row.append(undo);
      }
      panel.append(row);
    }
    app.append(panel);
  }

  controller.onChange(render);
  document.addEventListener(
    "keydown",
    createHotkeyHandler({
      p: () => void controller.rate("present"),
      a: () => void controller.rate("absent"),
      u: () => controller.undo(),
      z: () => {
        oneToOne = !oneToOne;
        render();
      },
    }),
  );
  await controller.start();
}

if (!raterId) {
  renderRaterGate();
} else if (setId) {
  void runRating(setId);
} else {
  void runTagging();
}
