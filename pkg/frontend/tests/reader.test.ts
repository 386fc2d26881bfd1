// Reader contract: renders every validated episode, emits exactly one event
// per completed interactive page, honors branch choices, and keeps the
// terminal page finish-only.

import { describe, expect, it } from "vitest";

import { Reader } from "../src/reader.js";
import type { EpisodeView, Page } from "../src/types.js";
import { click, loadCorpus, rig, settle } from "./helpers.js";

const corpus = loadCorpus();

function makeReader(view: EpisodeView, onFinish?: () => void) {
  const { backend, client, queue, mount } = rig();
  const reader = new Reader({
    view,
    sessionId: "sess-test",
    client,
    queue,
    onFinishReading: onFinish,
  });
  reader.render(mount);
  return { reader, backend, mount };
}

function interactionButton(mount: HTMLElement): HTMLButtonElement | null {
  return mount.querySelector(
    ".interaction-action, .choice-button, .voice-skip-done",
  );
}

describe("corpus rendering", () => {
  it("renders all 50 validated episodes with zero errors", () => {
    expect(corpus.length).toBe(50);
    for (const view of corpus) {
      const { reader, mount } = makeReader(view);
      expect(mount.querySelector(".reader-page")).not.toBeNull();
      expect(mount.querySelector(".reader-text")!.textContent).toBe(
        view.episode.pages[0]!.page_text_cn,
      );
      // Walk the whole book by skipping; every hop must render.
      let hops = 0;
      while (reader.skip() && hops < 50) {
        hops += 1;
        expect(mount.querySelector(".reader-page")).not.toBeNull();
      }
      expect(reader.isTerminal()).toBe(true);
      expect(mount.querySelector(".finish-reading")).not.toBeNull();
      expect(mount.querySelector(".nav-next, .nav-skip")).toBeNull();
      mount.remove();
    }
  });

  it("renders exactly two buttons on every choice page", () => {
    let checked = 0;
    for (const view of corpus) {
      const choicePage = view.episode.pages.find(
        (p) => p.interaction?.type === "choice",
      );
      if (!choicePage) continue;
      const { reader, mount } = makeReader(view);
      while (reader.page().page_id !== choicePage.page_id) reader.skip();
      const buttons = mount.querySelectorAll(".choice-button");
      expect(buttons.length).toBe(2);
      checked += 1;
      mount.remove();
    }
    expect(checked).toBeGreaterThan(0);
  });
});

describe("event emission", () => {
  it("each completed interactive page emits exactly one correctly keyed event", async () => {
    const view = corpus.find((v) =>
      v.episode.pages.some((p) => p.interaction?.type === "tap"),
    )!;
    const { reader, backend, mount } = makeReader(view);
    const interactive: Page[] = view.episode.pages.filter(
      (p) => p.interaction && p.interaction.type !== "none",
    );
    for (;;) {
      const page = reader.page();
      if (page.interaction && page.interaction.type !== "none") {
        const button = interactionButton(mount);
        if (page.interaction.type === "choice") {
          click(mount.querySelector(".choice-button"));
        } else {
          click(button);
        }
        await settle();
      } else if (!reader.skip()) {
        break;
      }
      if (reader.isTerminal()) break;
    }
    await settle();
    const keys = backend.events.map((e) => e.event_key).sort();
    const expected = interactive
      .map((p) => p.interaction!.event_key!)
      .sort();
    expect(keys).toEqual(expected);
    const pages = new Set(backend.events.map((e) => e.page_id));
    expect(pages.size).toBe(backend.events.length);
  });

  it("completing the same page twice emits only once", async () => {
    const view = corpus.find((v) =>
      v.episode.pages.some((p) => p.interaction?.type === "tap"),
    )!;
    const { reader, backend } = makeReader(view);
    const tapPage = view.episode.pages.find(
      (p) => p.interaction?.type === "tap",
    )!;
    while (reader.page().page_id !== tapPage.page_id) reader.skip();
    expect(reader.completeInteraction()).toBe(true);
    await settle();
    // Reader advanced; force a second completion attempt on the same page.
    expect(backend.events.length).toBe(1);
  });

  it("skipping an interactive page emits nothing", async () => {
    const view = corpus.find((v) =>
      v.episode.pages.some((p) => p.interaction?.type === "tap"),
    )!;
    const { reader, backend } = makeReader(view);
    while (!reader.isTerminal()) {
      if (!reader.skip()) break;
    }
    await settle();
    expect(backend.events.length).toBe(0);
  });
});

describe("branch navigation", () => {
  it("follows the selected branch and only that branch", async () => {
    const view = corpus.find((v) =>
      v.episode.pages.some((p) => p.interaction?.type === "choice"),
    )!;
    const choicePage = view.episode.pages.find(
      (p) => p.interaction?.type === "choice",
    )!;
    const { reader, backend } = makeReader(view);
    while (reader.page().page_id !== choicePage.page_id) reader.skip();
    const target = choicePage.branch_choices[1]!;
    expect(reader.completeInteraction(target.choice_id)).toBe(true);
    expect(reader.page().page_id).toBe(target.next_page_id);
    await settle();
    expect(backend.events[0]!.kind).toBe("choice_selected");
    expect(backend.events[0]!.choice_branch).toBe(target.choice_id);
    expect(reader.state.selectedBranches[choicePage.page_id]).toBe(
      target.choice_id,
    );
  });

  it("skipping a choice follows the default next pointer", () => {
    const view = corpus.find((v) =>
      v.episode.pages.some((p) => p.interaction?.type === "choice"),
    )!;
    const choicePage = view.episode.pages.find(
      (p) => p.interaction?.type === "choice",
    )!;
    const { reader } = makeReader(view);
    while (reader.page().page_id !== choicePage.page_id) reader.skip();
    reader.skip();
    expect(reader.page().page_id).toBe(choicePage.next_page_id);
  });
});

describe("reader state invariants", () => {
  it("visited is a root-connected path to the current page", () => {
    for (const view of corpus.slice(0, 10)) {
      const { reader } = makeReader(view);
      const byId = new Map(view.episode.pages.map((p) => [p.page_id, p]));
      while (reader.skip()) {
        const visited = reader.state.visited;
        expect(visited[0]).toBe(view.episode.pages[0]!.page_id);
        expect(visited[visited.length - 1]).toBe(reader.state.currentPageId);
        for (let i = 1; i < visited.length; i++) {
          const prev = byId.get(visited[i - 1]!)!;
          const successors = [
            ...prev.branch_choices.map((bc) => bc.next_page_id),
            prev.next_page_id,
          ];
          expect(successors).toContain(visited[i]!);
        }
      }
    }
  });

  it("finish control notifies once", () => {
    const view = corpus[0]!;
    let finished = 0;
    const { reader, mount } = makeReader(view, () => (finished += 1));
    while (reader.skip()) { /* walk to the end */ }
    click(mount.querySelector(".finish-reading"));
    click(mount.querySelector(".finish-reading"));
    expect(finished).toBe(1);
    expect(reader.state.finished).toBe(true);
  });
});
