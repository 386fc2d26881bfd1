// Full parent+child flow against a really served mock backend: avatar →
// framework → session → generate → review (regenerate, then approve) → read
// with interactions (including a voice upload) → post-meal → feedback →
// ending. Skipped automatically when the backend CLI is not installed.

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { AvatarBuilder } from "../src/avatarBuilder.js";
import { EventQueue } from "../src/eventQueue.js";
import { PostMealForm } from "../src/postMealForm.js";
import { Reader } from "../src/reader.js";
import { ReviewConsole } from "../src/review.js";
import { click } from "./helpers.js";

const PORT = 8765 + (process.pid % 500);
const BASE = `http://127.0.0.1:${PORT}`;

const hasBackend =
  spawnSync("storybites", ["--help"], { stdio: "ignore" }).status === 0;

// jsdom replaces some globals; keep Node's real fetch for live HTTP.
const realFetch: typeof fetch = fetch.bind(globalThis);

let server: ChildProcess | null = null;

async function waitForHealth(client: ApiClient): Promise<void> {
  const deadline = Date.now() + 30_000;
  for (;;) {
    try {
      const health = await client.health();
      if (health.status === "ok") return;
    } catch {
      // keep polling
    }
    if (Date.now() > deadline) throw new Error("backend never came up");
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
}

describe.skipIf(!hasBackend)("full flow against a served mock backend", () => {
  const client = new ApiClient({ baseUrl: BASE, fetchImpl: realFetch });
  const queue = new EventQueue(client);

  beforeAll(async () => {
    const dir = mkdtempSync(join(tmpdir(), "sb-e2e-"));
    server = spawn(
      "storybites",
      ["--store", join(dir, "family.db"), "--seed", "11",
       "serve", "--port", String(PORT)],
      { stdio: "ignore" },
    );
    await waitForHealth(client);
  }, 60_000);

  afterAll(() => {
    server?.kill();
  });

  it("completes avatar → review → read → post-meal → feedback → ending", async () => {
    // Parent + child build the avatar.
    const avatarMount = document.createElement("div");
    document.body.appendChild(avatarMount);
    const builder = new AvatarBuilder({ client });
    builder.render(avatarMount);
    builder.setNickname("团团");
    const avatar = (await builder.submit())!;
    expect(avatar.avatar_id).toBeTruthy();

    // Series framework, then a session for tonight's food.
    const fw = await client.createFramework({
      child_id: avatar.avatar_id,
      theme: "菜园里的新朋友",
      mode: "journey_discovery_framework",
    });
    await client.waitForJob(fw.job_id);
    const session = await client.createSession(avatar.avatar_id, "西兰花");
    const gen = await client.generate(session.session_id);
    await client.waitForJob(gen.job_id);

    // Parent reviews: ask for one regeneration, then approve.
    const reviewMount = document.createElement("div");
    document.body.appendChild(reviewMount);
    let approved = false;
    const review = new ReviewConsole({
      client,
      sessionId: session.session_id,
      onApproved: () => (approved = true),
    });
    review.render(reviewMount);
    await review.load();
    expect(reviewMount.querySelectorAll(".review-page").length).toBe(12);
    (reviewMount.querySelector(".regeneration-note") as HTMLTextAreaElement)
      .value = "再活泼一点";
    await review.regenerate();
    await review.approve();
    expect(approved).toBe(true);
    const afterReview = await client.getSession(session.session_id);
    expect(afterReview.state).toBe("StoryReady");
    expect(afterReview.regeneration_count).toBe(1);

    // Child reads: complete every interaction (voice uploads real bytes).
    const view = await client.getEpisode(session.session_id);
    const readerMount = document.createElement("div");
    document.body.appendChild(readerMount);
    let finishedReading = false;
    const reader = new Reader({
      view,
      sessionId: session.session_id,
      client,
      queue,
      recorderFactory: () => ({
        start: async () => {},
        stop: async () => ({
          data: new TextEncoder().encode("fake-audio-bytes").buffer,
          mediaType: "audio/wav",
        }),
      }),
      onFinishReading: () => {
        finishedReading = true;
        void client.readingFinished(session.session_id);
      },
    });
    reader.render(readerMount);

    const interactiveKeys: string[] = [];
    for (let guard = 0; guard < 64; guard++) {
      const page = reader.page();
      const interaction = page.interaction;
      if (interaction && interaction.type !== "none") {
        interactiveKeys.push(interaction.event_key!);
        if (interaction.type === "choice") {
          reader.completeInteraction(page.branch_choices[0]!.choice_id);
        } else if (interaction.type === "record_voice") {
          click(readerMount.querySelector(".voice-start"));
          await reader.completeVoice();
        } else {
          reader.completeInteraction();
        }
      } else if (!reader.skip()) {
        break;
      }
    }
    expect(reader.isTerminal()).toBe(true);
    const flushed = await queue.flush();
    expect(flushed).toBe(true);
    reader.finishReading();
    expect(finishedReading).toBe(true);
    // Give the reading-finished POST a moment to land.
    await new Promise((resolve) => setTimeout(resolve, 400));
    expect((await client.getSession(session.session_id)).state).toBe(
      "ReadDone",
    );

    // Post-meal record: a good night.
    const formMount = document.createElement("div");
    document.body.appendChild(formMount);
    const form = new PostMealForm({
      client,
      sessionId: session.session_id,
      targetFood: "西兰花",
    });
    form.render(formMount);
    form.setScale("try_level", 6);
    form.values.self_rating = 8;
    form.values.self_description = "尝了一小口";
    const ok = await form.submit();
    expect(ok).toBe(true);
    expect(formMount.querySelector(".avatar-face.avatar-happy")).not.toBeNull();
    expect(
      formMount.querySelector(".feedback-text.feedback-praise"),
    ).not.toBeNull();
    expect(formMount.querySelector(".see-ending")).not.toBeNull();

    // The behavior-informed ending, then the session is fully revisited.
    const ending = await client.getEnding(session.session_id);
    expect(ending.episode.pages.length).toBe(4);
    expect(ending.episode.kind).toBe("ending_extension");
    const endingMount = document.createElement("div");
    document.body.appendChild(endingMount);
    const endingReader = new Reader({
      view: ending,
      sessionId: session.session_id,
      client,
      queue,
    });
    endingReader.render(endingMount);
    expect(endingMount.querySelector(".reader-text")!.textContent).toContain(
      "西兰花",
    );
    expect((await client.getSession(session.session_id)).state).toBe(
      "Revisited",
    );

    // Every completed interactive page produced exactly one keyed event.
    expect(new Set(interactiveKeys).size).toBe(interactiveKeys.length);
    expect(interactiveKeys.length).toBeGreaterThanOrEqual(3);
  }, 120_000);
});
