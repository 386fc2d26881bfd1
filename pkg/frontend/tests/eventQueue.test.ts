// Event queue: order preserved, failures retried, idempotency keys stable.

import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { EventQueue } from "../src/eventQueue.js";
import { FakeBackend, settle } from "./helpers.js";

function queueRig() {
  const backend = new FakeBackend();
  const client = new ApiClient({
    baseUrl: "http://test",
    fetchImpl: backend.fetch,
  });
  const queue = new EventQueue(client);
  return { backend, client, queue };
}

const EVENT = {
  page_id: "p03",
  event_key: "tap_03",
  kind: "tap" as const,
  choice_branch: null,
  audio_asset: null,
};

describe("event queue", () => {
  it("delivers immediately when the network is up", async () => {
    const { backend, queue } = queueRig();
    queue.enqueue("s1", EVENT);
    await settle();
    expect(backend.events.length).toBe(1);
    expect(queue.pendingCount).toBe(0);
  });

  it("keeps failed events and replays them in order", async () => {
    const { backend, queue } = queueRig();
    backend.failNextEvents = 2;
    queue.enqueue("s1", EVENT);
    queue.enqueue("s1", { ...EVENT, page_id: "p05", event_key: "tap_05" });
    await settle();
    expect(backend.events.length).toBe(0);
    expect(queue.pendingCount).toBe(2);
    await queue.flush(); // one failure left from failNextEvents
    await queue.flush();
    await settle();
    expect(backend.events.map((e) => e.page_id)).toEqual(["p03", "p05"]);
    expect(queue.pendingCount).toBe(0);
  });

  it("sends a stable idempotency key per event", async () => {
    const { backend, queue } = queueRig();
    backend.failNextEvents = 1;
    queue.enqueue("s1", EVENT);
    await settle();
    await queue.flush();
    await settle();
    const keys = backend.requests
      .filter((r) => r.path.endsWith("/events"))
      .map((r) => r.headers["Idempotency-Key"]);
    expect(keys.length).toBe(2);
    expect(keys[0]).toBe(keys[1]); // retry replays the same key
  });
});
