// Shared test plumbing: an in-memory fetch fake capturing event posts, and a
// corpus loader for the validated episode fixtures.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { ApiClient } from "../src/api.js";
import { EventQueue } from "../src/eventQueue.js";
import type { EpisodeView, InteractionEventBody } from "../src/types.js";

const HERE = dirname(fileURLToPath(import.meta.url));

export function loadCorpus(): EpisodeView[] {
  const raw = readFileSync(join(HERE, "fixtures", "corpus.json"), "utf-8");
  return JSON.parse(raw) as EpisodeView[];
}

export interface CapturedRequest {
  method: string;
  path: string;
  body: unknown;
  headers: Record<string, string>;
}

export class FakeBackend {
  requests: CapturedRequest[] = [];
  events: InteractionEventBody[] = [];
  failNextEvents = 0;
  responders = new Map<string, (req: CapturedRequest) => [number, unknown]>();

  fetch: typeof fetch = (async (input: any, init: any = {}) => {
    const url = typeof input === "string" ? input : input.url;
    const path = url.replace(/^[a-z]+:\/\/[^/]+/, "");
    const method = init.method ?? "GET";
    const body = init.body ? JSON.parse(init.body as string) : undefined;
    const req: CapturedRequest = {
      method,
      path,
      body,
      headers: (init.headers ?? {}) as Record<string, string>,
    };
    this.requests.push(req);

    if (method === "POST" && /\/sessions\/[^/]+\/events$/.test(path)) {
      if (this.failNextEvents > 0) {
        this.failNextEvents -= 1;
        throw new TypeError("network down");
      }
      this.events.push(body as InteractionEventBody);
      return jsonResponse(201, { ok: true });
    }
    const responder = this.responders.get(`${method} ${path}`);
    if (responder) {
      const [status, payload] = responder(req);
      return jsonResponse(status, payload);
    }
    return jsonResponse(404, { code: "NotFound", detail: path });
  }) as typeof fetch;
}

function jsonResponse(status: number, payload: unknown): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export function rig(view?: EpisodeView) {
  const backend = new FakeBackend();
  const client = new ApiClient({ baseUrl: "http://test", fetchImpl: backend.fetch });
  const queue = new EventQueue(client);
  const mount = document.createElement("div");
  document.body.appendChild(mount);
  return { backend, client, queue, mount, view };
}

export function click(el: Element | null): void {
  if (!el) throw new Error("element not found");
  (el as HTMLElement).dispatchEvent(
    new MouseEvent("click", { bubbles: true }),
  );
}

export async function settle(): Promise<void> {
  // Let queued microtasks (event queue flush, fetch promises) finish.
  for (let i = 0; i < 10; i++) {
    await new Promise((resolve) => setTimeout(resolve, 0));
  }
}
