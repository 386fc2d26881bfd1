// Thin typed client over the backend HTTP surface. All state lives server
// side; this module only shapes requests and surfaces {code, detail} errors.

import type {
  Avatar,
  EpisodeView,
  FeedbackView,
  InteractionEventBody,
  Job,
  PostMealInput,
  Session,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    public detail: string,
  ) {
    super(`${code}: ${detail}`);
  }
}

export interface ClientOptions {
  baseUrl?: string;
  token?: string;
  fetchImpl?: typeof fetch;
}

export class ApiClient {
  private baseUrl: string;
  private token?: string;
  private fetchImpl: typeof fetch;

  constructor(options: ClientOptions = {}) {
    this.baseUrl = (options.baseUrl ?? "").replace(/\/$/, "");
    this.token = options.token;
    this.fetchImpl = options.fetchImpl ?? fetch;
  }

  assetUrl(assetId: string): string {
    return `${this.baseUrl}/assets/${assetId}`;
  }

  private headers(extra: Record<string, string> = {}): Record<string, string> {
    const out: Record<string, string> = { ...extra };
    if (this.token) out["Authorization"] = `Bearer ${this.token}`;
    return out;
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
    idempotencyKey?: string,
  ): Promise<T> {
    const headers = this.headers(
      body === undefined ? {} : { "Content-Type": "application/json" },
    );
    if (idempotencyKey) headers["Idempotency-Key"] = idempotencyKey;
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await resp.text();
    const data = text ? JSON.parse(text) : null;
    if (!resp.ok) {
      throw new ApiError(
        resp.status,
        (data && data.code) || "HttpError",
        (data && data.detail) || resp.statusText,
      );
    }
    return data as T;
  }

  health(): Promise<{ status: string; provider: string }> {
    return this.request("GET", "/health");
  }

  createAvatar(input: {
    nickname: string;
    gender?: string;
    clothing?: string;
    accessories?: string[];
  }): Promise<Avatar> {
    return this.request("POST", "/avatars", input);
  }

  getAvatar(id: string): Promise<Avatar> {
    return this.request("GET", `/avatars/${id}`);
  }

  createFramework(input: {
    child_id: string;
    theme?: string;
    mode: string;
  }): Promise<{ job_id: string }> {
    return this.request("POST", "/frameworks", input);
  }

  createSession(childId: string, food: string): Promise<Session> {
    return this.request("POST", "/sessions", { child_id: childId, food });
  }

  getSession(id: string): Promise<Session> {
    return this.request("GET", `/sessions/${id}`);
  }

  generate(
    sessionId: string,
    note?: string,
  ): Promise<{ job_id: string }> {
    return this.request("POST", `/sessions/${sessionId}/generate`, {
      regeneration_note: note ?? null,
    });
  }

  getJob(id: string): Promise<Job> {
    return this.request("GET", `/jobs/${id}`);
  }

  async waitForJob(id: string, timeoutMs = 60_000): Promise<Job> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const job = await this.getJob(id);
      if (job.status === "succeeded") return job;
      if (job.status === "failed") {
        throw new ApiError(502, "GenerationFailed", job.error ?? "job failed");
      }
      if (Date.now() > deadline) {
        throw new ApiError(504, "Timeout", `job ${id} still ${job.status}`);
      }
      await new Promise((resolve) => setTimeout(resolve, 150));
    }
  }

  getEpisode(sessionId: string): Promise<EpisodeView> {
    return this.request("GET", `/sessions/${sessionId}/episode`);
  }

  review(
    sessionId: string,
    action: "approve" | "regenerate",
    note?: string,
  ): Promise<Record<string, unknown>> {
    return this.request("POST", `/sessions/${sessionId}/review`, {
      action,
      note: note ?? null,
    });
  }

  postEvent(
    sessionId: string,
    event: InteractionEventBody,
    idempotencyKey?: string,
  ): Promise<unknown> {
    return this.request(
      "POST",
      `/sessions/${sessionId}/events`,
      event,
      idempotencyKey,
    );
  }

  readingFinished(sessionId: string): Promise<Session> {
    return this.request("POST", `/sessions/${sessionId}/reading-finished`);
  }

  postMeal(
    sessionId: string,
    input: PostMealInput,
  ): Promise<{ session: Session; job_id: string }> {
    return this.request("POST", `/sessions/${sessionId}/post-meal`, input);
  }

  getFeedback(sessionId: string): Promise<FeedbackView> {
    return this.request("GET", `/sessions/${sessionId}/feedback`);
  }

  getEnding(sessionId: string): Promise<EpisodeView> {
    return this.request("GET", `/sessions/${sessionId}/ending`);
  }

  library(childId: string): Promise<{ child: Avatar; sessions: Session[] }> {
    return this.request("GET", `/children/${childId}/library`);
  }

  async uploadAsset(data: Blob | ArrayBuffer, mediaType: string): Promise<string> {
    const resp = await this.fetchImpl(`${this.baseUrl}/assets`, {
      method: "POST",
      headers: this.headers({ "Content-Type": mediaType }),
      body: data,
    });
    const body = await resp.json();
    if (!resp.ok) {
      throw new ApiError(resp.status, body.code ?? "HttpError", body.detail ?? "");
    }
    return body.asset_id as string;
  }
}
