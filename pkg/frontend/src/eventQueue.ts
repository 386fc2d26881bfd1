// Interaction events must survive flaky home networks: failed posts stay
// queued and replay in order. Each event carries an idempotency key so a
// retry after an ambiguous failure can never double-log.

import type { ApiClient } from "./api.js";
import type { InteractionEventBody } from "./types.js";

interface QueuedEvent {
  sessionId: string;
  body: InteractionEventBody;
  key: string;
}

export class EventQueue {
  private pending: QueuedEvent[] = [];
  private inFlight: Promise<boolean> | null = null;
  private counter = 0;

  constructor(
    private client: ApiClient,
    private onError: (err: unknown) => void = () => {},
  ) {}

  get pendingCount(): number {
    return this.pending.length;
  }

  enqueue(sessionId: string, body: InteractionEventBody): void {
    this.counter += 1;
    this.pending.push({
      sessionId,
      body,
      key: `evt-${sessionId}-${body.page_id}-${body.kind}-${this.counter}`,
    });
    void this.flush();
  }

  /** Push everything through in order; concurrent callers share one drain. */
  flush(): Promise<boolean> {
    if (!this.inFlight) {
      this.inFlight = this.drain().finally(() => {
        this.inFlight = null;
      });
    }
    return this.inFlight;
  }

  private async drain(): Promise<boolean> {
    while (this.pending.length > 0) {
      const head = this.pending[0]!;
      try {
        await this.client.postEvent(head.sessionId, head.body, head.key);
        this.pending.shift();
      } catch (err) {
        this.onError(err);
        return false;
      }
    }
    return true;
  }
}
