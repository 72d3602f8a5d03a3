// Live event tail: since-cursor polling with automatic resume. A dropped
// or restarted poller picks up from the state's cursor, so no events are
// lost or rendered out of order across reconnects.

import type { ApiClient } from './api.js';
import type { ConsoleState } from './state.js';

export interface TailOptions {
  intervalMs?: number;
  waitMs?: number;
  onEvents?: (added: number) => void;
  onError?: (err: unknown) => void;
}

export class EventTail {
  private running = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private client: ApiClient,
    private state: ConsoleState,
    private options: TailOptions = {},
  ) {}

  get isRunning(): boolean {
    return this.running;
  }

  /** One polling round; safe to call directly (tests do). */
  async pollOnce(): Promise<number> {
    if (!this.state.sessionId) return 0;
    const resp = await this.client.getEvents(
      this.state.sessionId,
      this.state.cursor,
      this.options.waitMs ?? 0,
    );
    const added = this.state.ingestEvents(resp.events);
    if (added > 0) this.options.onEvents?.(added);
    return added;
  }

  start(): void {
    if (this.running) return;
    this.running = true;
    const loop = async () => {
      if (!this.running) return;
      try {
        await this.pollOnce();
      } catch (err) {
        this.options.onError?.(err);
      }
      if (this.running) {
        this.timer = setTimeout(loop, this.options.intervalMs ?? 400);
      }
    };
    void loop();
  }

  stop(): void {
    this.running = false;
    if (this.timer) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  /** Simulates a dropped stream: tear down, then resume from the cursor. */
  forceReconnect(): void {
    this.stop();
    this.start();
  }
}
