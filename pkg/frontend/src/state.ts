// Console state: the event cursor is monotone, events stay seq-ordered and
// deduplicated no matter how raggedly they arrive (reconnects re-deliver).

import type { Citation, LogEvent, Plan } from './api.js';

export interface TranscriptEntry {
  role: 'user' | 'assistant' | 'error';
  text: string;
  route?: string;
  citations?: Citation[];
  lowConfidence?: boolean;
  errorCode?: string;
}

export class ConsoleState {
  sessionId: string | null = null;
  transcript: TranscriptEntry[] = [];
  plan: Plan | null = null;
  events: LogEvent[] = [];
  artifacts: string[] = [];

  private seen = new Set<number>();
  private _cursor = 0;

  get cursor(): number {
    return this._cursor;
  }

  reset(sessionId: string): void {
    this.sessionId = sessionId;
    this.transcript = [];
    this.plan = null;
    this.events = [];
    this.artifacts = [];
    this.seen = new Set();
    this._cursor = 0;
  }

  /** Merge an event batch; returns how many were new. Order and the cursor
   *  survive duplicates and out-of-order delivery. */
  ingestEvents(batch: LogEvent[]): number {
    let added = 0;
    for (const event of batch) {
      if (this.seen.has(event.seq)) continue;
      this.seen.add(event.seq);
      this.events.push(event);
      added += 1;
    }
    if (added > 0) {
      this.events.sort((a, b) => a.seq - b.seq);
      const last = this.events[this.events.length - 1].seq;
      if (last > this._cursor) this._cursor = last; // cursor never moves back
    }
    return added;
  }

  eventsOfKind(kind?: string): LogEvent[] {
    if (!kind) return this.events;
    return this.events.filter((e) => e.kind === kind);
  }
}
