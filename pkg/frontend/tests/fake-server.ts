// In-memory double of the HTTP API for unit tests: same routes, same error
// code strings, same plan-edit semantics as the real service.
import type { LogEvent, Plan } from '../src/api.js';

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

export class FakeServer {
  events: LogEvent[] = [];
  plan: Plan | null = null;
  answers: Array<{ answer: string; route: string }> = [];
  artifacts: Record<string, string> = {};
  private seq = 0;

  pushEvent(kind: string, payload: Record<string, unknown>): LogEvent {
    this.seq += 1;
    const event = { seq: this.seq, timestamp: 'T', kind, payload };
    this.events.push(event);
    return event;
  }

  fetch: FetchLike = async (input, init) => {
    const url = new URL(input, 'http://fake');
    const method = init?.method ?? 'GET';
    const path = url.pathname;

    if (path === '/sessions' && method === 'POST') {
      return json(200, { session_id: 'fake-session', output_dir: '/tmp/fake' });
    }
    if (path.endsWith('/messages') && method === 'POST') {
      const body = JSON.parse(String(init?.body ?? '{}'));
      if (!body.text) return json(400, { code: 'bad-parameter', message: 'text required' });
      const next = this.answers.shift();
      if (!next) return json(404, { code: 'session-not-found', message: 'no canned answer' });
      this.pushEvent('user-input', { text: body.text });
      this.pushEvent('output', { text: next.answer });
      return json(200, { ...next, citations: [], low_confidence: false });
    }
    if (path.endsWith('/events')) {
      const since = Number(url.searchParams.get('since') ?? '0');
      return json(200, {
        events: this.events.filter((e) => e.seq > since),
        latest: this.seq,
      });
    }
    if (path.endsWith('/plan') && method === 'GET') {
      if (!this.plan) return json(404, { code: 'plan-missing', message: 'no plan' });
      return json(200, this.plan);
    }
    if (path.endsWith('/plan') && method === 'PUT') {
      const body = JSON.parse(String(init?.body ?? '{}'));
      for (const edit of body.edits ?? []) {
        if (edit.op === 'delete') {
          const remaining = this.plan!.instructions.filter((i) => i.id !== edit.id);
          const known = new Set(remaining.map((i) => i.id));
          for (const instr of remaining) {
            for (const succ of instr.successors) {
              if (succ !== 'STOP' && !known.has(succ as number)) {
                return json(409, {
                  code: 'plan-invalid',
                  message: `edits rejected: instruction ${instr.id}: dangling successor ${succ}`,
                });
              }
            }
          }
          this.plan = { ...this.plan!, instructions: remaining };
        }
      }
      return json(200, this.plan);
    }
    if (path.endsWith('/artifacts') && method === 'GET') {
      return json(200, { files: Object.keys(this.artifacts).sort() });
    }
    const artifactMatch = path.match(/\/artifacts\/(.+)$/);
    if (artifactMatch) {
      const body = this.artifacts[decodeURIComponent(artifactMatch[1])];
      if (body === undefined) {
        return json(404, { code: 'artifact-not-found', message: 'no artifact' });
      }
      return new Response(body, { status: 200, headers: { 'Content-Type': 'text/plain' } });
    }
    return json(404, { code: 'session-not-found', message: `no route ${method} ${path}` });
  };
}
