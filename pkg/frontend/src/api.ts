// Typed client for the labloop HTTP API. Every console datum comes through
// here; the console itself holds no truth the server cannot restore.

export interface Citation {
  doc_id: string;
  chunk_id: string;
}

export interface MessageResponse {
  answer: string;
  route: string;
  citations: Citation[];
  low_confidence: boolean;
}

export interface LogEvent {
  seq: number;
  timestamp: string;
  kind: string;
  payload: Record<string, unknown>;
}

export interface EventsResponse {
  events: LogEvent[];
  latest: number;
}

export type Successor = number | 'STOP';

export interface Instruction {
  id: number;
  module: string;
  prompt: string;
  successors: Successor[];
  condition_hint: string;
  max_visits: number;
}

export interface Plan {
  plan_id: string;
  name: string;
  query: string;
  query_digest?: string;
  status: 'draft' | 'approved' | 'running' | 'done' | 'halted';
  ip: Successor | null;
  visit_counts: Record<string, number>;
  instructions: Instruction[];
}

export interface StepOutcome {
  instruction_id: number;
  response: string;
  artifacts: string[];
  chosen_next: Successor;
  loop_guard: boolean;
}

export type PlanEdit =
  | { op: 'insert'; instruction: Partial<Instruction> & { module: string; prompt: string }; position?: number }
  | { op: 'delete'; id: number }
  | { op: 'modify'; id: number; fields: Partial<Omit<Instruction, 'id'>> }
  | { op: 'reorder'; order: number[] };

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function parseError(resp: Response): Promise<ApiError> {
  let code = 'unknown-error';
  let message = resp.statusText;
  try {
    const body = await resp.json();
    if (body && typeof body.code === 'string') code = body.code;
    if (body && typeof body.message === 'string') message = body.message;
    else if (body && body.detail) message = JSON.stringify(body.detail);
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(resp.status, code, message);
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, '');
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? undefined : { 'Content-Type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as T;
  }

  createSession(config?: Record<string, unknown>): Promise<{ session_id: string; output_dir: string }> {
    return this.request('POST', '/sessions', { config: config ?? {} });
  }

  sendMessage(sessionId: string, text: string, forceRoute?: string): Promise<MessageResponse> {
    const payload: Record<string, unknown> = { text };
    if (forceRoute) payload.force_route = forceRoute;
    return this.request('POST', `/sessions/${sessionId}/messages`, payload);
  }

  getEvents(sessionId: string, since: number, waitMs = 0): Promise<EventsResponse> {
    return this.request('GET', `/sessions/${sessionId}/events?since=${since}&wait_ms=${waitMs}`);
  }

  getPlan(sessionId: string): Promise<Plan> {
    return this.request('GET', `/sessions/${sessionId}/plan`);
  }

  editPlan(sessionId: string, edits: PlanEdit[]): Promise<Plan> {
    return this.request('PUT', `/sessions/${sessionId}/plan`, { edits });
  }

  approvePlan(sessionId: string): Promise<Plan> {
    return this.request('POST', `/sessions/${sessionId}/plan/approve`);
  }

  stepPlan(sessionId: string): Promise<{ outcome: StepOutcome; plan: Plan }> {
    return this.request('POST', `/sessions/${sessionId}/plan/step`);
  }

  runPlan(sessionId: string): Promise<{ steps: number; plan: Plan }> {
    return this.request('POST', `/sessions/${sessionId}/plan/run`);
  }

  listArtifacts(sessionId: string): Promise<{ files: string[] }> {
    return this.request('GET', `/sessions/${sessionId}/artifacts`);
  }

  async fetchArtifact(sessionId: string, path: string): Promise<{ contentType: string; body: string }> {
    const resp = await this.fetchFn(`${this.baseUrl}/sessions/${sessionId}/artifacts/${path}`, {});
    if (!resp.ok) throw await parseError(resp);
    return { contentType: resp.headers.get('content-type') ?? '', body: await resp.text() };
  }

  artifactUrl(sessionId: string, path: string): string {
    return `${this.baseUrl}/sessions/${sessionId}/artifacts/${path}`;
  }

  routerFeedback(prompt: string, route: string, sessionId?: string): Promise<{ version: number }> {
    return this.request('POST', '/router/feedback', { prompt, route, session_id: sessionId });
  }
}
