// Plan editor logic. Edits are explicit-save; the plan view is re-fetched
// from the server after every mutation attempt, successful or not, so the
// table always shows server truth. A 409 reports which successor ids to
// highlight.

import { ApiError, type ApiClient, type Plan, type PlanEdit, type StepOutcome } from './api.js';
import type { ConsoleState } from './state.js';

export interface EditResult {
  ok: boolean;
  code?: string;
  message?: string;
  offendingIds: number[];
}

const DANGLING_RE = /dangling successor '?(\d+)'?/g;
const INSTR_RE = /instruction (\d+):/g;

export function offendersFromMessage(message: string): number[] {
  const ids = new Set<number>();
  for (const match of message.matchAll(DANGLING_RE)) ids.add(Number(match[1]));
  for (const match of message.matchAll(INSTR_RE)) ids.add(Number(match[1]));
  return [...ids].sort((a, b) => a - b);
}

export class PlanPanel {
  constructor(
    private client: ApiClient,
    private state: ConsoleState,
  ) {}

  private get sessionId(): string {
    if (!this.state.sessionId) throw new Error('no active session');
    return this.state.sessionId;
  }

  async refresh(): Promise<Plan | null> {
    try {
      this.state.plan = await this.client.getPlan(this.sessionId);
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        this.state.plan = null;
        return null;
      }
      throw err;
    }
    return this.state.plan;
  }

  async applyEdits(edits: PlanEdit[]): Promise<EditResult> {
    try {
      await this.client.editPlan(this.sessionId, edits);
      await this.refresh();
      return { ok: true, offendingIds: [] };
    } catch (err) {
      await this.refresh(); // server plan is unchanged; show its truth
      if (err instanceof ApiError) {
        return {
          ok: false,
          code: err.code,
          message: err.message,
          offendingIds: offendersFromMessage(err.message),
        };
      }
      throw err;
    }
  }

  async approve(): Promise<Plan | null> {
    await this.client.approvePlan(this.sessionId);
    return this.refresh();
  }

  /** Advance exactly one instruction and refresh the view. */
  async step(): Promise<StepOutcome> {
    const resp = await this.client.stepPlan(this.sessionId);
    await this.refresh();
    return resp.outcome;
  }

  async runToHalt(): Promise<number> {
    const resp = await this.client.runPlan(this.sessionId);
    await this.refresh();
    return resp.steps;
  }
}

export interface PlanRow {
  id: number;
  module: string;
  prompt: string;
  successors: string;
  visits: number;
  current: boolean;
}

export function planRows(plan: Plan | null): PlanRow[] {
  if (!plan) return [];
  return plan.instructions.map((instr) => ({
    id: instr.id,
    module: instr.module,
    prompt: instr.prompt,
    successors: instr.successors.map(String).join(', '),
    visits: plan.visit_counts[String(instr.id)] ?? 0,
    current: plan.ip === instr.id,
  }));
}
