// Console acceptance: runs against the real service (spawned here) with
// mock providers. Covers the three console criteria: a dangling-successor
// edit 409s and leaves the server plan unchanged; the step button advances
// exactly one instruction; the event tail renders 100 injected events in
// seq order after a forced reconnect.
import { spawn, type ChildProcess } from 'node:child_process';
import { mkdtempSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import { EventTail } from '../src/events.js';
import { PlanPanel } from '../src/plan.js';
import { ConsoleState } from '../src/state.js';

const PORT = 8340 + Math.floor(Math.random() * 200);
const BASE = `http://127.0.0.1:${PORT}`;

const PLAN_JSON = JSON.stringify([
  { module: 'chat', prompt: 'step one', successors: [2] },
  { module: 'chat', prompt: 'step two', successors: [3] },
  { module: 'chat', prompt: 'step three', successors: ['STOP'] },
]);

let server: ChildProcess;

async function waitForService(): Promise<void> {
  for (let i = 0; i < 100; i += 1) {
    try {
      const resp = await fetch(`${BASE}/sessions`, {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: '{}',
      });
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error('service never became ready');
}

beforeAll(async () => {
  const outputRoot = mkdtempSync(join(tmpdir(), 'labloop-console-'));
  server = spawn(
    'python3',
    ['-m', 'labloop.cli', '--output-root', outputRoot, 'serve', '--port', String(PORT)],
    { stdio: 'ignore' },
  );
  await waitForService();
}, 40_000);

afterAll(() => {
  server?.kill('SIGTERM');
});

function newConsole() {
  const client = new ApiClient(BASE);
  const state = new ConsoleState();
  return { client, state, planPanel: new PlanPanel(client, state) };
}

async function sessionWithPlan(client: ApiClient, state: ConsoleState): Promise<string> {
  const created = await client.createSession({
    module_overrides: { 'llm-gateway': { mock_script: [['plan-generate', PLAN_JSON]] } },
  });
  state.reset(created.session_id);
  await client.sendMessage(created.session_id, 'plan this work', 'planner');
  return created.session_id;
}

describe('console against the live service', () => {
  it('dangling-successor edit gets 409 and leaves the server plan unchanged', async () => {
    const { client, state, planPanel } = newConsole();
    await sessionWithPlan(client, state);
    const before = await planPanel.refresh();
    expect(before?.instructions).toHaveLength(3);

    const result = await planPanel.applyEdits([{ op: 'delete', id: 2 }]);
    expect(result.ok).toBe(false);
    expect(result.code).toBe('plan-invalid');
    expect(result.offendingIds.length).toBeGreaterThan(0);

    // server truth re-fetched by the panel and unchanged
    expect(state.plan?.instructions.map((i) => i.id)).toEqual([1, 2, 3]);
    const direct = await client.getPlan(state.sessionId!);
    expect(direct.instructions.map((i) => i.id)).toEqual([1, 2, 3]);
    expect(direct.status).toBe('draft');
  });

  it('step button advances exactly one instruction', async () => {
    const { client, state, planPanel } = newConsole();
    await sessionWithPlan(client, state);
    await planPanel.approve();
    expect(state.plan?.status).toBe('approved');
    expect(state.plan?.ip).toBe(1);

    const outcome = await planPanel.step();
    expect(outcome.instruction_id).toBe(1);
    expect(outcome.chosen_next).toBe(2);
    expect(state.plan?.ip).toBe(2);
    expect(state.plan?.visit_counts).toEqual({ '1': 1 });

    const second = await planPanel.step();
    expect(second.instruction_id).toBe(2);
    expect(state.plan?.ip).toBe(3);
  });

  it('event tail renders 100 injected events in seq order across a reconnect', async () => {
    const { client, state } = newConsole();
    const created = await client.createSession();
    state.reset(created.session_id);

    const tail = new EventTail(client, state, { intervalMs: 50 });
    tail.start();

    // each chat turn appends user-input, route-decision, llm-call, output
    for (let i = 0; i < 13; i += 1) {
      await client.sendMessage(created.session_id, `message number ${i}`);
    }
    await new Promise((r) => setTimeout(r, 150));
    const midway = state.events.length;
    expect(midway).toBeGreaterThan(0);

    tail.forceReconnect(); // dropped stream resumes from the cursor

    for (let i = 13; i < 25; i += 1) {
      await client.sendMessage(created.session_id, `message number ${i}`);
    }
    // settle until all 25 turns (100 events) + session-created are in
    for (let i = 0; i < 100 && state.events.length < 101; i += 1) {
      await new Promise((r) => setTimeout(r, 100));
    }
    tail.stop();

    const seqs = state.events.map((e) => e.seq);
    expect(seqs.length).toBeGreaterThanOrEqual(101);
    for (let i = 1; i < seqs.length; i += 1) {
      expect(seqs[i]).toBe(seqs[i - 1] + 1); // strict order, no gaps, no dupes
    }
    const inputs = state.eventsOfKind('user-input');
    expect(inputs).toHaveLength(25);
    expect(inputs[24].payload.text).toBe('message number 24');
  }, 60_000);
});
