import { describe, expect, it } from 'vitest';

import { ApiClient, ApiError } from '../src/api.js';
import { buildTree, parseCsv, previewKind } from '../src/artifacts.js';
import { citationChips, sendChat } from '../src/chat.js';
import { EventTail } from '../src/events.js';
import { offendersFromMessage, PlanPanel, planRows } from '../src/plan.js';
import { ConsoleState } from '../src/state.js';
import { FakeServer } from './fake-server.js';

function setup() {
  const server = new FakeServer();
  const client = new ApiClient('http://fake', server.fetch);
  const state = new ConsoleState();
  state.reset('fake-session');
  return { server, client, state };
}

describe('chat panel', () => {
  it('renders answers with citation chips data', async () => {
    const { server, client, state } = setup();
    server.answers.push({ answer: 'hello back', route: 'chat' });
    const entry = await sendChat(client, state, 'hello');
    expect(entry.role).toBe('assistant');
    expect(entry.route).toBe('chat');
    expect(state.transcript.map((t) => t.role)).toEqual(['user', 'assistant']);
  });

  it('API errors become inline banners with the code string', async () => {
    const { client, state } = setup();
    const entry = await sendChat(client, state, 'hello'); // no canned answer -> 404
    expect(entry.role).toBe('error');
    expect(entry.errorCode).toBe('session-not-found');
  });

  it('citation chips label doc and chunk', () => {
    const chips = citationChips([{ doc_id: 'arxiv:1', chunk_id: 'abcdef123456' }]);
    expect(chips).toHaveLength(1);
    expect(chips[0].label).toContain('arxiv:1');
    expect(chips[0].chunkId).toBe('abcdef123456');
  });
});

describe('plan panel', () => {
  const plan = () => ({
    plan_id: 'p',
    name: 'n',
    query: 'q',
    status: 'draft' as const,
    ip: 1 as const,
    visit_counts: { '1': 2 },
    instructions: [
      { id: 1, module: 'chat', prompt: 'a', successors: [2] as (number | 'STOP')[], condition_hint: '', max_visits: 5 },
      { id: 2, module: 'chat', prompt: 'b', successors: ['STOP'] as (number | 'STOP')[], condition_hint: '', max_visits: 5 },
    ],
  });

  it('409 on dangling successor reports offenders and keeps server truth', async () => {
    const { server, client, state } = setup();
    server.plan = plan();
    const panel = new PlanPanel(client, state);
    await panel.refresh();
    const result = await panel.applyEdits([{ op: 'delete', id: 2 }]);
    expect(result.ok).toBe(false);
    expect(result.code).toBe('plan-invalid');
    expect(result.offendingIds).toContain(1);
    // view was re-fetched and matches the (unchanged) server plan
    expect(state.plan?.instructions.map((i) => i.id)).toEqual([1, 2]);
  });

  it('rows mark the current instruction and visit counts', () => {
    const rows = planRows(plan());
    expect(rows[0].current).toBe(true);
    expect(rows[0].visits).toBe(2);
    expect(rows[1].successors).toBe('STOP');
  });

  it('extracts offender ids from server messages', () => {
    expect(offendersFromMessage(
      "edits rejected: instruction 1: dangling successor 2; instruction 3: dangling successor 9",
    )).toEqual([1, 2, 3, 9]);
  });
});

describe('event tail', () => {
  it('polls from the cursor and resumes after a forced reconnect', async () => {
    const { server, client, state } = setup();
    const tail = new EventTail(client, state, {});
    server.pushEvent('output', { text: 'one' });
    await tail.pollOnce();
    expect(state.cursor).toBe(1);
    tail.forceReconnect();
    tail.stop();
    server.pushEvent('output', { text: 'two' });
    await tail.pollOnce();
    expect(state.events.map((e) => e.seq)).toEqual([1, 2]);
  });
});

describe('artifacts', () => {
  it('detects preview kinds by extension', () => {
    expect(previewKind('plot.png')).toBe('image');
    expect(previewKind('table.csv')).toBe('csv');
    expect(previewKind('report-1.md')).toBe('text');
    expect(previewKind('weights.bin')).toBe('binary');
  });

  it('parses quoted CSV', () => {
    const rows = parseCsv('a,b\n"x, y",2\n"say ""hi""",3\n');
    expect(rows).toEqual([
      ['a', 'b'],
      ['x, y', '2'],
      ['say "hi"', '3'],
    ]);
  });

  it('builds a nested tree from paths', () => {
    const tree = buildTree(['plans/p1.json', 'enrichment.csv', 'plans/p2.json']);
    const names = tree.children.map((c) => c.name);
    expect(names).toEqual(['enrichment.csv', 'plans']);
    const plans = tree.children[1];
    expect(plans.isFile).toBe(false);
    expect(plans.children.map((c) => c.name)).toEqual(['p1.json', 'p2.json']);
  });
});

describe('api client errors', () => {
  it('maps non-json errors to unknown-error', async () => {
    const client = new ApiClient('http://fake', async () =>
      new Response('boom', { status: 500, statusText: 'Internal Server Error' }));
    await expect(client.getPlan('s')).rejects.toMatchObject({
      name: 'ApiError',
      status: 500,
      code: 'unknown-error',
    });
  });

  it('carries code strings from the body', async () => {
    const client = new ApiClient('http://fake', async () =>
      new Response(JSON.stringify({ code: 'path-forbidden', message: 'no' }), { status: 403 }));
    await expect(client.fetchArtifact('s', '../etc')).rejects.toMatchObject({
      code: 'path-forbidden',
      status: 403,
    });
  });
});
