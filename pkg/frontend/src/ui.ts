// DOM rendering. Everything here is a pure render-from-state pass over
// elements created in index.html; all data lives in ConsoleState.

import type { LogEvent } from './api.js';
import { citationChips } from './chat.js';
import { buildTree, parseCsv, previewKind } from './artifacts.js';
import { planRows } from './plan.js';
import type { ConsoleState } from './state.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function renderTranscript(state: ConsoleState): void {
  const box = el<HTMLDivElement>('transcript');
  box.innerHTML = '';
  for (const entry of state.transcript) {
    const div = document.createElement('div');
    div.className = `turn turn-${entry.role}`;
    if (entry.role === 'error') {
      div.classList.add('banner');
      div.textContent = `[${entry.errorCode}] ${entry.text}`;
    } else {
      const who = document.createElement('span');
      who.className = 'who';
      who.textContent = entry.role === 'user' ? 'you' : (entry.route ?? 'agent');
      const body = document.createElement('span');
      body.textContent = entry.text;
      div.append(who, body);
      if (entry.lowConfidence) {
        const flag = document.createElement('em');
        flag.textContent = ' (low confidence)';
        div.append(flag);
      }
      for (const chip of citationChips(entry.citations)) {
        const button = document.createElement('button');
        button.className = 'chip';
        button.textContent = chip.label;
        button.title = `chunk ${chip.chunkId} of ${chip.docId}`;
        button.addEventListener('click', () => {
          const detail = el<HTMLDivElement>('citation-detail');
          detail.textContent = `doc ${chip.docId}, chunk ${chip.chunkId}`;
        });
        div.append(button);
      }
    }
    box.append(div);
  }
  box.scrollTop = box.scrollHeight;
}

export function renderPlan(state: ConsoleState, offendingIds: number[] = []): void {
  const table = el<HTMLTableElement>('plan-table');
  const status = el<HTMLSpanElement>('plan-status');
  table.innerHTML =
    '<tr><th>id</th><th>module</th><th>prompt</th><th>successors</th><th>visits</th></tr>';
  if (!state.plan) {
    status.textContent = 'no plan';
    return;
  }
  status.textContent = `${state.plan.status} (ip: ${state.plan.ip})`;
  for (const row of planRows(state.plan)) {
    const tr = document.createElement('tr');
    if (row.current) tr.classList.add('current');
    if (offendingIds.includes(row.id)) tr.classList.add('invalid');
    for (const value of [row.id, row.module, row.prompt, row.successors, row.visits]) {
      const td = document.createElement('td');
      td.textContent = String(value);
      tr.append(td);
    }
    table.append(tr);
  }
}

export function renderEvents(state: ConsoleState, kindFilter: string): void {
  const list = el<HTMLUListElement>('event-list');
  list.innerHTML = '';
  for (const event of state.eventsOfKind(kindFilter || undefined)) {
    const li = document.createElement('li');
    li.textContent = `#${event.seq} ${event.kind}: ${summarize(event)}`;
    list.append(li);
  }
  el<HTMLSpanElement>('event-cursor').textContent = String(state.cursor);
}

function summarize(event: LogEvent): string {
  const payload = event.payload as Record<string, unknown>;
  const text = payload.text ?? payload.tag ?? payload.route ?? payload.action ?? payload.source;
  return typeof text === 'string' ? text.slice(0, 90) : JSON.stringify(payload).slice(0, 90);
}

export function renderArtifacts(
  state: ConsoleState,
  onOpen: (path: string) => void,
): void {
  const box = el<HTMLUListElement>('artifact-list');
  box.innerHTML = '';
  const walk = (node: ReturnType<typeof buildTree>, depth: number) => {
    for (const child of node.children) {
      const li = document.createElement('li');
      li.style.paddingLeft = `${depth}em`;
      if (child.isFile) {
        const link = document.createElement('a');
        link.href = '#';
        link.textContent = child.name;
        link.addEventListener('click', (ev) => {
          ev.preventDefault();
          onOpen(child.path);
        });
        li.append(link);
      } else {
        li.textContent = `${child.name}/`;
      }
      box.append(li);
      walk(child, depth + 1);
    }
  };
  walk(buildTree(state.artifacts), 0);
}

export function renderPreview(
  path: string,
  body: string,
  artifactUrl: string,
): void {
  const pane = el<HTMLDivElement>('preview');
  pane.innerHTML = '';
  const title = document.createElement('h4');
  title.textContent = path;
  pane.append(title);
  const kind = previewKind(path);
  if (kind === 'image') {
    const img = document.createElement('img');
    img.src = artifactUrl;
    img.alt = path;
    pane.append(img);
  } else if (kind === 'csv') {
    const table = document.createElement('table');
    for (const row of parseCsv(body).slice(0, 50)) {
      const tr = document.createElement('tr');
      for (const cell of row) {
        const td = document.createElement('td');
        td.textContent = cell;
        tr.append(td);
      }
      table.append(tr);
    }
    pane.append(table);
  } else {
    const pre = document.createElement('pre');
    pre.textContent = kind === 'binary' ? '(binary file)' : body.slice(0, 5000);
    pane.append(pre);
  }
}
