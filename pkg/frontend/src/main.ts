// Console bootstrap: create or attach to a session, wire the four panels,
// and keep the event tail running. Reload restores everything from the
// server (the console holds no truth).

import { ApiClient } from './api.js';
import { sendChat } from './chat.js';
import { EventTail } from './events.js';
import { PlanPanel } from './plan.js';
import { ConsoleState } from './state.js';
import { renderArtifacts, renderEvents, renderPlan, renderPreview, renderTranscript } from './ui.js';

const API_BASE = (window as unknown as { LABLOOP_API?: string }).LABLOOP_API
  ?? `${window.location.protocol}//${window.location.hostname}:8320`;

const client = new ApiClient(API_BASE);
const state = new ConsoleState();
const planPanel = new PlanPanel(client, state);

const tail = new EventTail(client, state, {
  intervalMs: 500,
  waitMs: 0,
  onEvents: () => {
    renderEvents(state, kindFilter());
    void refreshArtifacts();
  },
  onError: () => {
    // dropped poll: the loop resumes from the cursor on the next round
  },
});

function kindFilter(): string {
  return (document.getElementById('kind-filter') as HTMLSelectElement).value;
}

async function refreshArtifacts(): Promise<void> {
  if (!state.sessionId) return;
  const listing = await client.listArtifacts(state.sessionId);
  state.artifacts = listing.files;
  renderArtifacts(state, (path) => void openArtifact(path));
}

async function openArtifact(path: string): Promise<void> {
  if (!state.sessionId) return;
  const { body } = await client.fetchArtifact(state.sessionId, path);
  renderPreview(path, body, client.artifactUrl(state.sessionId, path));
}

async function newSession(): Promise<void> {
  const created = await client.createSession();
  state.reset(created.session_id);
  (document.getElementById('session-id') as HTMLSpanElement).textContent = created.session_id;
  tail.forceReconnect();
  renderTranscript(state);
  renderPlan(state);
  await refreshArtifacts();
}

async function handleSend(): Promise<void> {
  const input = document.getElementById('chat-input') as HTMLInputElement;
  const text = input.value.trim();
  if (!text) return;
  input.value = '';
  const force = (document.getElementById('force-route') as HTMLSelectElement).value;
  await sendChat(client, state, text, force || undefined);
  renderTranscript(state);
  await planPanel.refresh().catch(() => null);
  renderPlan(state);
}

function wire(): void {
  document.getElementById('send')!.addEventListener('click', () => void handleSend());
  document.getElementById('chat-input')!.addEventListener('keydown', (ev) => {
    if ((ev as KeyboardEvent).key === 'Enter') void handleSend();
  });
  document.getElementById('new-session')!.addEventListener('click', () => void newSession());
  document.getElementById('kind-filter')!.addEventListener('change', () =>
    renderEvents(state, kindFilter()),
  );
  document.getElementById('plan-approve')!.addEventListener('click', async () => {
    await planPanel.approve().catch(reportPlanError);
    renderPlan(state);
  });
  document.getElementById('plan-step')!.addEventListener('click', async () => {
    await planPanel.step().catch(reportPlanError);
    renderPlan(state);
  });
  document.getElementById('plan-run')!.addEventListener('click', async () => {
    await planPanel.runToHalt().catch(reportPlanError);
    renderPlan(state);
  });
  document.getElementById('plan-save-edits')!.addEventListener('click', async () => {
    const raw = (document.getElementById('plan-edits') as HTMLTextAreaElement).value;
    let edits;
    try {
      edits = JSON.parse(raw);
    } catch {
      reportPlanError(new Error('edits must be a JSON array'));
      return;
    }
    const result = await planPanel.applyEdits(edits);
    renderPlan(state, result.offendingIds);
    if (!result.ok) {
      (document.getElementById('plan-error') as HTMLSpanElement).textContent =
        `[${result.code}] ${result.message}`;
    } else {
      (document.getElementById('plan-error') as HTMLSpanElement).textContent = '';
    }
  });
  tail.start();
}

function reportPlanError(err: unknown): void {
  (document.getElementById('plan-error') as HTMLSpanElement).textContent = String(err);
}

void newSession().then(wire);
