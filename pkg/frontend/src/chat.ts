// Chat panel logic: send a message (optionally down a forced route), record
// the exchange, and expose citation chips that open source provenance.

import { ApiError, type ApiClient, type Citation } from './api.js';
import type { ConsoleState, TranscriptEntry } from './state.js';

export interface CitationChip {
  label: string;
  docId: string;
  chunkId: string;
}

export async function sendChat(
  client: ApiClient,
  state: ConsoleState,
  text: string,
  forceRoute?: string,
): Promise<TranscriptEntry> {
  if (!state.sessionId) throw new Error('no active session');
  state.transcript.push({ role: 'user', text });
  try {
    const resp = await client.sendMessage(state.sessionId, text, forceRoute);
    const entry: TranscriptEntry = {
      role: 'assistant',
      text: resp.answer,
      route: resp.route,
      citations: resp.citations,
      lowConfidence: resp.low_confidence,
    };
    state.transcript.push(entry);
    return entry;
  } catch (err) {
    if (err instanceof ApiError) {
      // inline error banner carrying the machine-readable code
      const entry: TranscriptEntry = { role: 'error', text: err.message, errorCode: err.code };
      state.transcript.push(entry);
      return entry;
    }
    throw err;
  }
}

export function citationChips(citations: Citation[] | undefined): CitationChip[] {
  return (citations ?? []).map((c) => ({
    label: `${c.doc_id} § ${c.chunk_id.slice(0, 8)}`,
    docId: c.doc_id,
    chunkId: c.chunk_id,
  }));
}
