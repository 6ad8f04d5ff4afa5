import type { QueueItem, QueuePayload, RevealPayload } from './types.js';

export interface Session {
  items: QueueItem[];
  cursor: number;
  // Reveals keyed by sample id, filled in as samples get labeled.
  reveals: Record<string, RevealPayload>;
  status: string;
}

export type Action =
  | { kind: 'loaded'; payload: QueuePayload }
  | { kind: 'move'; delta: number }
  | { kind: 'goto'; index: number }
  | { kind: 'jump-unlabeled' }
  | { kind: 'labeled'; sampleId: string; reveal: RevealPayload }
  | { kind: 'status'; text: string };

export function emptySession(): Session {
  return { items: [], cursor: 0, reveals: {}, status: 'loading…' };
}

export function clampCursor(index: number, count: number): number {
  if (count <= 0) return 0;
  return Math.min(Math.max(index, 0), count - 1);
}

/**
 * Index of the first unlabeled item at or after `from`, wrapping around.
 * Returns -1 when everything is labeled.
 */
export function nextUnlabeled(items: QueueItem[], from: number): number {
  const n = items.length;
  for (let step = 0; step < n; step += 1) {
    const i = (from + step) % n;
    if (!items[i].labeled) return i;
  }
  return -1;
}

export function labeledCount(items: QueueItem[]): number {
  return items.filter((it) => it.labeled).length;
}

export function current(session: Session): QueueItem | null {
  return session.items[session.cursor] ?? null;
}

export function reduce(session: Session, action: Action): Session {
  switch (action.kind) {
    case 'loaded': {
      const items = action.payload.samples;
      const start = nextUnlabeled(items, 0);
      return {
        ...session,
        items,
        cursor: start === -1 ? clampCursor(0, items.length) : start,
        status: '',
      };
    }
    case 'move':
      return { ...session, cursor: clampCursor(session.cursor + action.delta, session.items.length) };
    case 'goto':
      return { ...session, cursor: clampCursor(action.index, session.items.length) };
    case 'jump-unlabeled': {
      const i = nextUnlabeled(session.items, session.cursor);
      return i === -1 ? { ...session, status: 'all samples labeled' } : { ...session, cursor: i, status: '' };
    }
    case 'labeled': {
      const items = session.items.map((it) =>
        it.sample_id === action.sampleId
          ? { ...it, labeled: true, human_verdict: action.reveal.human.verdict }
          : it,
      );
      return {
        ...session,
        items,
        reveals: { ...session.reveals, [action.sampleId]: action.reveal },
        status: '',
      };
    }
    case 'status':
      return { ...session, status: action.text };
    default:
      return session;
  }
}
