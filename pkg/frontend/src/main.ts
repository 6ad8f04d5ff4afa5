import { AuditApi, ApiError } from './api.js';
import { bindKeys } from './keys.js';
import { emptySession, reduce, current } from './state.js';
import type { Session } from './state.js';
import { renderApp, layoutOverlays, VERDICT_BUTTONS } from './render.js';
import type { BoxesPayload, Verdict } from './types.js';

const api = new AuditApi('');
let session: Session = emptySession();
const boxesCache: Record<string, BoxesPayload> = {};

function root(): HTMLElement {
  return document.getElementById('app') as HTMLElement;
}

function redraw(): void {
  const item = current(session);
  const boxes = item ? (boxesCache[item.sample_id] ?? null) : null;
  renderApp(root(), session, boxes, item ? api.imageUrl(item.sample_id) : '', {
    onVerdict: submit,
    onMove: (delta) => dispatch({ kind: 'move', delta }),
    onJump: () => dispatch({ kind: 'jump-unlabeled' }),
  });
  const img = root().querySelector<HTMLImageElement>('.frame img');
  if (img) {
    const apply = () => {
      const frame = img.parentElement as HTMLElement;
      layoutOverlays(frame, img.clientWidth, img.clientHeight, img.naturalWidth, img.naturalHeight);
    };
    if (img.complete) apply();
    else img.addEventListener('load', apply, { once: true });
  }
}

function dispatch(action: Parameters<typeof reduce>[1]): void {
  session = reduce(session, action);
  void hydrate();
  redraw();
}

/** Fetch boxes (always) and the reveal (labeled samples only) for the cursor. */
async function hydrate(): Promise<void> {
  const item = current(session);
  if (!item) return;
  const sid = item.sample_id;
  if (!(sid in boxesCache)) {
    try {
      boxesCache[sid] = await api.boxes(sid);
      redraw();
    } catch (err) {
      report(err, 'loading boxes');
    }
  }
  if (item.labeled && !(sid in session.reveals)) {
    try {
      const reveal = await api.reveal(sid);
      session = reduce(session, { kind: 'labeled', sampleId: sid, reveal });
      redraw();
    } catch (err) {
      report(err, 'loading result');
    }
  }
}

function report(err: unknown, doing: string): void {
  const detail = err instanceof ApiError ? `${err.status} ${err.message}` : String(err);
  session = reduce(session, { kind: 'status', text: `error ${doing}: ${detail}` });
  redraw();
}

async function submit(verdict: Verdict): Promise<void> {
  const item = current(session);
  if (!item) return;
  try {
    const reveal = await api.label(item.sample_id, verdict);
    session = reduce(session, { kind: 'labeled', sampleId: item.sample_id, reveal });
    redraw();
  } catch (err) {
    report(err, 'saving label');
  }
}

async function boot(): Promise<void> {
  try {
    const payload = await api.queue();
    dispatch({ kind: 'loaded', payload });
  } catch (err) {
    report(err, 'loading queue');
    return;
  }
  bindKeys(document, [
    ...VERDICT_BUTTONS.map((spec) => ({
      keys: [spec.key],
      describe: spec.label,
      run: () => void submit(spec.verdict),
    })),
    { keys: ['arrowleft', 'k'], describe: 'previous sample', run: () => dispatch({ kind: 'move', delta: -1 }) },
    { keys: ['arrowright', 'j'], describe: 'next sample', run: () => dispatch({ kind: 'move', delta: 1 }) },
    { keys: [' ', 'n'], describe: 'next unlabeled', run: () => dispatch({ kind: 'jump-unlabeled' }) },
  ]);
}

void boot();
