import type { BoxesPayload, RevealPayload, Verdict } from './types.js';
import type { Session } from './state.js';
import { current, labeledCount } from './state.js';
import { placeBox, placementStyle } from './overlay.js';

export interface Handlers {
  onVerdict: (verdict: Verdict) => void;
  onMove: (delta: number) => void;
  onJump: () => void;
}

// Button labels stay lowercase on purpose: before a sample is labeled the
// page must not contain the checker's verdict strings, and a static palette
// that never varies per sample cannot leak one.
export const VERDICT_BUTTONS: Array<{ key: string; label: string; verdict: Verdict }> = [
  { key: 'p', label: 'P · pass', verdict: 'PASS' },
  { key: 'f', label: 'F · fail', verdict: 'FAIL' },
  { key: 'u', label: "U · can't tell", verdict: 'UNDECIDABLE' },
];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = '',
  text = '',
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

/** Position the overlay divs inside a frame of known display size. */
export function layoutOverlays(
  frame: HTMLElement,
  shownW: number,
  shownH: number,
  naturalW: number,
  naturalH: number,
): void {
  const boxes = frame.querySelectorAll<HTMLElement>('.box');
  boxes.forEach((node) => {
    const raw = node.getAttribute('data-box');
    if (!raw) return;
    const corners = JSON.parse(raw) as number[];
    node.setAttribute(
      'style',
      placementStyle(placeBox(corners, naturalW, naturalH, shownW, shownH)),
    );
  });
}

function renderFrame(imageUrl: string, boxes: BoxesPayload | null): HTMLElement {
  const frame = el('div', 'frame');
  const img = el('img');
  img.src = imageUrl;
  img.alt = 'sample under audit';
  frame.appendChild(img);
  const pair = boxes?.boxes ?? null;
  if (pair?.a) {
    const a = el('div', 'box box-a');
    a.setAttribute('data-box', JSON.stringify(pair.a));
    frame.appendChild(a);
  }
  if (pair?.b) {
    const b = el('div', 'box box-b');
    b.setAttribute('data-box', JSON.stringify(pair.b));
    frame.appendChild(b);
  }
  if (boxes && (!pair || !pair.a)) frame.appendChild(el('span', 'badge badge-a', 'no A box'));
  if (boxes && (!pair || !pair.b)) frame.appendChild(el('span', 'badge badge-b', 'no B box'));
  return frame;
}

function renderReveal(reveal: RevealPayload): HTMLElement {
  const block = el('section', 'reveal');
  const machine = el('div', 'reveal-machine');
  machine.appendChild(el('span', '', 'checker: '));
  const verdict = el('strong', 'machine-verdict', reveal.verdict ?? 'none');
  machine.appendChild(verdict);
  if (reveal.reason) machine.appendChild(el('span', 'reason', ` (${reveal.reason})`));
  block.appendChild(machine);
  const conf = reveal.confidence === null ? '–' : reveal.confidence.toFixed(3);
  block.appendChild(el('div', 'reveal-confidence', `confidence: ${conf}`));
  block.appendChild(el('div', 'reveal-human', `your label: ${reveal.human.verdict}`));
  return block;
}

export function renderApp(
  root: HTMLElement,
  session: Session,
  boxes: BoxesPayload | null,
  imageUrl: string,
  handlers: Handlers,
): void {
  root.textContent = '';
  const app = el('div', 'app');

  const header = el('header');
  header.appendChild(el('h1', '', 'audit queue'));
  header.appendChild(
    el('span', 'progress', `${labeledCount(session.items)} / ${session.items.length} labeled`),
  );
  app.appendChild(header);

  const item = current(session);
  if (!item) {
    app.appendChild(el('p', 'empty', session.status || 'queue is empty'));
    root.appendChild(app);
    return;
  }

  const viewer = el('section', 'viewer');
  viewer.appendChild(el('div', 'position', `sample ${session.cursor + 1} of ${session.items.length}`));
  viewer.appendChild(el('div', 'prompt', item.prompt_text));
  viewer.appendChild(renderFrame(imageUrl, boxes));

  const controls = el('div', 'controls');
  for (const spec of VERDICT_BUTTONS) {
    const btn = el('button', 'verdict-btn', spec.label);
    btn.setAttribute('data-key', spec.key);
    btn.addEventListener('click', () => handlers.onVerdict(spec.verdict));
    controls.appendChild(btn);
  }
  const prev = el('button', 'nav-btn', '← prev');
  prev.addEventListener('click', () => handlers.onMove(-1));
  const next = el('button', 'nav-btn', 'next →');
  next.addEventListener('click', () => handlers.onMove(1));
  const jump = el('button', 'nav-btn', 'next unlabeled');
  jump.addEventListener('click', () => handlers.onJump());
  controls.appendChild(prev);
  controls.appendChild(next);
  controls.appendChild(jump);
  viewer.appendChild(controls);

  if (item.labeled) {
    const reveal = session.reveals[item.sample_id];
    if (reveal) viewer.appendChild(renderReveal(reveal));
    else viewer.appendChild(el('p', 'reveal-pending', 'labeled earlier; loading result…'));
  }

  app.appendChild(viewer);
  if (session.status) app.appendChild(el('p', 'status', session.status));
  app.appendChild(
    el('footer', 'hint', 'keys: p / f / u to label · arrows move · space jumps to next unlabeled'),
  );
  root.appendChild(app);
}
