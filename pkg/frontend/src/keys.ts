export interface KeyBinding {
  keys: string[];
  describe: string;
  run: () => void;
}

function editingTarget(ev: KeyboardEvent): boolean {
  const el = ev.target as HTMLElement | null;
  if (!el || !el.tagName) return false;
  const tag = el.tagName.toLowerCase();
  return tag === 'input' || tag === 'textarea' || tag === 'select';
}

/** Attach bindings to a target; returns the detach function. */
export function bindKeys(target: EventTarget, bindings: KeyBinding[]): () => void {
  const handler = (raw: Event) => {
    const ev = raw as KeyboardEvent;
    if (ev.defaultPrevented || ev.ctrlKey || ev.metaKey || ev.altKey) return;
    if (editingTarget(ev)) return;
    const key = ev.key.toLowerCase();
    for (const binding of bindings) {
      if (binding.keys.includes(key)) {
        ev.preventDefault();
        binding.run();
        return;
      }
    }
  };
  target.addEventListener('keydown', handler);
  return () => target.removeEventListener('keydown', handler);
}
