import type { BoxesPayload, LabelExport, QueuePayload, RevealPayload, Verdict } from './types.js';

export class ApiError extends Error {
  status: number;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

async function asJson<T>(res: Response): Promise<T> {
  if (!res.ok) {
    let detail = res.statusText;
    try {
      const body = (await res.json()) as { error?: string };
      if (body && typeof body.error === 'string') detail = body.error;
    } catch {
      // non-JSON error body, keep the status text
    }
    throw new ApiError(res.status, detail);
  }
  return (await res.json()) as T;
}

/** Thin client for the audit endpoints. Base URL has no trailing slash. */
export class AuditApi {
  base: string;

  constructor(base = '') {
    this.base = base.replace(/\/$/, '');
  }

  queue(): Promise<QueuePayload> {
    return fetch(`${this.base}/api/audit/samples`).then((r) => asJson<QueuePayload>(r));
  }

  boxes(sampleId: string): Promise<BoxesPayload> {
    return fetch(`${this.base}/api/audit/boxes/${encodeURIComponent(sampleId)}`).then((r) =>
      asJson<BoxesPayload>(r),
    );
  }

  reveal(sampleId: string): Promise<RevealPayload> {
    return fetch(`${this.base}/api/audit/reveal/${encodeURIComponent(sampleId)}`).then((r) =>
      asJson<RevealPayload>(r),
    );
  }

  label(sampleId: string, verdict: Verdict, annotator = 'ui'): Promise<RevealPayload> {
    return fetch(`${this.base}/api/audit/label`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ sample_id: sampleId, verdict, annotator }),
    }).then((r) => asJson<RevealPayload>(r));
  }

  exportLabels(): Promise<LabelExport> {
    return fetch(`${this.base}/api/audit/export`).then((r) => asJson<LabelExport>(r));
  }

  imageUrl(sampleId: string): string {
    return `${this.base}/api/audit/image/${encodeURIComponent(sampleId)}`;
  }
}
