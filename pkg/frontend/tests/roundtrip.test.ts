// End-to-end against the real audit server: build a synthetic run with the
// CLI, label every sample over HTTP, export, then restart the server on the
// same label file and check nothing was lost.
import { afterAll, beforeAll, describe, expect, it } from 'vitest';
import { execFileSync, spawn } from 'node:child_process';
import type { ChildProcess } from 'node:child_process';
import { mkdtempSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import type { LabelExport, QueuePayload, RevealPayload, Verdict } from '../src/types.js';

const CLI = 'spatialeval';
const VERDICTS: Verdict[] = ['PASS', 'FAIL', 'UNDECIDABLE', 'PASS', 'FAIL'];

let work: string;
let runDir: string;
let sampleCsv: string;
let labelsPath: string;
let server: ChildProcess | null = null;
let base = '';

function cli(args: string[]): string {
  return execFileSync(CLI, args, { encoding: 'utf-8' });
}

function startServer(): Promise<{ proc: ChildProcess; base: string }> {
  const proc = spawn(
    CLI,
    ['serve-audit', '--run', runDir, '--sample', sampleCsv, '--labels', labelsPath, '--port', '0'],
    { env: { ...process.env, PYTHONUNBUFFERED: '1' }, stdio: ['ignore', 'pipe', 'pipe'] },
  );
  return new Promise((resolve, reject) => {
    let seen = '';
    const timer = setTimeout(() => {
      proc.kill();
      reject(new Error(`server did not announce itself; output so far: ${seen}`));
    }, 20000);
    proc.stdout?.on('data', (chunk: Buffer) => {
      seen += chunk.toString();
      const m = seen.match(/audit server on (http:\/\/[0-9.]+:\d+)\//);
      if (m) {
        clearTimeout(timer);
        resolve({ proc, base: m[1] });
      }
    });
    proc.on('exit', (code) => {
      clearTimeout(timer);
      reject(new Error(`server exited early (code ${code}): ${seen}`));
    });
  });
}

function stopServer(proc: ChildProcess): Promise<void> {
  return new Promise((resolve) => {
    proc.removeAllListeners('exit');
    proc.on('exit', () => resolve());
    proc.kill('SIGTERM');
  });
}

async function getJson<T>(path: string): Promise<T> {
  const res = await fetch(`${base}${path}`);
  if (!res.ok) {
    throw new Error(`GET ${base}${path} -> ${res.status}: ${(await res.text()).slice(0, 200)}`);
  }
  return (await res.json()) as T;
}

beforeAll(() => {
  work = mkdtempSync(join(tmpdir(), 'audit-ui-e2e-'));
  cli(['mock-gen', '--out', work, '--pairs', '2', '--seeds', '1', '--seed', '3', '--run-id', 'r1']);
  runDir = join(work, 'runs', 'r1', 'mock_gligen');
  const prompts = join(work, 'data', 'prompts', 'v1.0.1');
  cli([
    'evaluate',
    '--manifest', join(runDir, 'manifest.jsonl'),
    '--prompts', prompts,
    '--scenes', join(work, 'scenes.json'),
  ]);
  sampleCsv = join(work, 'audit', 'sample.csv');
  labelsPath = join(work, 'audit', 'labels.json');
  cli([
    'audit-sample',
    '--run', runDir,
    '--prompts', prompts,
    '--n', '5',
    '--seed', '11',
    '--out', sampleCsv,
  ]);
}, 120000);

afterAll(async () => {
  if (server) await stopServer(server);
  if (work) rmSync(work, { recursive: true, force: true });
});

describe('audit server round trip', () => {
  it('serves a blind queue before any labels', async () => {
    const started = await startServer();
    server = started.proc;
    base = started.base;

    const queue = await getJson<QueuePayload>('/api/audit/samples');
    expect(queue.total).toBe(5);
    expect(queue.labeled).toBe(0);
    expect(queue.samples).toHaveLength(5);
    for (const item of queue.samples) {
      expect(Object.keys(item).sort()).toEqual([
        'human_verdict', 'image_url', 'labeled', 'prompt_text', 'sample_id',
      ]);
      expect(item.labeled).toBe(false);
      expect(item.human_verdict).toBeNull();
    }

    // Geometry is available before labeling; the verdict is not.
    const first = queue.samples[0].sample_id;
    const boxes = await getJson<Record<string, unknown>>(
      `/api/audit/boxes/${encodeURIComponent(first)}`,
    );
    expect(boxes.sample_id).toBe(first);
    expect('verdict' in boxes).toBe(false);
    expect('confidence' in boxes).toBe(false);

    const reveal = await fetch(`${base}/api/audit/reveal/${encodeURIComponent(first)}`);
    expect(reveal.status).toBe(409);

    const image = await fetch(`${base}${queue.samples[0].image_url}`);
    expect(image.status).toBe(200);
    expect(image.headers.get('content-type')).toBe('image/png');
  }, 60000);

  it('labels all five samples, exports, and resumes identically', async () => {
    const queue = await getJson<QueuePayload>('/api/audit/samples');
    const byId: Record<string, Verdict> = {};
    for (const [i, item] of queue.samples.entries()) {
      const verdict = VERDICTS[i];
      byId[item.sample_id] = verdict;
      const res = await fetch(`${base}/api/audit/label`, {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify({ sample_id: item.sample_id, verdict, annotator: 'e2e' }),
      });
      expect(res.status).toBe(200);
      const reveal = (await res.json()) as RevealPayload;
      expect(reveal.human.verdict).toBe(verdict);
      expect(reveal.verdict).not.toBeNull();
    }

    const labeledQueue = await getJson<QueuePayload>('/api/audit/samples');
    expect(labeledQueue.labeled).toBe(5);
    const firstExport = await getJson<LabelExport>('/api/audit/export');
    expect(firstExport.labels).toHaveLength(5);
    for (const label of firstExport.labels) {
      expect(label.verdict).toBe(byId[label.sample_id]);
      expect(label.annotator).toBe('e2e');
    }

    // Restart on the same label file: the queue must come back completed.
    await stopServer(server as ChildProcess);
    const restarted = await startServer();
    server = restarted.proc;
    base = restarted.base;

    const resumed = await getJson<QueuePayload>('/api/audit/samples');
    expect(resumed).toEqual(labeledQueue);
    for (const item of resumed.samples) {
      expect(item.labeled).toBe(true);
      expect(item.human_verdict).toBe(byId[item.sample_id]);
    }
    const secondExport = await getJson<LabelExport>('/api/audit/export');
    expect(secondExport).toEqual(firstExport);

    // Reveals now work for every sample.
    const reveal = await getJson<RevealPayload>(
      `/api/audit/reveal/${encodeURIComponent(resumed.samples[0].sample_id)}`,
    );
    expect(reveal.human.verdict).toBe(byId[resumed.samples[0].sample_id]);
  }, 60000);
});
