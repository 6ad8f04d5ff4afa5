export type Verdict = 'PASS' | 'FAIL' | 'UNDECIDABLE';

export interface QueueItem {
  sample_id: string;
  prompt_text: string;
  image_url: string;
  labeled: boolean;
  human_verdict: Verdict | null;
}

export interface QueuePayload {
  samples: QueueItem[];
  total: number;
  labeled: number;
  choices: Verdict[];
}

// Corner boxes in original-image pixels; either side may be missing.
export interface BoxPair {
  a: number[] | null;
  b: number[] | null;
}

export interface BoxesPayload {
  sample_id: string;
  relation: string | null;
  boxes: BoxPair | null;
}

export interface HumanLabel {
  verdict: Verdict;
  annotator: string;
  timestamp: string;
}

// Only served after the sample has been labeled.
export interface RevealPayload {
  sample_id: string;
  verdict: Verdict | null;
  reason: string | null;
  confidence: number | null;
  boxes: BoxPair | null;
  relation: string | null;
  human: HumanLabel;
}

export interface ExportedLabel {
  sample_id: string;
  verdict: Verdict;
  annotator: string;
  timestamp: string;
}

export interface LabelExport {
  version: number;
  labels: ExportedLabel[];
  trail: unknown[];
}
