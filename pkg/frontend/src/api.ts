/**
 * Typed client for the retrieval service API. The console never re-computes
 * cascade logic: everything it renders comes from these payloads.
 */

export interface VocabularyResponse {
  vocabulary: {
    colors: string[];
    torso_types: string[];
    torso_patterns: string[];
    leg_patterns: string[];
    genders: string[];
    height_classes: { label: string; min_m: number; max_m: number | null }[];
  };
  hash: string;
  families: Record<string, string[]>;
}

export interface SequenceInfo {
  sequence_id: string;
  camera_id: string;
  difficulty: string;
  frame_count: number;
  first_frame: number;
  description: Record<string, string>;
}

export interface SequencesResponse {
  sequences: SequenceInfo[];
}

export interface CandidateBox {
  candidate_id: string;
  bbox: [number, number, number, number];
  detector_score: number;
}

export interface FrameDetail {
  sequence_id: string;
  frame_index: number;
  camera_id: string;
  candidates: CandidateBox[];
  ground_truth: { bbox: [number, number, number, number] } | null;
  image_url: string | null;
}

export interface StageDecisionPayload {
  candidate_id: string;
  kept: boolean;
  reason: string;
  flags?: string[];
  measured_height?: number;
  corrected_height?: number;
  score?: number;
  argmax_label?: string;
  matched_label?: string;
}

export interface StagePayload {
  name: string;
  kind: 'applied' | 'verify' | 'skipped_absent' | 'skipped_early_exit';
  input: string[];
  kept: string[];
  decisions: StageDecisionPayload[];
}

export interface TerminalPayload {
  status: 'retrieved' | 'ambiguous' | 'none_retrieved';
  retrieved: string | null;
  ambiguous: string[];
  fallback: boolean;
  fallback_stage: string | null;
  flags: string[];
  match_scores: [string, number][];
}

export interface TracePayload {
  stages: StagePayload[];
  terminal: TerminalPayload;
}

export interface RetrievalResultPayload {
  sequence_id: string;
  frame_index: number;
  retrieved: string | null;
  final_bbox: [number, number, number, number] | null;
  match_score: number;
  trace: TracePayload;
}

export interface QueryRequest {
  sequence_id: string;
  description: Record<string, string>;
  start_frame?: number;
  end_frame?: number;
}

export interface QueryResponse {
  sequence_id: string;
  description: Record<string, string>;
  results: RetrievalResultPayload[];
}

/** Non-2xx response; `detail` carries the server's validation message. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = 'ApiError';
  }
}

async function parseError(response: Response): Promise<never> {
  let detail = response.statusText || `status ${response.status}`;
  try {
    const body = await response.json();
    if (body && typeof body.detail === 'string') detail = body.detail;
  } catch {
    // non-JSON error body: keep the status text
  }
  throw new ApiError(response.status, detail);
}

export class ApiClient {
  constructor(
    private readonly base: string = '',
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.base + path);
    if (!response.ok) await parseError(response);
    return response.json() as Promise<T>;
  }

  getVocabulary(): Promise<VocabularyResponse> {
    return this.get('/api/vocabulary');
  }

  getSequences(): Promise<SequencesResponse> {
    return this.get('/api/sequences');
  }

  getFrame(sequenceId: string, frameIndex: number): Promise<FrameDetail> {
    return this.get(
      `/api/sequences/${encodeURIComponent(sequenceId)}/frames/${frameIndex}`,
    );
  }

  async query(request: QueryRequest, signal?: AbortSignal): Promise<QueryResponse> {
    const response = await this.fetchFn(this.base + '/api/query', {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(request),
      signal,
    });
    if (!response.ok) await parseError(response);
    return response.json() as Promise<QueryResponse>;
  }
}
