// Wire types mirror the engine's HTTP API exactly; the console displays these
// values verbatim and performs no scoring math of its own.

export interface Turn {
  role: "user" | "assistant";
  text: string;
}

export interface QueueItem {
  sample_id: string;
  case_id: string;
  clause_id: string;
  machine_verdict: boolean | null; // null: engine could not decide
  unresolved_tie: boolean;
  disagreement_ratio: number;
  turns: Turn[];
  checklist_text: string;
  trace_quote: string;
  adjudicated: boolean;
}

export interface QueueResponse {
  items: QueueItem[];
  pending: number;
  total: number;
}

export interface AgreementStats {
  n: number;
  raw_agreement: number | null;
  kappa: number | null;
  table: number[][] | null;
}

export interface AdjudicationRecord {
  sample_id: string;
  case_id: string;
  clause_id: string;
  machine_verdict: boolean;
  human_verdict: boolean;
  note: string;
  timestamp: string;
}

export interface AdjudicationResponse {
  adjudication: AdjudicationRecord | null;
  misgrade_entry_id: string | null;
  note?: string;
}

export interface ClauseOutcome {
  clause_id: string;
  applicable: boolean;
  met_or_triggered: "true" | "false" | "unknown";
  base_points: number;
  adjusted_points: number;
  override_ref: string | null;
  insufficiency_flag: boolean;
  exclusion_reason: string | null;
}

export interface ScoreReport {
  case_id: string;
  registry_version: string;
  outcomes: ClauseOutcome[];
  earned: number;
  max_positive: number;
  normalized: number | "NOT_APPLICABLE";
  case_weight: number;
  trace: string[];
  condition_tags: string[];
  jurisdiction: string | null;
}

export interface WhatIfDelta {
  clause_id: string;
  points_before: number;
  points_after: number;
  delta: number;
  applicable_before: boolean;
  applicable_after: boolean;
  exclusion_reason_after: string | null;
}

export interface WhatIfResponse {
  before: ScoreReport;
  after: ScoreReport;
  deltas: WhatIfDelta[];
}

export interface TraceRecord {
  clause_id: string;
  guideline_title: string;
  recommendation_path: string;
  checklist_text: string;
  trace_quote: string;
  registry_version: string;
}

export type FormularyStatus = "available" | "shortage" | "unavailable";

// partial environment overlay understood by POST /api/v1/whatif
export interface EnvDelta {
  assertions?: Record<string, unknown>;
  patient?: Record<string, unknown>;
  context?: Record<string, unknown>;
  formulary?: Record<string, FormularyStatus | null>;
  jurisdiction?: string;
}

export interface ApiClient {
  getQueue(limit?: number): Promise<QueueResponse>;
  submitAdjudication(
    sampleId: string,
    humanVerdict: boolean,
    note?: string,
  ): Promise<AdjudicationResponse>;
  getAgreement(): Promise<AgreementStats>;
  whatIf(caseId: string, envDelta: EnvDelta): Promise<WhatIfResponse>;
  getTrace(clauseId: string): Promise<TraceRecord>;
  getReport(caseId: string): Promise<ScoreReport>;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

export class HttpApiClient implements ApiClient {
  constructor(private readonly baseUrl: string = "") {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let resp: Response;
    try {
      resp = await fetch(this.baseUrl + path, {
        method,
        headers: body === undefined ? {} : { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    const payload = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      const detail = (payload as { error?: string }).error ?? resp.statusText;
      throw new ApiError(resp.status, detail);
    }
    return payload as T;
  }

  getQueue(limit = 50): Promise<QueueResponse> {
    return this.request("GET", `/api/v1/audit/queue?limit=${limit}`);
  }

  submitAdjudication(
    sampleId: string,
    humanVerdict: boolean,
    note = "",
  ): Promise<AdjudicationResponse> {
    return this.request("POST", "/api/v1/audit/adjudications", {
      sample_id: sampleId,
      human_verdict: humanVerdict,
      note,
    });
  }

  getAgreement(): Promise<AgreementStats> {
    return this.request("GET", "/api/v1/stats/agreement");
  }

  whatIf(caseId: string, envDelta: EnvDelta): Promise<WhatIfResponse> {
    return this.request("POST", "/api/v1/whatif", { case_id: caseId, env_delta: envDelta });
  }

  getTrace(clauseId: string): Promise<TraceRecord> {
    return this.request("GET", `/api/v1/clauses/${encodeURIComponent(clauseId)}/trace`);
  }

  getReport(caseId: string): Promise<ScoreReport> {
    return this.request("GET", `/api/v1/reports/${encodeURIComponent(caseId)}`);
  }
}
