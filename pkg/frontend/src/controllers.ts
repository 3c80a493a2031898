// Session state machines behind the three views. All numbers they hold come
// straight from API payloads; submitting only mutates state on success, so a
// failed POST leaves the auditor's input intact.

import type {
  AdjudicationResponse,
  AgreementStats,
  ApiClient,
  EnvDelta,
  FormularyStatus,
  QueueItem,
  WhatIfResponse,
} from "./api.js";
import { ApiError } from "./api.js";

export interface SubmissionOutcome {
  sampleId: string;
  humanVerdict: boolean;
  misgradeEntryId: string | null;
}

export class AdjudicationFlow {
  items: QueueItem[] = [];
  pending = 0;
  total = 0;
  stats: AgreementStats | null = null;
  lastSubmission: SubmissionOutcome | null = null;
  error: string | null = null;
  private submitted = new Map<string, SubmissionOutcome>();

  constructor(private readonly api: ApiClient) {}

  alreadyAdjudicated(sampleId: string): boolean {
    return this.submitted.has(sampleId);
  }

  async loadQueue(limit = 50): Promise<void> {
    try {
      const queue = await this.api.getQueue(limit);
      this.items = queue.items;
      this.pending = queue.pending;
      this.total = queue.total;
      this.error = null;
    } catch (err) {
      this.error = describe(err);
    }
  }

  async refreshStats(): Promise<void> {
    try {
      this.stats = await this.api.getAgreement();
      this.error = null;
    } catch (err) {
      this.error = describe(err);
    }
  }

  /** Submit a verdict; on success the agreement dashboard is refreshed. */
  async submit(sampleId: string, humanVerdict: boolean, note = ""): Promise<AdjudicationResponse | null> {
    if (this.submitted.has(sampleId)) {
      this.error = `sample ${sampleId} was already adjudicated in this session`;
      return null;
    }
    let response: AdjudicationResponse;
    try {
      response = await this.api.submitAdjudication(sampleId, humanVerdict, note);
    } catch (err) {
      this.error = describe(err);
      return null;
    }
    const outcome: SubmissionOutcome = {
      sampleId,
      humanVerdict,
      misgradeEntryId: response.misgrade_entry_id,
    };
    this.submitted.set(sampleId, outcome);
    this.lastSubmission = outcome;
    this.items = this.items.filter((item) => item.sample_id !== sampleId);
    this.pending = Math.max(0, this.pending - 1);
    this.error = null;
    await this.refreshStats();
    return response;
  }
}

export class WhatIfPanel {
  caseId: string | null = null;
  formulary: Record<string, FormularyStatus> = {};
  context: Record<string, string> = {};
  patient: Record<string, number> = {};
  result: WhatIfResponse | null = null;
  error: string | null = null;

  constructor(private readonly api: ApiClient) {}

  setCase(caseId: string): void {
    this.caseId = caseId;
    this.result = null;
  }

  setFormulary(drug: string, status: FormularyStatus | null): void {
    if (status === null) {
      delete this.formulary[drug];
    } else {
      this.formulary[drug] = status;
    }
  }

  setContext(key: string, value: string | null): void {
    if (value === null) {
      delete this.context[key];
    } else {
      this.context[key] = value;
    }
  }

  setPatient(key: string, value: number | null): void {
    if (value === null) {
      delete this.patient[key];
    } else {
      this.patient[key] = value;
    }
  }

  get envDelta(): EnvDelta {
    const delta: EnvDelta = {};
    if (Object.keys(this.formulary).length) delta.formulary = { ...this.formulary };
    if (Object.keys(this.context).length) delta.context = { ...this.context };
    if (Object.keys(this.patient).length) delta.patient = { ...this.patient };
    return delta;
  }

  /** Re-score the case with the current toggles overlaid; toggles stay editable. */
  async run(): Promise<void> {
    if (this.caseId === null) {
      this.error = "pick a case first";
      return;
    }
    try {
      this.result = await this.api.whatIf(this.caseId, this.envDelta);
      this.error = null;
    } catch (err) {
      this.error = describe(err);
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) {
    return err.status === 0 ? err.message : `HTTP ${err.status}: ${err.message}`;
  }
  return String(err);
}
