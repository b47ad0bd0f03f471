// Thin fetch client for the /v1 API. All state changes in the UI go
// through this module; nothing else talks to the network.

import type {
  AuditKind,
  CellValue,
  DatasetInfo,
  GenerationResult,
  JobInfo,
  ModelInfo,
  SessionInfo,
} from "./types.js";

export type FieldError = { feature: string; message: string };
export type ErrorDetail = string | FieldError[];

export class ApiError extends Error {
  readonly code: string;
  readonly status: number;
  readonly detail: ErrorDetail;

  constructor(status: number, code: string, detail: ErrorDetail) {
    super(typeof detail === "string" ? detail : `${code} (${detail.length} field(s))`);
    this.name = "ApiError";
    this.status = status;
    this.code = code;
    this.detail = detail;
  }

  // message for one feature when the server answered with field errors
  fieldMessage(feature: string): string | null {
    if (typeof this.detail === "string") {
      return null;
    }
    const hit = this.detail.find((f) => f.feature === feature);
    return hit ? hit.message : null;
  }

  text(): string {
    if (typeof this.detail === "string") {
      return this.detail;
    }
    return this.detail.map((f) => `${f.feature}: ${f.message}`).join("; ");
  }
}

export interface GenerateOptions {
  seed?: number;
  generations?: number;
  population_size?: number;
  k?: number;
  target_class?: string | null;
}

export class ApiClient {
  readonly baseUrl: string;
  requestCount = 0;

  constructor(baseUrl = "") {
    this.baseUrl = baseUrl.replace(/\/$/, "");
  }

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    this.requestCount += 1;
    const response = await fetch(this.baseUrl + path, {
      method,
      headers: { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = (await response.json()) as Record<string, unknown>;
    if (!response.ok) {
      const err = (payload as { error?: { code?: string; detail?: ErrorDetail } }).error;
      throw new ApiError(
        response.status,
        err?.code ?? "unknown",
        err?.detail ?? `HTTP ${response.status}`,
      );
    }
    return payload as T;
  }

  healthz(): Promise<{ status: string; models: number; sessions: number }> {
    return this.call("GET", "/v1/healthz");
  }

  loadModel(path: string): Promise<ModelInfo> {
    return this.call("POST", "/v1/models", { path });
  }

  createDatasetFromCsv(csvPath: string, modelId: string): Promise<DatasetInfo> {
    return this.call("POST", "/v1/datasets", { csv_path: csvPath, model_id: modelId });
  }

  createSession(modelId: string, instance: CellValue[]): Promise<SessionInfo> {
    return this.call("POST", "/v1/sessions", { model_id: modelId, instance });
  }

  patchConstraints(
    sessionId: string,
    patch: Record<string, unknown>,
  ): Promise<{ id: string; constraints: Record<string, unknown> }> {
    return this.call("PATCH", `/v1/sessions/${sessionId}/constraints`, patch);
  }

  generate(sessionId: string, options: GenerateOptions = {}): Promise<GenerationResult> {
    return this.call("POST", `/v1/sessions/${sessionId}/counterfactuals`, options);
  }

  startAudit(
    kind: AuditKind,
    body: Record<string, unknown>,
  ): Promise<{ job_id: string; status: string }> {
    return this.call("POST", `/v1/audits/${kind}`, body);
  }

  getJob(jobId: string): Promise<JobInfo> {
    return this.call("GET", `/v1/jobs/${jobId}`);
  }

  // Poll until the job leaves the queue; audits are minutes at most.
  async waitForJob(
    jobId: string,
    intervalMs = 250,
    timeoutMs = 120_000,
  ): Promise<JobInfo> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const job = await this.getJob(jobId);
      if (job.status === "done" || job.status === "failed") {
        return job;
      }
      if (Date.now() > deadline) {
        throw new ApiError(504, "client_timeout", `job ${jobId} still ${job.status}`);
      }
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
    }
  }
}
