// Thin typed client over the procedure-tracking HTTP API. Every call either
// resolves with the parsed body or throws ApiError carrying the server's
// error kind, so screens can surface failures as non-destructive banners.

import type {
  CmDocument,
  InstanceSummary,
  ReportDoc,
  SearchFilters,
  Session,
  SubmitResult,
  Verdict,
  ViewModel,
} from "./types.js";

export type FetchLike = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly kind: string,
    message: string,
    readonly body: unknown = null,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

function errorFromBody(status: number, body: unknown): ApiError {
  const detail =
    body && typeof body === "object" && "detail" in body
      ? (body as { detail: unknown }).detail
      : body;
  if (detail && typeof detail === "object") {
    const d = detail as { kind?: string; message?: string };
    return new ApiError(status, d.kind ?? "Error", d.message ?? `HTTP ${status}`, detail);
  }
  return new ApiError(status, "Error", String(detail ?? `HTTP ${status}`), detail);
}

export class ApiClient {
  private token: string | null = null;

  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  setToken(token: string | null): void {
    this.token = token;
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
    raw = false,
  ): Promise<T> {
    const headers: Record<string, string> = {};
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    if (body !== undefined) headers["Content-Type"] = "application/json";
    const response = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (raw && response.ok) return (await response.text()) as T;
    const text = await response.text();
    const parsed = text ? safeJson(text) : null;
    if (!response.ok) throw errorFromBody(response.status, parsed ?? text);
    return parsed as T;
  }

  async login(user: string, password: string): Promise<Session> {
    const session = await this.request<Session>("POST", "/login", {
      user,
      password,
    });
    this.token = session.token;
    return session;
  }

  async logout(): Promise<void> {
    await this.request("DELETE", "/session");
    this.token = null;
  }

  getDefinitions(): Promise<string> {
    return this.request("GET", "/definitions", undefined, true);
  }

  putDefinitions(text: string): Promise<{ ok: boolean; warnings: string[] }> {
    return this.request("PUT", "/definitions", { text });
  }

  buildCm(strategy = "by-process"): Promise<CmDocument> {
    return this.request("POST", `/cm/build?strategy=${encodeURIComponent(strategy)}`);
  }

  /** Resolves with the verdict for both correct (200) and incorrect (422) models. */
  async verifyCm(order: string[]): Promise<Verdict> {
    try {
      return await this.request<Verdict>("POST", "/cm/verify", { order });
    } catch (err) {
      if (err instanceof ApiError && err.status === 422 && err.body
          && typeof err.body === "object" && "correct" in err.body) {
        return err.body as Verdict;
      }
      throw err;
    }
  }

  graphDot(): Promise<string> {
    return this.request("GET", "/cm/graph.dot", undefined, true);
  }

  createProcedure(
    procType: string,
    params: Record<string, string> = {},
  ): Promise<SubmitResult> {
    return this.request("POST", "/procedures", { proc_type: procType, params });
  }

  searchProcedures(filters: SearchFilters = {}): Promise<{ results: InstanceSummary[] }> {
    const qs = new URLSearchParams();
    for (const [key, value] of Object.entries(filters)) {
      if (value !== undefined) qs.set(key, String(value));
    }
    const suffix = qs.size ? `?${qs}` : "";
    return this.request("GET", `/procedures${suffix}`);
  }

  getView(instanceId: string, role: string): Promise<ViewModel> {
    return this.request(
      "GET",
      `/procedures/${encodeURIComponent(instanceId)}/view?role=${encodeURIComponent(role)}`,
    );
  }

  submitStep(
    instanceId: string,
    stepId: string,
    payload: { role: string; version: number; fields: Record<string, string> },
  ): Promise<SubmitResult> {
    return this.request(
      "POST",
      `/procedures/${encodeURIComponent(instanceId)}/steps/${encodeURIComponent(stepId)}`,
      payload,
    );
  }

  archive(instanceId: string, override = false): Promise<{ id: string; status: string }> {
    return this.request(
      "POST",
      `/procedures/${encodeURIComponent(instanceId)}/archive`,
      { override },
    );
  }

  getReport(kind: string): Promise<ReportDoc> {
    return this.request("GET", `/reports/${encodeURIComponent(kind)}`);
  }

  getReportCsv(kind: string): Promise<string> {
    return this.request(
      "GET",
      `/reports/${encodeURIComponent(kind)}?format=csv`,
      undefined,
      true,
    );
  }
}

function safeJson(text: string): unknown {
  try {
    return JSON.parse(text);
  } catch {
    return null;
  }
}
