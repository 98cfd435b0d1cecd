// Typed client for the studio's only backend surface: /api/v1.
// Every request is funneled through one helper that records (method, url)
// so the contract test can verify no undocumented call can ever be issued.

import { API_BASE } from "./routes.js";
import type {
  JobView,
  MessageResponse,
  ScenePayload,
  SessionView,
} from "./types.js";

export interface CallRecord {
  method: "GET" | "POST";
  url: string;
}

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
  }
}

export class ApiClient {
  readonly calls: CallRecord[] = [];

  constructor(
    private readonly origin: string = "",
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async request<T>(
    method: "GET" | "POST",
    path: string,
    body?: unknown,
  ): Promise<T> {
    this.calls.push({ method, url: path });
    const response = await this.fetchImpl(`${this.origin}${path}`, {
      method,
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = (await response.json()) as T & {
      error?: { message?: string };
    };
    if (!response.ok) {
      const message = payload?.error?.message ?? `HTTP ${response.status}`;
      throw new ApiError(message, response.status);
    }
    return payload;
  }

  health(): Promise<{ status: string }> {
    return this.request("GET", `${API_BASE}/health`);
  }

  createSession(body: {
    seed?: number;
    scripted_responses?: string[];
  }): Promise<{ session_id: string }> {
    return this.request("POST", `${API_BASE}/sessions`, body);
  }

  getSession(sessionId: string): Promise<SessionView> {
    return this.request("GET", `${API_BASE}/sessions/${sessionId}`);
  }

  postMessage(sessionId: string, text: string): Promise<MessageResponse> {
    return this.request("POST", `${API_BASE}/sessions/${sessionId}/messages`, {
      text,
    });
  }

  getScene(sessionId: string, version?: number): Promise<ScenePayload> {
    const suffix = version === undefined ? "" : `?version=${version}`;
    return this.request("GET", `${API_BASE}/sessions/${sessionId}/scene${suffix}`);
  }

  startVariants(body: {
    scene: unknown;
    spec?: unknown;
    n: number;
    seed: number;
  }): Promise<{ job_id: string }> {
    return this.request("POST", `${API_BASE}/variants`, body);
  }

  startEpisodes(body: {
    scene: unknown;
    policy: string;
    episodes: number;
    seed: number;
    intent?: string;
    config?: unknown;
  }): Promise<{ job_id: string }> {
    return this.request("POST", `${API_BASE}/episodes`, body);
  }

  getJob(jobId: string): Promise<JobView> {
    return this.request("GET", `${API_BASE}/jobs/${jobId}`);
  }

  getEpisodeRecord(jobId: string, index: number): Promise<{ record: unknown }> {
    return this.request(
      "GET",
      `${API_BASE}/episodes/${jobId}/records?index=${index}`,
    );
  }

  countEpisodeRecords(jobId: string): Promise<{ count: number }> {
    return this.request("GET", `${API_BASE}/episodes/${jobId}/records`);
  }

  runAnalysis(body: { rows?: unknown[]; fixture?: string }): Promise<{
    rows: number;
    fit: { slope: number; r_squared: number };
  }> {
    return this.request("POST", `${API_BASE}/analysis`, body);
  }
}
