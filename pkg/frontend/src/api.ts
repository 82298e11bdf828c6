/** Thin typed client over the server's JSON API. */

import type {
  ApiErrorBody,
  CatalogPair,
  Detection,
  FileListing,
  Job,
  JobConfigBody,
  PreprocessResult,
  StoredFile,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly details: string[] = [],
  ) {
    super(message);
  }
}

async function raiseForStatus(response: Response): Promise<void> {
  if (response.ok) {
    return;
  }
  let body: ApiErrorBody | null = null;
  try {
    body = (await response.json()) as ApiErrorBody;
  } catch {
    // non-JSON error body
  }
  throw new ApiError(
    response.status,
    body?.code ?? "error",
    body?.message ?? response.statusText,
    body?.details ?? [],
  );
}

export class ApiClient {
  token: string | null = null;

  constructor(readonly baseUrl: string = "") {}

  private headers(extra: Record<string, string> = {}): Record<string, string> {
    const headers: Record<string, string> = { ...extra };
    if (this.token) {
      headers["Authorization"] = `Bearer ${this.token}`;
    }
    return headers;
  }

  private async json<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method,
      headers: this.headers(
        body === undefined ? {} : { "Content-Type": "application/json" },
      ),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    await raiseForStatus(response);
    return (await response.json()) as T;
  }

  async signup(displayName: string, password: string): Promise<void> {
    await this.json("POST", "/api/accounts", {
      display_name: displayName,
      password,
    });
  }

  async login(displayName: string, password: string): Promise<void> {
    const body = await this.json<{ token: string }>("POST", "/api/sessions", {
      display_name: displayName,
      password,
    });
    this.token = body.token;
  }

  listFiles(prefix?: string): Promise<FileListing> {
    const query = prefix ? `?prefix=${encodeURIComponent(prefix)}` : "";
    return this.json("GET", `/api/files${query}`);
  }

  async uploadFile(relPath: string, content: Blob | Uint8Array): Promise<StoredFile> {
    const response = await fetch(`${this.baseUrl}/api/files/${relPath}`, {
      method: "PUT",
      headers: this.headers(),
      body: content as BodyInit,
    });
    await raiseForStatus(response);
    return (await response.json()) as StoredFile;
  }

  async downloadFile(relPath: string): Promise<Blob> {
    const response = await fetch(`${this.baseUrl}/api/files/${relPath}`, {
      headers: this.headers(),
    });
    await raiseForStatus(response);
    return response.blob();
  }

  async deleteFile(relPath: string): Promise<void> {
    const response = await fetch(`${this.baseUrl}/api/files/${relPath}`, {
      method: "DELETE",
      headers: this.headers(),
    });
    await raiseForStatus(response);
  }

  catalog(): Promise<{ pairs: CatalogPair[] }> {
    return this.json("GET", "/api/catalog");
  }

  preprocess(body: Record<string, unknown>): Promise<PreprocessResult> {
    return this.json("POST", "/api/preprocess", body);
  }

  createJob(body: JobConfigBody): Promise<Job> {
    return this.json("POST", "/api/jobs", body);
  }

  startJob(jobId: string): Promise<{ job: Job; queue_position: number }> {
    return this.json("POST", `/api/jobs/${jobId}/start`);
  }

  cancelJob(jobId: string): Promise<Job> {
    return this.json("POST", `/api/jobs/${jobId}/cancel`);
  }

  getJob(jobId: string): Promise<Job> {
    return this.json("GET", `/api/jobs/${jobId}`);
  }

  listJobs(): Promise<{ jobs: Job[] }> {
    return this.json("GET", "/api/jobs");
  }

  async loadDetections(relPath: string): Promise<Detection[]> {
    const blob = await this.downloadFile(relPath);
    return JSON.parse(await blob.text()) as Detection[];
  }

  schedulerStatus(): Promise<Record<string, unknown>> {
    return this.json("GET", "/api/scheduler/status");
  }
}
