/** Thin typed client for the lyric service.
 *
 * Every server interaction in the UI goes through these three calls, which
 * map one-to-one onto the documented endpoints: POST /jobs, GET /jobs/{id},
 * POST /jobs/{id}/redecode. The fetch implementation is injectable so tests
 * can run against a scripted transport.
 */

import type { JobSnapshot } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface UploadFilePart {
  name: string;
  data: Blob | Uint8Array<ArrayBuffer> | ArrayBuffer;
}

/** What the controller needs from the service; ApiClient is the live one. */
export interface LyricApi {
  submitJob(
    file: UploadFilePart,
    config?: Record<string, unknown>,
  ): Promise<{ id: string }>;
  getJob(jobId: string): Promise<JobSnapshot>;
  redecode(jobId: string, overrides: Record<string, number>): Promise<JobSnapshot>;
}

export class ApiClient implements LyricApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  /** POST /jobs; resolves to the new job id. */
  async submitJob(
    file: UploadFilePart,
    config?: Record<string, unknown>,
  ): Promise<{ id: string }> {
    const form = new FormData();
    const blob =
      file.data instanceof Blob
        ? file.data
        : new Blob([file.data], { type: "audio/wav" });
    form.append("audio", blob, file.name);
    if (config && Object.keys(config).length > 0) {
      form.append("config", JSON.stringify(config));
    }
    const response = await this.fetchImpl(`${this.baseUrl}/jobs`, {
      method: "POST",
      body: form,
    });
    return this.parse<{ id: string }>(response);
  }

  /** GET /jobs/{id}; resolves to the full job snapshot. */
  async getJob(jobId: string): Promise<JobSnapshot> {
    const response = await this.fetchImpl(
      `${this.baseUrl}/jobs/${encodeURIComponent(jobId)}`,
    );
    return this.parse<JobSnapshot>(response);
  }

  /** POST /jobs/{id}/redecode; resolves to the refreshed snapshot. */
  async redecode(
    jobId: string,
    overrides: Record<string, number>,
  ): Promise<JobSnapshot> {
    const response = await this.fetchImpl(
      `${this.baseUrl}/jobs/${encodeURIComponent(jobId)}/redecode`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(overrides),
      },
    );
    return this.parse<JobSnapshot>(response);
  }

  private async parse<T>(response: Response): Promise<T> {
    if (!response.ok) {
      throw new ApiError(response.status, await errorDetail(response));
    }
    return (await response.json()) as T;
  }
}

/** Pull the service's error message out of a failed response. */
async function errorDetail(response: Response): Promise<string> {
  const fallback = `${response.status} ${response.statusText}`.trim();
  try {
    const body: unknown = await response.clone().json();
    if (body && typeof body === "object" && "detail" in body) {
      const detail = (body as { detail: unknown }).detail;
      if (typeof detail === "string") return detail;
      return JSON.stringify(detail);
    }
  } catch {
    // fall through to plain text
  }
  try {
    const text = await response.text();
    if (text) return text;
  } catch {
    // fall through to the status line
  }
  return fallback;
}
