import type { Lease, LeaseResponse, ProjectInfo, SubmitAck, SubmitBody } from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(message);
  }
}

export class NetworkError extends Error {}

type FetchLike = typeof fetch;

/** Thin client for the annotation server; the UI talks to nothing else. */
export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly token?: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    return headers;
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, {
        ...init,
        headers: { ...this.headers(), ...(init?.headers ?? {}) },
      });
    } catch (err) {
      throw new NetworkError(String(err));
    }
    if (!response.ok) {
      let detail = "";
      try {
        const body = (await response.json()) as { detail?: unknown };
        detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
      } catch {
        detail = response.statusText;
      }
      throw new ApiError(`${response.status}: ${detail}`, response.status, detail);
    }
    return response;
  }

  async listProjects(): Promise<ProjectInfo[]> {
    const response = await this.request("/projects");
    const body = (await response.json()) as { projects: ProjectInfo[] };
    return body.projects;
  }

  async leaseNext(projectId: string, annotatorId: string): Promise<Lease | null> {
    const response = await this.request(`/projects/${projectId}/lease`, {
      method: "POST",
      body: JSON.stringify({ annotator_id: annotatorId }),
    });
    const body = (await response.json()) as LeaseResponse;
    return body.lease;
  }

  async submitResult(taskId: string, body: SubmitBody): Promise<SubmitAck> {
    const response = await this.request(`/tasks/${taskId}/result`, {
      method: "POST",
      body: JSON.stringify(body),
    });
    return (await response.json()) as SubmitAck;
  }

  async guideline(taskKind: string): Promise<string> {
    const response = await this.request(`/guidelines/${taskKind}`);
    return response.text();
  }

  async exportProject(projectId: string): Promise<Record<string, unknown>[]> {
    const response = await this.request(`/projects/${projectId}/export`);
    const text = await response.text();
    return text
      .split("\n")
      .filter((line) => line.trim() !== "")
      .map((line) => JSON.parse(line) as Record<string, unknown>);
  }
}
