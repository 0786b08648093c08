import type {
  DecisionsPage,
  MergeResponse,
  RunConfigBody,
  RunSnapshot,
  StoredTaxonomyMeta,
  TaxonomyNodeDoc,
} from "./types.js";

/** Error payload of the service, plus status 0 for network-level failures. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }

  /** The service's error envelope, as the banners display it. */
  toJSON(): object {
    return { error: { code: this.code, message: this.message } };
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, "ConnectionError", String(err));
    }
    if (!response.ok) {
      let code = `HTTP ${response.status}`;
      let message = response.statusText || "request failed";
      try {
        const body = await response.json();
        if (body && body.error) {
          code = body.error.code ?? code;
          message = body.error.message ?? message;
        }
      } catch {
        // non-JSON error body; keep the status-line fallback
      }
      throw new ApiError(response.status, code, message);
    }
    return (await response.json()) as T;
  }

  uploadTaxonomy(document: string): Promise<StoredTaxonomyMeta> {
    return this.request("/api/taxonomies", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: document,
    });
  }

  listTaxonomies(): Promise<{ taxonomies: StoredTaxonomyMeta[] }> {
    return this.request("/api/taxonomies");
  }

  getTaxonomy(id: string): Promise<StoredTaxonomyMeta & { taxonomy: TaxonomyNodeDoc }> {
    return this.request(`/api/taxonomies/${encodeURIComponent(id)}`);
  }

  listModels(): Promise<{ models: string[] }> {
    return this.request("/api/models");
  }

  startRun(body: RunConfigBody): Promise<{ run_id: string; phase: string }> {
    return this.request("/api/runs", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  listRuns(): Promise<{ runs: RunSnapshot[] }> {
    return this.request("/api/runs");
  }

  getRun(runId: string): Promise<RunSnapshot> {
    return this.request(`/api/runs/${encodeURIComponent(runId)}`);
  }

  getDecisions(runId: string, after: number): Promise<DecisionsPage> {
    return this.request(`/api/runs/${encodeURIComponent(runId)}/decisions?after=${after}`);
  }

  getRunTaxonomy(runId: string): Promise<TaxonomyNodeDoc> {
    return this.request(`/api/runs/${encodeURIComponent(runId)}/taxonomy`);
  }

  cancelRun(runId: string): Promise<{ run_id: string; phase: string }> {
    return this.request(`/api/runs/${encodeURIComponent(runId)}/cancel`, { method: "POST" });
  }

  merge(leftId: string, rightId: string): Promise<MergeResponse> {
    return this.request("/api/merge", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ left_id: leftId, right_id: rightId }),
    });
  }

  /** Download targets; the browser fetches these itself via anchor clicks. */
  exportTaxonomyUrl(runId: string): string {
    return `${this.baseUrl}/api/runs/${encodeURIComponent(runId)}/taxonomy`;
  }

  exportDecisionsUrl(runId: string): string {
    return `${this.baseUrl}/api/runs/${encodeURIComponent(runId)}/decisions?after=0`;
  }
}
