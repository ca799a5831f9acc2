// Typed client for the retention service. Every call returns both the parsed
// body and the raw response text so callers can compare payloads byte-wise.

export interface HealthResponse {
  status: string;
  strata: number;
  draws: number;
  covariates: string[];
  schedule_options: number[];
  default_delta: number;
}

export interface SubjectQuery {
  covariates: Record<string, number>;
  pattern: boolean[];
  site?: string | null;
  seed: number;
  n_sims?: number;
}

export interface PredictResponse {
  psi_mean: number;
  psi_median: number;
  psi_ci: [number, number];
  delta: number;
  schedule: number;
  strata: { return: string; death: string };
}

export interface OptimizeResponse {
  pmf: Record<string, number>;
  mode: number;
  triangle: [number, number];
  delta: number;
  strata: Record<string, { return: string; death: string }>;
}

export interface CurvePoint {
  delta: number;
  mean: number;
  lo: number;
  hi: number;
}

export interface CurveResponse {
  schedule: number;
  strata: { return: string; death: string };
  curve: CurvePoint[];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly error: string,
    readonly detail: string,
  ) {
    super(`${error}: ${detail}`);
  }

  get isUnknownStratum(): boolean {
    return this.error === "UnknownStratum";
  }
}

export interface ApiResult<T> {
  body: T;
  raw: string;
}

export class RetentionClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = (...args) => fetch(...args),
  ) {}

  async health(): Promise<HealthResponse> {
    const res = await this.fetchImpl(`${this.baseUrl}/health`);
    if (!res.ok) throw new ApiError(res.status, "HTTPError", await res.text());
    return (await res.json()) as HealthResponse;
  }

  predict(body: SubjectQuery & { schedule: number; delta?: number }) {
    return this.post<PredictResponse>("/predict", body);
  }

  optimize(body: SubjectQuery & { delta?: number; options?: number[] }) {
    return this.post<OptimizeResponse>("/optimize", body);
  }

  curve(body: SubjectQuery & { schedule: number; delta_grid: number[] }) {
    return this.post<CurveResponse>("/curve", body);
  }

  private async post<T>(path: string, body: unknown): Promise<ApiResult<T>> {
    const res = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    const raw = await res.text();
    if (!res.ok) {
      let error = "HTTPError";
      let detail = raw;
      try {
        const parsed = JSON.parse(raw) as { error?: string; detail?: string };
        if (parsed.error) error = parsed.error;
        if (parsed.detail) detail = parsed.detail;
      } catch {
        // non-JSON error body; keep the raw text as detail
      }
      throw new ApiError(res.status, error, detail);
    }
    return { body: JSON.parse(raw) as T, raw };
  }
}
