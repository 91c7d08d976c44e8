/** Typed client for the workshop session API.
 *
 * Every number the app displays on the curve screen comes out of these
 * payloads verbatim; the client performs no statistics of its own.
 */

export interface SchemeView {
  levels: number[];
  spacing: string;
  level_count: number;
  top_level: number;
  d_policy: "per_expert" | "consensus";
  aggregator: string;
}

export interface RosterEntry {
  expert_id: string;
  name: string;
}

export interface DelphiRoundStats {
  min: number;
  median: number;
  max: number;
  spread: number;
}

export interface DelphiView {
  status: "collecting" | "feedback" | "consensus";
  round: number;
  tolerance: number;
  pending_count: number;
  rounds: DelphiRoundStats[];
  consensus_D: number | null;
}

export interface EstimateRow {
  expert_id: string;
  level: number;
  time_days: number;
}

export interface CurveSummary {
  grid: number[];
  mean: number[];
  lower95: number[];
  upper95: number[];
  mode: number[];
  knots: number[];
  params: {
    variance: number;
    length_scale: number;
    noise_variance: number;
    kind: string;
  };
  constraints: {
    monotone: boolean;
    bounded: boolean;
    lower: number;
    upper: number;
  };
}

export interface FittedView {
  summary: CurveSummary;
  noise_source: string;
  options: Record<string, unknown>;
  version: number;
}

export interface SessionView {
  session_id: string;
  version: number;
  stage: "delphi" | "estimates" | "fitted";
  scheme: SchemeView;
  roster: RosterEntry[];
  delphi: DelphiView | null;
  personal_d_count: number;
  estimates: EstimateRow[];
  cooke: boolean;
  fitted: FittedView | null;
  n_events: number;
}

export interface CreateResponse {
  session_id: string;
  version: number;
  stage: string;
}

export interface EnrollResponse {
  expert_id: string;
  version: number;
  stage: string;
}

export interface DelphiResponse {
  status: string;
  round?: number;
  count: number;
  version: number;
  feedback?: DelphiRoundStats;
  consensus_D?: number;
}

export interface EstimatesResponse {
  accepted_levels: number[];
  version: number;
}

export interface FitResponse {
  summary: CurveSummary;
  noise_source: string;
  version: number;
}

export interface CurveResponse {
  fitted: CurveSummary | null;
  noise_source?: string;
  fitted_at_version?: number;
  version: number;
}

/** Error payload the service returns on every non-2xx response. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    detail: string,
  ) {
    super(detail);
  }
}

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

async function parseError(resp: Response): Promise<ApiError> {
  let code = "http_error";
  let detail = `${resp.status} ${resp.statusText}`;
  try {
    const body = (await resp.json()) as {
      error_code?: string;
      detail?: string;
    };
    if (body && typeof body.error_code === "string") code = body.error_code;
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    /* non-JSON error body: keep the HTTP fallback */
  }
  return new ApiError(resp.status, code, detail);
}

export class ApiClient {
  constructor(private readonly fetchImpl: FetchLike = (input, init) =>
    fetch(input, init)) {}

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const resp = await this.fetchImpl(path, init);
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as T;
  }

  createSession(scheme: {
    levels?: number[];
    level_count?: number;
    spacing?: string;
    top_level?: number;
    d_policy?: "per_expert" | "consensus";
    aggregator?: string;
  }): Promise<CreateResponse> {
    return this.request("POST", "/sessions", { scheme });
  }

  getSession(sessionId: string): Promise<SessionView> {
    return this.request("GET", `/sessions/${sessionId}`);
  }

  enroll(
    sessionId: string,
    name: string,
    expectedVersion?: number,
  ): Promise<EnrollResponse> {
    return this.request("POST", `/sessions/${sessionId}/experts`, {
      name,
      ...(expectedVersion === undefined
        ? {}
        : { expected_version: expectedVersion }),
    });
  }

  submitDelphi(
    sessionId: string,
    expertId: string,
    d: number,
  ): Promise<DelphiResponse> {
    return this.request("POST", `/sessions/${sessionId}/delphi`, {
      expert_id: expertId,
      D: d,
    });
  }

  submitEstimates(
    sessionId: string,
    expertId: string,
    items: { level: number; time_days: number }[],
    expectedVersion?: number,
  ): Promise<EstimatesResponse> {
    return this.request("POST", `/sessions/${sessionId}/estimates`, {
      expert_id: expertId,
      items,
      ...(expectedVersion === undefined
        ? {}
        : { expected_version: expectedVersion }),
    });
  }

  fitSession(
    sessionId: string,
    options?: Record<string, unknown>,
  ): Promise<FitResponse> {
    return this.request("POST", `/sessions/${sessionId}/fit`, options ?? {});
  }

  getCurve(sessionId: string): Promise<CurveResponse> {
    return this.request("GET", `/sessions/${sessionId}/curve`);
  }
}
