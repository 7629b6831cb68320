/** Typed client for the correction service's REST API.
 *
 * Pure HTTP/JSON: the only coupling to the backend is the endpoint contract.
 * All methods throw ServiceError with the HTTP status and the server's
 * detail string on non-2xx responses.
 */

export interface Prompt {
  id: string;
  word: string;
  phonemes: string[];
  target_index: number;
  target_phoneme: string;
  duration_fractions: number[] | null;
}

export type JobState = "queued" | "running" | "done" | "failed";

export interface AudioUrls {
  vocoder_only: string;
  generated: string;
}

export interface CorrectionJob {
  id: string;
  prompt_id: string;
  state: JobState;
  error: string | null;
  audio?: AudioUrls;
}

export interface SubmitResponse {
  job_id: string;
  state: "queued";
}

export type AbLabel = "A" | "B";
export type AbCondition = "generated" | "vocoder_only";
export type AbMapping = Record<AbLabel, AbCondition>;

export interface AbPair {
  a_url: string;
  b_url: string;
  reveal_token: string;
}

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`service error ${status}: ${detail}`);
    this.name = "ServiceError";
  }
}

/** The surface the session state machine depends on; mocked in tests. */
export interface CorrectionService {
  listPrompts(): Promise<Prompt[]>;
  submitRecording(promptId: string, audio: Blob): Promise<SubmitResponse>;
  fetchCorrection(jobId: string): Promise<CorrectionJob>;
  fetchAbPair(jobId: string): Promise<AbPair>;
}

type FetchLike = typeof fetch;

async function readDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
    return JSON.stringify(body);
  } catch {
    return response.statusText || "request failed";
  }
}

export class HttpServiceClient implements CorrectionService {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await this.fetchImpl(this.baseUrl + path, init);
    if (!response.ok) {
      throw new ServiceError(response.status, await readDetail(response));
    }
    return response;
  }

  async listPrompts(): Promise<Prompt[]> {
    const response = await this.request("/api/prompts");
    return (await response.json()) as Prompt[];
  }

  async submitRecording(promptId: string, audio: Blob): Promise<SubmitResponse> {
    const form = new FormData();
    form.append("prompt_id", promptId);
    form.append("audio", audio, "recording.wav");
    const response = await this.request("/api/recordings", {
      method: "POST",
      body: form,
    });
    return (await response.json()) as SubmitResponse;
  }

  async fetchCorrection(jobId: string): Promise<CorrectionJob> {
    const response = await this.request(
      `/api/corrections/${encodeURIComponent(jobId)}`,
    );
    return (await response.json()) as CorrectionJob;
  }

  async fetchAbPair(jobId: string): Promise<AbPair> {
    const response = await this.request(`/api/ab/${encodeURIComponent(jobId)}`);
    return (await response.json()) as AbPair;
  }

  /** Absolute URL for an audio path returned by the service. */
  audioUrl(path: string): string {
    return this.baseUrl + path;
  }
}

/** Decode the opaque A/B token (URL-safe base64 JSON).  Call only after the
 * user has committed a choice; until then the mapping must stay concealed. */
export function decodeRevealToken(token: string): AbMapping {
  const b64 = token.replace(/-/g, "+").replace(/_/g, "/");
  const padded = b64 + "=".repeat((4 - (b64.length % 4)) % 4);
  const mapping = JSON.parse(atob(padded)) as AbMapping;
  if (
    !["generated", "vocoder_only"].includes(mapping.A) ||
    !["generated", "vocoder_only"].includes(mapping.B) ||
    mapping.A === mapping.B
  ) {
    throw new Error("malformed reveal token");
  }
  return mapping;
}
