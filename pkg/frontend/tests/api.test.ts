/** Unit tests for the HTTP client, run against a mocked fetch. */
import { describe, expect, it, vi } from "vitest";

import {
  HttpServiceClient,
  ServiceError,
  decodeRevealToken,
  type AbMapping,
  type Prompt,
} from "../src/api.js";

const PROMPT: Prompt = {
  id: "utt0000",
  word: "pa sil pb",
  phonemes: ["sil", "pa", "sil", "pb", "sil"],
  target_index: 1,
  target_phoneme: "pb",
  duration_fractions: [0.1, 0.3, 0.2, 0.3, 0.1],
};

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

type FetchArgs = { url: string; init: RequestInit | undefined };

/** Mock fetch returning a fixed response and recording the call. */
function mockFetch(response: Response | (() => Response)) {
  const calls: FetchArgs[] = [];
  const impl = vi.fn(async (input: RequestInfo | URL, init?: RequestInit) => {
    calls.push({ url: String(input), init });
    return typeof response === "function" ? response() : response;
  });
  return { fetchImpl: impl as unknown as typeof fetch, calls };
}

function encodeToken(mapping: AbMapping): string {
  return Buffer.from(JSON.stringify(mapping)).toString("base64url");
}

describe("HttpServiceClient", () => {
  it("lists prompts from the prompts endpoint", async () => {
    const { fetchImpl, calls } = mockFetch(jsonResponse([PROMPT]));
    const client = new HttpServiceClient("http://svc", fetchImpl);
    const prompts = await client.listPrompts();
    expect(calls[0]!.url).toBe("http://svc/api/prompts");
    expect(prompts).toEqual([PROMPT]);
  });

  it("submits recordings as multipart form data with a filename", async () => {
    const { fetchImpl, calls } = mockFetch(
      jsonResponse({ job_id: "j1", state: "queued" }, 202),
    );
    const client = new HttpServiceClient("", fetchImpl);
    const audio = new Blob([new Uint8Array([82, 73, 70, 70])], {
      type: "audio/wav",
    });
    const result = await client.submitRecording("utt0000", audio);

    expect(result).toEqual({ job_id: "j1", state: "queued" });
    expect(calls[0]!.url).toBe("/api/recordings");
    expect(calls[0]!.init?.method).toBe("POST");
    const body = calls[0]!.init?.body as FormData;
    expect(body).toBeInstanceOf(FormData);
    expect(body.get("prompt_id")).toBe("utt0000");
    const file = body.get("audio") as File;
    expect(file).toBeInstanceOf(File);
    expect(file.name).toBe("recording.wav");
    expect(file.size).toBe(4);
  });

  it("fetches job status with an URL-encoded job id", async () => {
    const done = {
      id: "job a",
      prompt_id: "utt0000",
      state: "done",
      error: null,
      audio: {
        vocoder_only: "/api/audio/job a/vocoder_only.wav",
        generated: "/api/audio/job a/generated.wav",
      },
    };
    const { fetchImpl, calls } = mockFetch(jsonResponse(done));
    const client = new HttpServiceClient("http://svc", fetchImpl);
    const job = await client.fetchCorrection("job a");
    expect(calls[0]!.url).toBe("http://svc/api/corrections/job%20a");
    expect(job.state).toBe("done");
    expect(job.audio?.generated).toContain("generated.wav");
  });

  it("raises ServiceError with the server's detail on 404", async () => {
    const { fetchImpl } = mockFetch(
      jsonResponse({ detail: "unknown prompt 'nope'" }, 404),
    );
    const client = new HttpServiceClient("", fetchImpl);
    const err = await client
      .submitRecording("nope", new Blob([new Uint8Array(1)]))
      .then(() => null)
      .catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect((err as ServiceError).status).toBe(404);
    expect((err as ServiceError).detail).toBe("unknown prompt 'nope'");
    expect((err as ServiceError).message).toBe(
      "service error 404: unknown prompt 'nope'",
    );
  });

  it("raises ServiceError on 422 rejections", async () => {
    const { fetchImpl } = mockFetch(
      jsonResponse({ detail: "audio too short for the correction window" }, 422),
    );
    const client = new HttpServiceClient("", fetchImpl);
    await expect(
      client.submitRecording("utt0000", new Blob([new Uint8Array(1)])),
    ).rejects.toMatchObject({
      status: 422,
      detail: "audio too short for the correction window",
    });
  });

  it("raises ServiceError on a 409 A/B request for an unfinished job", async () => {
    const { fetchImpl } = mockFetch(
      jsonResponse({ detail: "correction not finished" }, 409),
    );
    const client = new HttpServiceClient("", fetchImpl);
    await expect(client.fetchAbPair("j1")).rejects.toMatchObject({
      status: 409,
      detail: "correction not finished",
    });
  });

  it("falls back to the status text when the error body is not JSON", async () => {
    const { fetchImpl } = mockFetch(
      new Response("boom", { status: 500, statusText: "Internal Server Error" }),
    );
    const client = new HttpServiceClient("", fetchImpl);
    await expect(client.listPrompts()).rejects.toMatchObject({
      status: 500,
      detail: "Internal Server Error",
    });
  });

  it("serializes structured error bodies without a detail string", async () => {
    const { fetchImpl } = mockFetch(jsonResponse({ errors: [1, 2] }, 400));
    const client = new HttpServiceClient("", fetchImpl);
    await expect(client.listPrompts()).rejects.toMatchObject({
      detail: '{"errors":[1,2]}',
    });
  });

  it("fetches the A/B pair and joins audio URLs onto the base", async () => {
    const pair = {
      a_url: "/api/audio/j1/generated.wav",
      b_url: "/api/audio/j1/vocoder_only.wav",
      reveal_token: encodeToken({ A: "generated", B: "vocoder_only" }),
    };
    const { fetchImpl, calls } = mockFetch(jsonResponse(pair));
    const client = new HttpServiceClient("http://svc:81", fetchImpl);
    const got = await client.fetchAbPair("j1");
    expect(calls[0]!.url).toBe("http://svc:81/api/ab/j1");
    expect(got).toEqual(pair);
    expect(client.audioUrl(got.a_url)).toBe(
      "http://svc:81/api/audio/j1/generated.wav",
    );
  });
});

describe("decodeRevealToken", () => {
  it("decodes unpadded URL-safe base64 tokens in both orders", () => {
    expect(decodeRevealToken(encodeToken({ A: "generated", B: "vocoder_only" })))
      .toEqual({ A: "generated", B: "vocoder_only" });
    expect(decodeRevealToken(encodeToken({ A: "vocoder_only", B: "generated" })))
      .toEqual({ A: "vocoder_only", B: "generated" });
  });

  it("accepts padded tokens with JSON whitespace, as servers emit them", () => {
    // Python's urlsafe_b64encode keeps '=' padding and json.dumps adds spaces.
    const body = '{"A": "vocoder_only", "B": "generated"}';
    let token = Buffer.from(body)
      .toString("base64")
      .replace(/\+/g, "-")
      .replace(/\//g, "_");
    while (token.length % 4 !== 0) token += "=";
    expect(decodeRevealToken(token)).toEqual({
      A: "vocoder_only",
      B: "generated",
    });
  });

  it("rejects tokens whose sides agree or name unknown conditions", () => {
    expect(() =>
      decodeRevealToken(
        Buffer.from('{"A": "generated", "B": "generated"}').toString("base64url"),
      ),
    ).toThrow(/malformed reveal token/);
    expect(() =>
      decodeRevealToken(
        Buffer.from('{"A": "original", "B": "generated"}').toString("base64url"),
      ),
    ).toThrow(/malformed reveal token/);
  });

  it("rejects garbage that is not base64 JSON", () => {
    expect(() => decodeRevealToken("!!not-a-token!!")).toThrow();
    expect(() =>
      decodeRevealToken(Buffer.from("[1, 2, 3]").toString("base64url")),
    ).toThrow();
  });
});
