/** Unit tests for the bounded-backoff job poller. */
import { describe, expect, it } from "vitest";

import type { CorrectionJob } from "../src/api.js";
import { PollTimeout, isTerminal, pollUntilSettled } from "../src/polling.js";

function job(state: CorrectionJob["state"]): CorrectionJob {
  return { id: "job-1", prompt_id: "p1", state, error: null };
}

/** fetchJob stub that walks a scripted state sequence (last state sticky). */
function scripted(states: CorrectionJob["state"][]) {
  let calls = 0;
  const fetchJob = async (): Promise<CorrectionJob> => {
    const state = states[Math.min(calls, states.length - 1)]!;
    calls += 1;
    return job(state);
  };
  return { fetchJob, callCount: () => calls };
}

/** sleep stub that records requested delays and resolves immediately. */
function recordingSleep() {
  const delays: number[] = [];
  const sleep = async (ms: number) => {
    delays.push(ms);
  };
  return { sleep, delays };
}

describe("isTerminal", () => {
  it("treats only done and failed as terminal", () => {
    expect(isTerminal("done")).toBe(true);
    expect(isTerminal("failed")).toBe(true);
    expect(isTerminal("queued")).toBe(false);
    expect(isTerminal("running")).toBe(false);
  });
});

describe("pollUntilSettled", () => {
  it("returns immediately on a terminal first response without sleeping", async () => {
    const { fetchJob, callCount } = scripted(["done"]);
    const { sleep, delays } = recordingSleep();
    const result = await pollUntilSettled(fetchJob, { sleep });
    expect(result.state).toBe("done");
    expect(callCount()).toBe(1);
    expect(delays).toEqual([]);
  });

  it("grows the delay geometrically and caps it at the maximum", async () => {
    const { fetchJob, callCount } = scripted([
      "queued",
      "running",
      "running",
      "running",
      "running",
      "running",
      "done",
    ]);
    const { sleep, delays } = recordingSleep();
    const seen: string[] = [];
    const result = await pollUntilSettled(fetchJob, {
      sleep,
      onUpdate: (j) => seen.push(j.state),
    });
    expect(result.state).toBe("done");
    expect(callCount()).toBe(7);
    expect(delays).toEqual([500, 750, 1125, 1687.5, 2531.25, 3000]);
    expect(seen).toHaveLength(7);
    expect(seen[seen.length - 1]).toBe("done");
    for (let i = 1; i < delays.length; i++) {
      expect(delays[i]!).toBeGreaterThanOrEqual(delays[i - 1]!);
      expect(delays[i]!).toBeLessThanOrEqual(3000);
    }
  });

  it("honors custom backoff options", async () => {
    const { fetchJob } = scripted([
      "running",
      "running",
      "running",
      "running",
      "done",
    ]);
    const { sleep, delays } = recordingSleep();
    await pollUntilSettled(fetchJob, {
      sleep,
      initialDelayMs: 10,
      factor: 3,
      maxDelayMs: 50,
    });
    expect(delays).toEqual([10, 30, 50, 50]);
  });

  it("stops polling the moment the job fails", async () => {
    const { fetchJob, callCount } = scripted(["running", "failed"]);
    const { sleep, delays } = recordingSleep();
    const result = await pollUntilSettled(fetchJob, { sleep });
    expect(result.state).toBe("failed");
    expect(callCount()).toBe(2);
    expect(delays).toHaveLength(1);
  });

  it("gives up with PollTimeout after the attempt budget", async () => {
    const { fetchJob, callCount } = scripted(["running"]);
    const { sleep, delays } = recordingSleep();
    await expect(
      pollUntilSettled(fetchJob, { sleep, maxAttempts: 5 }),
    ).rejects.toThrow(PollTimeout);
    expect(callCount()).toBe(5); // exactly the budget, no extra request
    expect(delays).toHaveLength(4); // no sleep after the final attempt
  });

  it("names the attempt budget in the timeout message", async () => {
    const { fetchJob } = scripted(["queued"]);
    const { sleep } = recordingSleep();
    await expect(
      pollUntilSettled(fetchJob, { sleep, maxAttempts: 3 }),
    ).rejects.toThrow(/not settled after 3 polls/);
  });
});
