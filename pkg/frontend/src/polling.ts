/** Job polling with bounded exponential backoff.
 *
 * The delay grows geometrically up to a hard cap and the attempt count is
 * bounded, so a stuck job can never turn into a request storm.  Polling
 * stops at the first terminal state.
 */
import type { CorrectionJob } from "./api.js";

export interface PollOptions {
  initialDelayMs?: number;
  factor?: number;
  maxDelayMs?: number;
  maxAttempts?: number;
  sleep?: (ms: number) => Promise<void>;
  onUpdate?: (job: CorrectionJob) => void;
}

export class PollTimeout extends Error {
  constructor(attempts: number) {
    super(`job not settled after ${attempts} polls`);
    this.name = "PollTimeout";
  }
}

const defaultSleep = (ms: number) =>
  new Promise<void>((resolve) => setTimeout(resolve, ms));

export function isTerminal(state: string): boolean {
  return state === "done" || state === "failed";
}

export async function pollUntilSettled(
  fetchJob: () => Promise<CorrectionJob>,
  options: PollOptions = {},
): Promise<CorrectionJob> {
  const {
    initialDelayMs = 500,
    factor = 1.5,
    maxDelayMs = 3000,
    maxAttempts = 120,
    sleep = defaultSleep,
    onUpdate,
  } = options;
  let delay = initialDelayMs;
  for (let attempt = 1; attempt <= maxAttempts; attempt++) {
    const job = await fetchJob();
    onUpdate?.(job);
    if (isTerminal(job.state)) return job;
    if (attempt === maxAttempts) break;
    await sleep(delay);
    delay = Math.min(delay * factor, maxDelayMs);
  }
  throw new PollTimeout(maxAttempts);
}
