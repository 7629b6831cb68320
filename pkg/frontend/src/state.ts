/** Session state machine: the single source of truth for the UI.
 *
 * Holds the selected prompt, the recorder phase, the submitted clip, a
 * monotone mirror of the server-side job, the playback selection, and the
 * blind A/B state.  All guards live here so the DOM layer stays dumb and
 * the whole flow is testable against a mocked service.
 */
import {
  type AbLabel,
  type AbMapping,
  type AudioUrls,
  type CorrectionJob,
  type CorrectionService,
  type Prompt,
  ServiceError,
  decodeRevealToken,
} from "./api.js";
import { type PollOptions, PollTimeout, pollUntilSettled } from "./polling.js";

export type RecorderPhase = "idle" | "recording" | "recorded";
export type JobPhase =
  | "none"
  | "submitting"
  | "queued"
  | "running"
  | "done"
  | "failed";
export type PlaybackMode = "mine" | "corrected" | "ab_blind";

// monotone ordering of the job mirror; a poll can never move it backwards
const JOB_ORDER: Record<JobPhase, number> = {
  none: 0,
  submitting: 1,
  queued: 2,
  running: 3,
  done: 4,
  failed: 4,
};

export interface Clip {
  blob: Blob;
  durationS: number;
  autoStopped: boolean;
}

export interface AbState {
  aUrl: string;
  bUrl: string;
  revealToken: string;
  choice: AbLabel | null;
  /** null until the user commits a choice; never revealed earlier */
  mapping: AbMapping | null;
}

export interface HistoryEntry {
  attempt: number;
  promptId: string;
  jobId: string | null;
  outcome: JobPhase;
  abChoice: AbLabel | null;
}

export interface SessionSnapshot {
  prompt: Prompt | null;
  recorder: RecorderPhase;
  clip: { durationS: number; autoStopped: boolean } | null;
  attempts: number;
  job: {
    id: string | null;
    phase: JobPhase;
    error: string | null;
    audio: AudioUrls | null;
  };
  playback: PlaybackMode;
  ab: AbState | null;
  history: HistoryEntry[];
  recordError: string | null;
  notice: string | null;
  canRecord: boolean;
  canSubmit: boolean;
  canEnterAb: boolean;
  canRetry: boolean;
}

function describeError(err: unknown): string {
  if (err instanceof ServiceError) return err.detail;
  if (err instanceof PollTimeout) return err.message;
  return err instanceof Error ? err.message : String(err);
}

export class Session {
  private prompt: Prompt | null = null;
  private recorder: RecorderPhase = "idle";
  private clip: Clip | null = null;
  private attempts = 0;
  private jobId: string | null = null;
  private jobPhase: JobPhase = "none";
  private jobError: string | null = null;
  private jobAudio: AudioUrls | null = null;
  private playback: PlaybackMode = "mine";
  private ab: AbState | null = null;
  private history: HistoryEntry[] = [];
  private recordError: string | null = null;
  private notice: string | null = null;
  private listeners: Array<(snapshot: SessionSnapshot) => void> = [];

  constructor(
    private readonly service: CorrectionService,
    private readonly pollOptions: PollOptions = {},
  ) {}

  onChange(listener: (snapshot: SessionSnapshot) => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    const snapshot = this.snapshot();
    for (const listener of this.listeners) listener(snapshot);
  }

  private jobInFlight(): boolean {
    return ["submitting", "queued", "running"].includes(this.jobPhase);
  }

  canRecord(): boolean {
    return this.prompt !== null && !this.jobInFlight() &&
      this.recorder !== "recording";
  }

  canSubmit(): boolean {
    return this.recorder === "recorded" && this.clip !== null &&
      !this.jobInFlight();
  }

  canEnterAb(): boolean {
    return this.jobPhase === "done";
  }

  canRetry(): boolean {
    return this.jobPhase === "failed" && this.clip !== null;
  }

  snapshot(): SessionSnapshot {
    return {
      prompt: this.prompt,
      recorder: this.recorder,
      clip: this.clip
        ? { durationS: this.clip.durationS, autoStopped: this.clip.autoStopped }
        : null,
      attempts: this.attempts,
      job: {
        id: this.jobId,
        phase: this.jobPhase,
        error: this.jobError,
        audio: this.jobAudio,
      },
      playback: this.playback,
      ab: this.ab ? { ...this.ab } : null,
      history: [...this.history],
      recordError: this.recordError,
      notice: this.notice,
      canRecord: this.canRecord(),
      canSubmit: this.canSubmit(),
      canEnterAb: this.canEnterAb(),
      canRetry: this.canRetry(),
    };
  }

  selectPrompt(prompt: Prompt): void {
    if (this.recorder === "recording" || this.jobInFlight()) {
      throw new Error("cannot switch prompts mid-flight");
    }
    this.prompt = prompt;
    this.recorder = "idle";
    this.clip = null;
    this.attempts = 0;
    this.resetJob();
    this.emit();
  }

  /** idle|recorded -> recording; a re-record bumps the attempt counter. */
  recordingStarted(): void {
    if (!this.canRecord()) throw new Error("recording not allowed now");
    this.recorder = "recording";
    this.clip = null;
    this.attempts += 1;
    this.recordError = null;
    this.notice = null;
    this.resetJob();
    this.emit();
  }

  /** Permission denied or device failure: stay idle, surface guidance. */
  recordingFailed(reason: string): void {
    this.recorder = "idle";
    this.recordError = reason;
    this.emit();
  }

  recordingFinished(clip: Clip): void {
    if (this.recorder !== "recording") {
      throw new Error("not currently recording");
    }
    this.recorder = "recorded";
    this.clip = clip;
    this.notice = clip.autoStopped
      ? "recording stopped automatically at the 10 s limit"
      : null;
    this.emit();
  }

  private resetJob(): void {
    this.jobId = null;
    this.jobPhase = "none";
    this.jobError = null;
    this.jobAudio = null;
    this.ab = null;
    this.playback = "mine";
  }

  private applyJobUpdate(job: CorrectionJob): void {
    const phase = job.state as JobPhase;
    if (JOB_ORDER[phase] < JOB_ORDER[this.jobPhase]) return; // never regress
    if (this.jobPhase === "done" || this.jobPhase === "failed") return;
    this.jobPhase = phase;
    this.jobError = job.error ?? null;
    this.jobAudio = job.audio ?? null;
    this.emit();
  }

  /** Upload the recorded clip and mirror the job until it settles. */
  async submit(): Promise<void> {
    if (!this.canSubmit()) throw new Error("no recorded clip to submit");
    this.resetJob();
    this.jobPhase = "submitting";
    this.emit();
    let jobId: string;
    try {
      const response = await this.service.submitRecording(
        this.prompt!.id,
        this.clip!.blob,
      );
      jobId = response.job_id;
    } catch (err) {
      this.jobPhase = "failed";
      this.jobError = describeError(err);
      this.emit();
      return;
    }
    this.jobId = jobId;
    this.applyJobUpdate({ state: "queued" } as CorrectionJob);
    try {
      await pollUntilSettled(() => this.service.fetchCorrection(jobId), {
        ...this.pollOptions,
        onUpdate: (job) => this.applyJobUpdate(job),
      });
    } catch (err) {
      this.jobPhase = "failed";
      this.jobError = describeError(err);
      this.emit();
    }
  }

  /** Failed job, clip still in hand: submit the same clip again. */
  async retrySubmit(): Promise<void> {
    if (!this.canRetry()) throw new Error("nothing to retry");
    await this.submit();
  }

  setPlayback(mode: Exclude<PlaybackMode, "ab_blind">): void {
    if (this.jobPhase !== "done") throw new Error("no playback before done");
    this.playback = mode;
    this.emit();
  }

  /** Fetch the randomized pair; labels stay opaque until chooseAb(). */
  async enterAbMode(): Promise<void> {
    if (!this.canEnterAb() || this.jobId === null) {
      throw new Error("A/B comparison requires a finished job");
    }
    const pair = await this.service.fetchAbPair(this.jobId);
    this.ab = {
      aUrl: pair.a_url,
      bUrl: pair.b_url,
      revealToken: pair.reveal_token,
      choice: null,
      mapping: null,
    };
    this.playback = "ab_blind";
    this.emit();
  }

  /** Commit a choice; only now is the mapping decoded and revealed. */
  chooseAb(label: AbLabel): AbMapping {
    if (this.ab === null) throw new Error("not in A/B mode");
    if (this.ab.choice !== null) throw new Error("choice already made");
    this.ab.choice = label;
    this.ab.mapping = decodeRevealToken(this.ab.revealToken);
    this.emit();
    return this.ab.mapping;
  }

  /** Back to the recorder for another take; the outcome goes to history. */
  tryAgain(): void {
    if (this.jobPhase !== "done" && this.jobPhase !== "failed") {
      throw new Error("nothing to retry from");
    }
    this.history.push({
      attempt: this.attempts,
      promptId: this.prompt?.id ?? "",
      jobId: this.jobId,
      outcome: this.jobPhase,
      abChoice: this.ab?.choice ?? null,
    });
    this.recorder = "idle";
    this.clip = null;
    this.notice = null;
    this.resetJob();
    this.emit();
  }
}
