/** DOM layer: renders the session snapshot and forwards user actions.
 *
 * Deliberately dumb; every guard and transition lives in the Session state
 * machine.  The A/B panel shows only the opaque labels until the session
 * reports a committed choice.
 */
import type { HttpServiceClient } from "./api.js";
import { MicRecorder } from "./recorder.js";
import type { Session, SessionSnapshot } from "./state.js";
import { prepareUpload } from "./wav.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function bindUi(
  session: Session,
  client: HttpServiceClient,
  recorder: MicRecorder = new MicRecorder(),
): void {
  const promptSelect = el<HTMLSelectElement>("prompt-select");
  const promptWord = el<HTMLElement>("prompt-word");
  const recordButton = el<HTMLButtonElement>("record-button");
  const stopButton = el<HTMLButtonElement>("stop-button");
  const submitButton = el<HTMLButtonElement>("submit-button");
  const retryButton = el<HTMLButtonElement>("retry-button");
  const tryAgainButton = el<HTMLButtonElement>("try-again-button");
  const statusLine = el<HTMLElement>("status-line");
  const noticeLine = el<HTMLElement>("notice-line");
  const errorBanner = el<HTMLElement>("error-banner");
  const playbackPanel = el<HTMLElement>("playback-panel");
  const mineAudio = el<HTMLAudioElement>("mine-audio");
  const correctedAudio = el<HTMLAudioElement>("corrected-audio");
  const abButton = el<HTMLButtonElement>("ab-button");
  const abPanel = el<HTMLElement>("ab-panel");
  const abAudioA = el<HTMLAudioElement>("ab-audio-a");
  const abAudioB = el<HTMLAudioElement>("ab-audio-b");
  const abPickA = el<HTMLButtonElement>("ab-pick-a");
  const abPickB = el<HTMLButtonElement>("ab-pick-b");
  const abReveal = el<HTMLElement>("ab-reveal");
  const historyList = el<HTMLElement>("history-list");

  const stopAndAttach = async () => {
    const capture = await recorder.stop();
    const clip = prepareUpload(capture.samples, capture.sampleRate);
    session.recordingFinished({
      blob: clip.blob,
      durationS: clip.durationS,
      autoStopped: capture.autoStopped,
    });
  };

  recordButton.addEventListener("click", () => {
    session.recordingStarted();
    recorder.start(() => void stopAndAttach()).catch((err: unknown) => {
      const denied =
        err instanceof DOMException && err.name === "NotAllowedError";
      session.recordingFailed(
        denied
          ? "microphone permission denied; allow access and try again"
          : `microphone unavailable: ${String(err)}`,
      );
    });
  });
  stopButton.addEventListener("click", () => void stopAndAttach());
  submitButton.addEventListener("click", () => void session.submit());
  retryButton.addEventListener("click", () => void session.retrySubmit());
  tryAgainButton.addEventListener("click", () => session.tryAgain());
  abButton.addEventListener("click", () => void session.enterAbMode());
  abPickA.addEventListener("click", () => session.chooseAb("A"));
  abPickB.addEventListener("click", () => session.chooseAb("B"));
  promptSelect.addEventListener("change", () => {
    const prompt = prompts.find((p) => p.id === promptSelect.value);
    if (prompt) session.selectPrompt(prompt);
  });

  let prompts: Awaited<ReturnType<HttpServiceClient["listPrompts"]>> = [];

  const render = (s: SessionSnapshot) => {
    promptWord.textContent = s.prompt
      ? `say: "${s.prompt.word}" (fixing ${s.prompt.phonemes[s.prompt.target_index]} ` +
        `to ${s.prompt.target_phoneme})`
      : "pick a prompt";
    recordButton.disabled = !s.canRecord;
    recordButton.textContent =
      s.recorder === "recorded" ? "re-record" : "record";
    stopButton.disabled = s.recorder !== "recording";
    submitButton.disabled = !s.canSubmit;
    retryButton.hidden = !s.canRetry;
    tryAgainButton.hidden = s.job.phase !== "done" && s.job.phase !== "failed";

    const bits = [`attempt ${s.attempts}`, `recorder: ${s.recorder}`];
    if (s.clip) bits.push(`clip ${s.clip.durationS.toFixed(1)} s`);
    if (s.job.phase !== "none") bits.push(`job: ${s.job.phase}`);
    statusLine.textContent = bits.join(" | ");
    noticeLine.textContent = s.notice ?? "";
    errorBanner.textContent = s.recordError ?? s.job.error ?? "";
    errorBanner.hidden = !s.recordError && !s.job.error;

    const done = s.job.phase === "done" && s.job.audio !== null;
    playbackPanel.hidden = !done;
    if (done) {
      mineAudio.src = client.audioUrl(s.job.audio!.vocoder_only);
      correctedAudio.src = client.audioUrl(s.job.audio!.generated);
    }
    abButton.disabled = !s.canEnterAb;
    abPanel.hidden = s.ab === null;
    if (s.ab) {
      abAudioA.src = client.audioUrl(s.ab.aUrl);
      abAudioB.src = client.audioUrl(s.ab.bUrl);
      abPickA.disabled = s.ab.choice !== null;
      abPickB.disabled = s.ab.choice !== null;
      abReveal.textContent = s.ab.mapping
        ? `you picked ${s.ab.choice}: A was ${s.ab.mapping.A}, B was ${s.ab.mapping.B}`
        : "listen to both, then pick the one that sounds right";
    }

    historyList.replaceChildren(
      ...s.history.map((entry) => {
        const item = document.createElement("li");
        item.textContent =
          `attempt ${entry.attempt}: ${entry.outcome}` +
          (entry.abChoice ? `, picked ${entry.abChoice}` : "");
        return item;
      }),
    );
  };

  session.onChange(render);
  render(session.snapshot());

  void client.listPrompts().then((list) => {
    prompts = list;
    promptSelect.replaceChildren(
      ...list.map((p) => {
        const option = document.createElement("option");
        option.value = p.id;
        option.textContent = `${p.id}: ${p.word}`;
        return option;
      }),
    );
    if (list.length > 0) session.selectPrompt(list[0]!);
  });
}
