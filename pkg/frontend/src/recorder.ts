/** Microphone capture via Web Audio, yielding raw mono float samples.
 *
 * MediaRecorder emits compressed containers, so instead the stream is run
 * through a ScriptProcessorNode and the float buffers are kept; that gives
 * the encoder exact PCM to work with.  Recording stops automatically at the
 * service's 10 s upload limit.
 */
import { MAX_UPLOAD_SECONDS, downmixToMono } from "./wav.js";

export interface Capture {
  samples: Float32Array;
  sampleRate: number;
  durationS: number;
  autoStopped: boolean;
}

export class MicRecorder {
  private context: AudioContext | null = null;
  private stream: MediaStream | null = null;
  private processor: ScriptProcessorNode | null = null;
  private source: MediaStreamAudioSourceNode | null = null;
  private chunks: Float32Array[] = [];
  private autoStopped = false;
  private onAutoStop: (() => void) | null = null;

  get recording(): boolean {
    return this.context !== null;
  }

  /** Throws DOMException("NotAllowedError") when permission is denied. */
  async start(onAutoStop?: () => void): Promise<void> {
    if (this.recording) throw new Error("already recording");
    this.stream = await navigator.mediaDevices.getUserMedia({ audio: true });
    this.context = new AudioContext();
    this.source = this.context.createMediaStreamSource(this.stream);
    this.processor = this.context.createScriptProcessor(4096, 1, 1);
    this.chunks = [];
    this.autoStopped = false;
    this.onAutoStop = onAutoStop ?? null;
    const maxSamples = MAX_UPLOAD_SECONDS * this.context.sampleRate;
    let total = 0;
    this.processor.onaudioprocess = (event) => {
      const channels: Float32Array[] = [];
      for (let c = 0; c < event.inputBuffer.numberOfChannels; c++) {
        channels.push(new Float32Array(event.inputBuffer.getChannelData(c)));
      }
      this.chunks.push(downmixToMono(channels));
      total += channels[0]!.length;
      if (total >= maxSamples && !this.autoStopped) {
        this.autoStopped = true;
        this.onAutoStop?.();
      }
    };
    this.source.connect(this.processor);
    this.processor.connect(this.context.destination);
  }

  async stop(): Promise<Capture> {
    if (!this.context) throw new Error("not recording");
    const sampleRate = this.context.sampleRate;
    this.processor?.disconnect();
    this.source?.disconnect();
    this.stream?.getTracks().forEach((track) => track.stop());
    await this.context.close();
    const total = this.chunks.reduce((n, chunk) => n + chunk.length, 0);
    const samples = new Float32Array(total);
    let offset = 0;
    for (const chunk of this.chunks) {
      samples.set(chunk, offset);
      offset += chunk.length;
    }
    const capture: Capture = {
      samples,
      sampleRate,
      durationS: total / sampleRate,
      autoStopped: this.autoStopped,
    };
    this.context = null;
    this.stream = null;
    this.processor = null;
    this.source = null;
    this.chunks = [];
    return capture;
  }
}
