/** Client-side audio conditioning: downmix, resample, PCM16 WAV encoding.
 *
 * The service is format-strict (mono WAV, <= 10 s, <= 2 MB), so the client
 * produces exactly that instead of uploading whatever the browser captured.
 */

export const UPLOAD_SAMPLE_RATE = 22050;
export const MAX_UPLOAD_SECONDS = 10;

/** Average multi-channel capture buffers into one mono signal. */
export function downmixToMono(channels: Float32Array[]): Float32Array {
  if (channels.length === 0) throw new Error("no channels to downmix");
  const first = channels[0]!;
  if (channels.length === 1) return first;
  const n = first.length;
  const out = new Float32Array(n);
  for (const channel of channels) {
    if (channel.length !== n) throw new Error("channel lengths differ");
    for (let i = 0; i < n; i++) out[i]! += channel[i]!;
  }
  for (let i = 0; i < n; i++) out[i]! /= channels.length;
  return out;
}

/** Linear-interpolation resampler; adequate for speech uploads. */
export function resampleLinear(
  samples: Float32Array,
  fromRate: number,
  toRate: number,
): Float32Array {
  if (fromRate <= 0 || toRate <= 0) throw new Error("rates must be positive");
  if (fromRate === toRate || samples.length === 0) return samples;
  const n = Math.max(1, Math.round((samples.length * toRate) / fromRate));
  const out = new Float32Array(n);
  const step = (samples.length - 1) / Math.max(1, n - 1);
  for (let i = 0; i < n; i++) {
    const pos = i * step;
    const lo = Math.floor(pos);
    const hi = Math.min(lo + 1, samples.length - 1);
    const frac = pos - lo;
    out[i] = samples[lo]! * (1 - frac) + samples[hi]! * frac;
  }
  return out;
}

/** Encode mono float samples in [-1, 1] as a 16-bit PCM WAV file. */
export function encodeWavPcm16(
  samples: Float32Array,
  sampleRate: number,
): ArrayBuffer {
  if (!Number.isInteger(sampleRate) || sampleRate <= 0) {
    throw new Error(`bad sample rate ${sampleRate}`);
  }
  const dataBytes = samples.length * 2;
  const buffer = new ArrayBuffer(44 + dataBytes);
  const view = new DataView(buffer);
  const writeAscii = (offset: number, text: string) => {
    for (let i = 0; i < text.length; i++) {
      view.setUint8(offset + i, text.charCodeAt(i));
    }
  };
  writeAscii(0, "RIFF");
  view.setUint32(4, 36 + dataBytes, true);
  writeAscii(8, "WAVE");
  writeAscii(12, "fmt ");
  view.setUint32(16, 16, true); // PCM fmt chunk size
  view.setUint16(20, 1, true); // PCM
  view.setUint16(22, 1, true); // mono
  view.setUint32(24, sampleRate, true);
  view.setUint32(28, sampleRate * 2, true); // byte rate
  view.setUint16(32, 2, true); // block align
  view.setUint16(34, 16, true); // bits per sample
  writeAscii(36, "data");
  view.setUint32(40, dataBytes, true);
  for (let i = 0; i < samples.length; i++) {
    const s = Math.max(-1, Math.min(1, samples[i]!));
    view.setInt16(44 + i * 2, s < 0 ? s * 0x8000 : s * 0x7fff, true);
  }
  return buffer;
}

export interface UploadClip {
  blob: Blob;
  durationS: number;
  sampleRate: number;
}

/** Trim to the upload limit, resample to the service rate, encode. */
export function prepareUpload(
  samples: Float32Array,
  captureRate: number,
  targetRate: number = UPLOAD_SAMPLE_RATE,
): UploadClip {
  const maxSamples = Math.floor(MAX_UPLOAD_SECONDS * captureRate);
  const trimmed =
    samples.length > maxSamples ? samples.subarray(0, maxSamples) : samples;
  const resampled = resampleLinear(trimmed, captureRate, targetRate);
  const blob = new Blob([encodeWavPcm16(resampled, targetRate)], {
    type: "audio/wav",
  });
  return {
    blob,
    durationS: resampled.length / targetRate,
    sampleRate: targetRate,
  };
}
