"""End-to-end correction: window the flagged phoneme, regenerate it under the
desired phoneme's conditioning, splice the window back into the utterance mel,
and re-vocode the whole utterance.

Re-vocoding everything (rather than patching the waveform) avoids waveform
seams entirely; the mel-domain splice keeps every frame outside the blended
window bit-identical to the input, which is what preserves the speaker's own
voice everywhere else.
"""
from __future__ import annotations

import json
import shlex
import struct
import subprocess
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_dsp import (
    CANONICAL_RATE,
    MelConfig,
    MelSpectrogram,
    Waveform,
    griffin_lim,
    load_wav,
    mel_spectrogram,
    resample,
    save_wav,
)
from .corpus import CorpusItem
from .errors import (
    BlendTooWide,
    CorruptFile,
    ExternalVocoderFailed,
    InvalidPhoneme,
    SegmentOutOfRange,
    ShapeMismatch,
    UtteranceTooShort,
)
from .generator import SpectrogramInpainter, generate
from .problem_model import (
    PhonemeInventory,
    PhonemeSegmentation,
    WindowSpec,
    apply_mask,
    build_mask,
    compute_context_window,
    frame_phoneme_labels,
)

DEFAULT_BLEND = 3


@dataclass(frozen=True)
class CorrectionRequest:
    """One utterance plus the phoneme to replace and what to replace it with."""

    waveform: Waveform
    segmentation: PhonemeSegmentation
    segment_index: int
    target_phoneme: str
    blend: int = DEFAULT_BLEND


@dataclass(frozen=True)
class VocoderAdapter:
    """Built-in Griffin-Lim or a shell-out to an external neural vocoder.

    The external command is a template with {mel} and {wav} placeholders; the
    contract is exit status 0 and a readable WAV at {wav} afterwards.  Calls
    through one adapter instance are serialized.
    """

    kind: str = "griffin_lim"
    iterations: int = 60
    command: str | None = None
    _lock: threading.Lock = field(
        default_factory=threading.Lock, repr=False, compare=False
    )

    def __post_init__(self):
        if self.kind not in ("griffin_lim", "external_neural"):
            raise ValueError(f"unknown vocoder kind {self.kind!r}")
        if self.kind == "external_neural" and not self.command:
            raise ValueError("external_neural needs a command template")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


@dataclass(frozen=True)
class CorrectionResult:
    original_mel: MelSpectrogram
    corrected_mel: MelSpectrogram
    window: WindowSpec
    generated_window: np.ndarray
    vocoded_original: Waveform
    vocoded_corrected: Waveform


# -- mel exchange files ------------------------------------------------------------

_MEL_HEADER = struct.Struct("<II")


def write_mel_file(path, frames: np.ndarray) -> None:
    """8-byte header (frame count, bin count as little-endian uint32) followed
    by row-major float32 little-endian data."""
    frames = np.ascontiguousarray(frames, dtype="<f4")
    if frames.ndim != 2:
        raise ShapeMismatch("mel data must be a (T, D) matrix")
    with open(path, "wb") as fh:
        fh.write(_MEL_HEADER.pack(frames.shape[0], frames.shape[1]))
        fh.write(frames.tobytes())


def read_mel_file(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _MEL_HEADER.size:
        raise CorruptFile(f"{path}: truncated header")
    t, d = _MEL_HEADER.unpack_from(raw)
    expected = _MEL_HEADER.size + 4 * t * d
    if len(raw) != expected:
        raise CorruptFile(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=_MEL_HEADER.size)
    return data.reshape(t, d).copy()


# -- splicing ---------------------------------------------------------------------

def splice_back(
    full_mel: MelSpectrogram,
    gen_window: np.ndarray,
    window: WindowSpec,
    blend: int = DEFAULT_BLEND,
) -> MelSpectrogram:
    """Writes the generated masked span into the utterance mel with a linear
    log-domain crossfade of `blend` frames on each side.

    Ramp weights rise toward the mask: with blend=3 the generated signal gets
    weight 1/3 at the outermost seam frame, 2/3, then 1 adjacent to the mask.
    Frames outside the mask plus blend margin are bit-identical to the input.
    """
    gen = np.asarray(gen_window, dtype=np.float32)
    if gen.shape != (window.length, full_mel.num_bins):
        raise ShapeMismatch(
            f"generated window is {gen.shape}, expected "
            f"({window.length}, {full_mel.num_bins})"
        )
    if window.utterance_start < 0 or window.utterance_end > full_mel.num_frames:
        raise SegmentOutOfRange("window exceeds the utterance")
    if blend < 0:
        raise BlendTooWide("blend must be non-negative")
    if blend > window.mask_lo or blend > window.length - window.mask_hi:
        raise BlendTooWide(
            f"blend {blend} exceeds the context margin around the mask"
        )
    out = full_mel.frames.copy()
    base = window.utterance_start
    lo, hi = window.mask_lo, window.mask_hi
    out[base + lo : base + hi] = gen[lo:hi]
    for j in range(blend):
        w = np.float32((blend - j) / blend)
        left = lo - 1 - j
        right = hi + j
        out[base + left] += w * (gen[left] - out[base + left])
        out[base + right] += w * (gen[right] - out[base + right])
    return full_mel.replace_frames(out)


# -- vocoding ---------------------------------------------------------------------

def vocode(mel: MelSpectrogram, adapter: VocoderAdapter) -> Waveform:
    if adapter.kind == "griffin_lim":
        return griffin_lim(mel, n_iters=adapter.iterations)
    with adapter._lock:
        return _vocode_external(mel, adapter.command)


def _vocode_external(mel: MelSpectrogram, command: str) -> Waveform:
    with tempfile.TemporaryDirectory(prefix="phonepatch_voc_") as tmp:
        mel_path = Path(tmp) / "in.mel"
        wav_path = Path(tmp) / "out.wav"
        write_mel_file(mel_path, mel.frames)
        argv = [
            a.format(mel=str(mel_path), wav=str(wav_path))
            for a in shlex.split(command)
        ]
        proc = subprocess.run(argv, capture_output=True, text=True)
        if proc.returncode != 0:
            raise ExternalVocoderFailed(
                f"{argv[0]} exited {proc.returncode}: {proc.stderr.strip()[:500]}"
            )
        if not wav_path.exists():
            raise ExternalVocoderFailed(f"{argv[0]} produced no output WAV")
        wave = load_wav(wav_path)
        if wave.sample_rate != mel.config.sample_rate:
            raise ExternalVocoderFailed(
                f"external vocoder returned {wave.sample_rate} Hz, "
                f"expected {mel.config.sample_rate}"
            )
        return wave


# -- the pipeline -------------------------------------------------------------------

def correct_utterance_detailed(
    req: CorrectionRequest,
    model: SpectrogramInpainter,
    inventory: PhonemeInventory,
    vocoder: VocoderAdapter,
    mel_config: MelConfig | None = None,
) -> CorrectionResult:
    """Full pipeline with intermediates exposed: also vocodes the *unmodified*
    mel so callers can offer a like-for-like playback comparison."""
    if req.target_phoneme not in inventory.symbols:
        raise InvalidPhoneme(f"{req.target_phoneme!r} is not in the inventory")
    seg = req.segmentation
    if not 0 <= req.segment_index < len(seg.phonemes):
        raise InvalidPhoneme(
            f"segment index {req.segment_index} out of range for "
            f"{len(seg.phonemes)} segments"
        )
    cfg = mel_config or MelConfig()
    wave = resample(req.waveform, cfg.sample_rate)
    if len(wave) < cfg.win_size:
        raise UtteranceTooShort("utterance shorter than one analysis window")
    mel = mel_spectrogram(wave, cfg)
    seg = _reconcile_frame_count(seg, mel.num_frames)

    tau = model.config.window_frames
    if mel.num_frames < tau:
        raise UtteranceTooShort(
            f"utterance has {mel.num_frames} frames but the model needs {tau}"
        )
    window = compute_context_window(seg, req.segment_index, tau)
    labels = frame_phoneme_labels(
        seg, window, inventory, req.segment_index, req.target_phoneme
    )
    mask = build_mask(window)
    x_win = mel.window(window.utterance_start, window.length)
    gen = generate(model, apply_mask(x_win, mask), labels.labels)
    corrected = splice_back(mel, gen, window, req.blend)
    return CorrectionResult(
        original_mel=mel,
        corrected_mel=corrected,
        window=window,
        generated_window=gen,
        vocoded_original=vocode(mel, vocoder),
        vocoded_corrected=vocode(corrected, vocoder),
    )


def correct_utterance(
    req: CorrectionRequest,
    model: SpectrogramInpainter,
    inventory: PhonemeInventory,
    vocoder: VocoderAdapter,
    mel_config: MelConfig | None = None,
) -> Waveform:
    """Corrected utterance audio; duration matches the input to within one
    hop (the vocoder reconstructs (T - 1) * hop samples)."""
    return correct_utterance_detailed(
        req, model, inventory, vocoder, mel_config
    ).vocoded_corrected


def _reconcile_frame_count(
    seg: PhonemeSegmentation, mel_frames: int
) -> PhonemeSegmentation:
    # Off-by-one drift between an aligner's frame count and ours is tolerated.
    if seg.total_frames == mel_frames:
        return seg
    if abs(seg.total_frames - mel_frames) > 1:
        raise SegmentOutOfRange(
            f"alignment covers {seg.total_frames} frames, mel has {mel_frames}"
        )
    starts = tuple(min(s, mel_frames - 1) for s in seg.start_frames)
    return PhonemeSegmentation(seg.phonemes, starts, mel_frames)


# -- vocoder fine-tuning export --------------------------------------------------------

def export_vocoder_finetune_set(
    items: list[CorpusItem],
    model: SpectrogramInpainter,
    inventory: PhonemeInventory,
    target_phonemes: tuple[str, ...],
    out_dir,
) -> dict:
    """Identity-pass (all-ones mask) generator outputs paired with the real
    audio of each window, as fine-tuning material for an external vocoder.

    Nothing is masked: the generator sees the full window and its true labels,
    so the exported mel should be a near-copy of the original window.  Windows
    that do not fit in an utterance are skipped and counted.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tau = model.config.window_frames
    entries = []
    skipped = 0
    for item in items:
        seg = item.segmentation
        mel = item.mel()
        wave = item.waveform()
        for k, symbol in enumerate(seg.phonemes):
            if symbol not in target_phonemes:
                continue
            if seg.total_frames < tau or seg.duration(k) > tau:
                skipped += 1
                continue
            window = compute_context_window(seg, k, tau)
            labels = frame_phoneme_labels(seg, window, inventory, k, symbol)
            x_win = mel.window(window.utterance_start, window.length)
            gen = generate(model, x_win, labels.labels)  # all-ones mask
            stem = f"{item.id}_seg{k}"
            mel_path = out_dir / f"{stem}.mel"
            wav_path = out_dir / f"{stem}.wav"
            write_mel_file(mel_path, gen)
            hop = mel.config.hop_size
            lo = window.utterance_start * hop
            clip = wave.samples[lo : lo + window.length * hop]
            save_wav(wav_path, Waveform(clip, wave.sample_rate))
            entries.append({
                "item_id": item.id,
                "segment_index": k,
                "phoneme": symbol,
                "mel_path": mel_path.name,
                "wav_path": wav_path.name,
                "frames": window.length,
                "window_start_frame": window.utterance_start,
            })
    manifest = {
        "sample_rate": CANONICAL_RATE,
        "hop_size": (items[0].mel_config.hop_size if items else MelConfig().hop_size),
        "n_mels": (items[0].mel_config.n_mels if items else MelConfig().n_mels),
        "pairs": entries,
        "skipped_windows": skipped,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest
