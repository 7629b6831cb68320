"""Waveform I/O, resampling, mel analysis, Griffin-Lim phase recovery and
cross-fade splicing.

All mel spectrograms are log-compressed (natural log, floored) energies of a
triangular filterbank whose filters are normalized to unit weight sum.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps
from scipy.io import wavfile

from .errors import (
    CorruptFile,
    FadeOutOfRange,
    RateMismatch,
    ShapeMismatch,
    UnsupportedFormat,
)

CANONICAL_RATE = 22050


@dataclass(frozen=True)
class Waveform:
    """Mono audio: float samples in [-1, 1] plus a sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("waveform must be a non-empty 1-D array")
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.samples**2)))


@dataclass(frozen=True)
class MelConfig:
    fft_size: int = 1024
    hop_size: int = 256
    win_size: int = 1024
    n_mels: int = 80
    sample_rate: int = CANONICAL_RATE
    fmin: float = 0.0
    fmax: float | None = None  # None -> sample_rate / 2
    log_floor: float = 1e-5

    def __post_init__(self):
        if self.win_size > self.fft_size:
            raise ValueError("win_size must not exceed fft_size")
        if self.hop_size > self.win_size:
            raise ValueError("hop_size must not exceed win_size")
        if self.n_mels >= self.fft_size // 2 + 1:
            raise ValueError("n_mels must be below the number of FFT bins")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")

    @property
    def effective_fmax(self) -> float:
        return self.sample_rate / 2 if self.fmax is None else self.fmax

    def frames_for(self, n_samples: int) -> int:
        return 1 + n_samples // self.hop_size

    def to_dict(self) -> dict:
        return {
            "fft_size": self.fft_size,
            "hop_size": self.hop_size,
            "win_size": self.win_size,
            "n_mels": self.n_mels,
            "sample_rate": self.sample_rate,
            "fmin": self.fmin,
            "fmax": self.fmax,
            "log_floor": self.log_floor,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MelConfig":
        return cls(**d)


@dataclass(frozen=True)
class MelSpectrogram:
    """T x D matrix of log mel energies plus the config that produced it."""

    frames: np.ndarray
    config: MelConfig

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float32)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ValueError("mel frames must be a (T, D) matrix with T >= 1")
        if frames.shape[1] != self.config.n_mels:
            raise ValueError(
                f"expected {self.config.n_mels} mel bins, got {frames.shape[1]}"
            )
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def num_bins(self) -> int:
        return self.frames.shape[1]

    def window(self, start: int, length: int) -> np.ndarray:
        if start < 0 or start + length > self.num_frames:
            raise ShapeMismatch("window exceeds spectrogram bounds")
        return self.frames[start : start + length]

    def replace_frames(self, frames: np.ndarray) -> "MelSpectrogram":
        return MelSpectrogram(frames, self.config)


# -- WAV I/O -------------------------------------------------------------------

def load_wav(path) -> Waveform:
    """Read a RIFF/WAVE file (PCM16 or float32, mono or stereo) as mono floats.

    PCM16 is scaled by 1/32768; stereo channels are averaged.
    """
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        msg = str(exc).lower()
        if "unknown wave file format" in msg or "incomplete" in msg or "not understood" in msg:
            raise CorruptFile(f"{path}: {exc}") from exc
        raise UnsupportedFormat(f"{path}: {exc}") from exc
    except Exception as exc:  # struct errors on truncated files
        raise CorruptFile(f"{path}: {exc}") from exc
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise UnsupportedFormat(f"{path}: unsupported sample dtype {data.dtype}")
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if samples.size == 0:
        raise CorruptFile(f"{path}: no samples")
    samples = np.clip(samples, -1.0, 1.0)
    return Waveform(samples, int(rate))


def save_wav(path, waveform: Waveform, target_rate: int = CANONICAL_RATE) -> None:
    """Write mono PCM16 at the canonical rate (resampling if needed)."""
    w = resample(waveform, target_rate)
    pcm = np.clip(np.round(w.samples * 32767.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, target_rate, pcm)


def resample(w: Waveform, target_rate: int) -> Waveform:
    """Polyphase band-limited resampling; output length round(n * target/source)."""
    if target_rate <= 0:
        raise ValueError("target rate must be positive")
    if target_rate == w.sample_rate:
        return w
    g = math.gcd(target_rate, w.sample_rate)
    up, down = target_rate // g, w.sample_rate // g
    out = sps.resample_poly(w.samples, up, down)
    want = int(round(len(w.samples) * target_rate / w.sample_rate))
    if len(out) > want:
        out = out[:want]
    elif len(out) < want:
        out = np.pad(out, (0, want - len(out)))
    return Waveform(np.clip(out, -1.0, 1.0), target_rate)


# -- mel analysis ----------------------------------------------------------------

def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@functools.lru_cache(maxsize=8)
def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """(n_mels, fft_size//2 + 1) triangular filterbank, each filter divided by
    the sum of its weights so filter weights sum to 1."""
    n_bins = cfg.fft_size // 2 + 1
    bin_freqs = np.linspace(0.0, cfg.sample_rate / 2.0, n_bins)
    mel_pts = np.linspace(
        _hz_to_mel(cfg.fmin), _hz_to_mel(cfg.effective_fmax), cfg.n_mels + 2
    )
    hz_pts = _mel_to_hz(mel_pts)
    fb = np.zeros((cfg.n_mels, n_bins), dtype=np.float64)
    for m in range(cfg.n_mels):
        lo, center, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        rising = (bin_freqs - lo) / max(center - lo, 1e-12)
        falling = (hi - bin_freqs) / max(hi - center, 1e-12)
        fb[m] = np.clip(np.minimum(rising, falling), 0.0, None)
        total = fb[m].sum()
        if total > 0:
            fb[m] /= total
    fb.setflags(write=False)
    return fb


@functools.lru_cache(maxsize=8)
def _filterbank_gram(cfg: MelConfig) -> np.ndarray:
    fb = mel_filterbank(cfg)
    return fb.T @ fb


def _invert_filterbank(energy: np.ndarray, cfg: MelConfig, n_iters: int = 100) -> np.ndarray:
    """Non-negative least squares fb @ p ~= energy per frame, by multiplicative
    updates.  The plain pseudo-inverse goes negative and, once clipped, no
    longer satisfies the filterbank equations; this stays feasible throughout."""
    fb = mel_filterbank(cfg)
    gram = _filterbank_gram(cfg)
    atb = energy @ fb
    p = atb.copy()  # adjoint initialization, non-negative
    for _ in range(n_iters):
        p = p * atb / np.maximum(p @ gram, 1e-30)
    return p


def _analysis_window(cfg: MelConfig) -> np.ndarray:
    return sps.get_window("hann", cfg.win_size, fftbins=True)


def _frame_signal(x: np.ndarray, cfg: MelConfig, n_frames: int) -> np.ndarray:
    """(n_frames, win_size) frame matrix of an already-padded signal."""
    idx = np.arange(cfg.win_size)[None, :] + cfg.hop_size * np.arange(n_frames)[:, None]
    return x[idx]


def _stft_padded(x: np.ndarray, cfg: MelConfig) -> np.ndarray:
    """Uncentered STFT of a padded signal -> complex (n_frames, n_bins)."""
    n_frames = 1 + (len(x) - cfg.win_size) // cfg.hop_size
    frames = _frame_signal(x, cfg, n_frames) * _analysis_window(cfg)
    return np.fft.rfft(frames, n=cfg.fft_size, axis=1)


def _istft_padded(spec: np.ndarray, cfg: MelConfig) -> np.ndarray:
    """Least-squares inverse of _stft_padded (overlap-add / squared-window sum)."""
    n_frames = spec.shape[0]
    win = _analysis_window(cfg)
    frames = np.fft.irfft(spec, n=cfg.fft_size, axis=1)[:, : cfg.win_size]
    length = (n_frames - 1) * cfg.hop_size + cfg.win_size
    out = np.zeros(length)
    wsum = np.zeros(length)
    for t in range(n_frames):
        lo = t * cfg.hop_size
        out[lo : lo + cfg.win_size] += frames[t] * win
        wsum[lo : lo + cfg.win_size] += win**2
    return out / np.where(wsum > 1e-11, wsum, 1.0)


def mel_spectrogram(w: Waveform, cfg: MelConfig | None = None) -> MelSpectrogram:
    """Centered STFT (reflect padding, Hann window) -> normalized mel energies
    -> natural log with floor.  T = 1 + floor(n_samples / hop)."""
    cfg = cfg or MelConfig()
    if w.sample_rate != cfg.sample_rate:
        raise RateMismatch(
            f"waveform rate {w.sample_rate} != config rate {cfg.sample_rate}"
        )
    if len(w) < cfg.win_size:
        raise ValueError(f"need at least {cfg.win_size} samples, got {len(w)}")
    pad = cfg.fft_size // 2
    x = np.pad(w.samples, pad, mode="reflect")
    spec = _stft_padded(x, cfg)[: cfg.frames_for(len(w))]
    power = np.abs(spec) ** 2
    mel = power @ mel_filterbank(cfg).T
    log_mel = np.log(np.maximum(mel, cfg.log_floor))
    return MelSpectrogram(log_mel.astype(np.float32), cfg)


def mel_to_magnitudes(m: MelSpectrogram) -> np.ndarray:
    """Invert log compression and the filterbank (non-negative least squares)
    to a linear (T, n_bins) magnitude spectrogram.

    The log floor acts as an additive noise floor, so it is subtracted after
    exponentiation; an all-floor mel inverts to silence up to the float32
    rounding of the stored log values (magnitudes below ~1e-5)."""
    energy = np.exp(m.frames.astype(np.float64)) - m.config.log_floor
    power = _invert_filterbank(np.clip(energy, 0.0, None), m.config)
    return np.sqrt(power)


def griffin_lim(
    m: MelSpectrogram, n_iters: int = 60, return_residuals: bool = False
):
    """Phase recovery from a log-mel spectrogram with a fixed zero-phase start.

    Returns a waveform of exactly (T - 1) * hop samples; deterministic.
    With return_residuals=True also returns per-iteration magnitude
    inconsistency ||  |STFT(x_i)| - target ||_F, which is non-increasing.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    cfg = m.config
    target = mel_to_magnitudes(m)  # (T, n_bins)
    spec = target.astype(np.complex128)  # zero phase
    residuals = []
    for _ in range(n_iters):
        x = _istft_padded(spec, cfg)
        estimate = _stft_padded(x, cfg)
        residuals.append(float(np.linalg.norm(np.abs(estimate) - target)))
        phase = np.exp(1j * np.angle(estimate))
        spec = target * phase
    x = _istft_padded(spec, cfg)
    pad = cfg.fft_size // 2
    out = x[pad : pad + (m.num_frames - 1) * cfg.hop_size]
    out = np.clip(out, -1.0, 1.0)
    wave = Waveform(out, cfg.sample_rate)
    if return_residuals:
        return wave, residuals
    return wave


# -- splicing --------------------------------------------------------------------

def crossfade_splice(
    a: Waveform, b: Waveform, join_a: int, join_b: int, fade_len: int
) -> Waveform:
    """a[0:join_a) ++ linear crossfade of fade_len samples ++ b[join_b+fade:).

    Fade sample i mixes a[join_a+i] toward b[join_b+i] with weight i/fade_len;
    per-sample weights sum to one.
    """
    if a.sample_rate != b.sample_rate:
        raise RateMismatch("cannot splice waveforms at different rates")
    if fade_len < 0 or join_a < 0 or join_b < 0:
        raise FadeOutOfRange("joins and fade length must be non-negative")
    if join_a + fade_len > len(a) or join_b + fade_len > len(b):
        raise FadeOutOfRange("fade window exceeds an input")
    head = a.samples[:join_a]
    tail = b.samples[join_b + fade_len :]
    if fade_len == 0:
        return Waveform(np.concatenate([head, tail]), a.sample_rate)
    ramp = np.arange(fade_len, dtype=np.float64) / fade_len
    fa = a.samples[join_a : join_a + fade_len]
    fb = b.samples[join_b : join_b + fade_len]
    fade = fa + ramp * (fb - fa)
    return Waveform(np.concatenate([head, fade, tail]), a.sample_rate)
