"""Phoneme-conditioned 1-D U-net that inpaints a masked span of a log-mel
window.

Per-frame input is the 80 mel bins concatenated with a learned embedding of
that frame's phoneme label.  The encoder has five kernel-3 convolutions with
p-ReLU (two of them stride-2); the decoder mirrors it with two stride-2
transposed convolutions, skip connections at both downsampling boundaries,
and a final 1x1 projection back to the mel bins.  No normalization layers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .audio_dsp import MelSpectrogram
from .errors import InvalidConfig, ShapeMismatch
from .problem_model import FramePhonemeSequence

DOWNSAMPLE_FACTOR = 4  # two stride-2 stages

DEFAULT_CHANNELS = (128, 256, 256, 512, 512)


@dataclass(frozen=True)
class GeneratorConfig:
    window_frames: int
    n_mels: int = 80
    inventory_size: int = 5
    phoneme_embed_dim: int = 8
    channels: tuple[int, int, int, int, int] = DEFAULT_CHANNELS

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if self.window_frames % DOWNSAMPLE_FACTOR != 0:
            raise InvalidConfig(
                f"window_frames={self.window_frames} must be divisible by "
                f"{DOWNSAMPLE_FACTOR} for the stride-2 stages to round-trip"
            )
        if self.window_frames <= 0 or self.n_mels <= 0:
            raise InvalidConfig("window_frames and n_mels must be positive")
        if self.phoneme_embed_dim < 1:
            raise InvalidConfig("phoneme_embed_dim must be >= 1")
        if len(self.channels) != 5 or any(c < 1 for c in self.channels):
            raise InvalidConfig("channels must be five positive widths")
        if self.inventory_size < 2:
            raise InvalidConfig("inventory_size must be >= 2")

    def to_dict(self) -> dict:
        return {
            "window_frames": self.window_frames,
            "n_mels": self.n_mels,
            "inventory_size": self.inventory_size,
            "phoneme_embed_dim": self.phoneme_embed_dim,
            "channels": list(self.channels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        d = dict(d)
        d["channels"] = tuple(d["channels"])
        return cls(**d)


# fixed affine standardization of the log-mel range: raw values live in
# roughly [log(1e-5), 0] with mean near -6, which is hostile to convs
# without normalization layers; the net computes in (x - OFFSET) / SCALE
# units and its raw output is mapped back before returning
MEL_OFFSET = -6.0
MEL_SCALE = 3.0


class SpectrogramInpainter(nn.Module):
    """U-net over (batch, frames, mel bins) windows with per-frame labels."""

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        c1, c2, c3, c4, c5 = config.channels
        d = config.n_mels + config.phoneme_embed_dim
        self.embedding = nn.Embedding(config.inventory_size, config.phoneme_embed_dim)
        self.enc1 = nn.Conv1d(d, c1, 3, padding=1)
        self.enc2 = nn.Conv1d(c1, c2, 3, stride=2, padding=1)
        self.enc3 = nn.Conv1d(c2, c3, 3, padding=1)
        self.enc4 = nn.Conv1d(c3, c4, 3, stride=2, padding=1)
        self.enc5 = nn.Conv1d(c4, c5, 3, padding=1)
        self.dec1 = nn.Conv1d(c5, c5, 3, padding=1)
        self.up1 = nn.ConvTranspose1d(c5, c3, 3, stride=2, padding=1, output_padding=1)
        self.dec2 = nn.Conv1d(2 * c3, c3, 3, padding=1)
        self.up2 = nn.ConvTranspose1d(c3, c1, 3, stride=2, padding=1, output_padding=1)
        self.dec3 = nn.Conv1d(2 * c1, c1, 3, padding=1)
        self.proj = nn.Conv1d(c1, config.n_mels, 1)
        self.acts = nn.ModuleList(
            [nn.PReLU(ch) for ch in (c1, c2, c3, c4, c5, c5, c3, c3, c1, c1)]
        )

    def forward(self, mel: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        if mel.dim() != 3 or mel.shape[1] != self.config.window_frames:
            raise ShapeMismatch(
                f"expected (B, {self.config.window_frames}, {self.config.n_mels}), "
                f"got {tuple(mel.shape)}"
            )
        if labels.shape != mel.shape[:2]:
            raise ShapeMismatch("labels must be (B, frames)")
        emb = self.embedding(labels)
        scaled = (mel - MEL_OFFSET) / MEL_SCALE
        x = torch.cat([scaled, emb], dim=2).transpose(1, 2)  # (B, D+E, tau)
        a = self.acts
        e1 = a[0](self.enc1(x))
        e2 = a[1](self.enc2(e1))
        e3 = a[2](self.enc3(e2))
        e4 = a[3](self.enc4(e3))
        e5 = a[4](self.enc5(e4))
        h = a[5](self.dec1(e5))
        h = a[6](self.up1(h))
        h = a[7](self.dec2(torch.cat([h, e3], dim=1)))
        h = a[8](self.up2(h))
        h = a[9](self.dec3(torch.cat([h, e1], dim=1)))
        return self.proj(h).transpose(1, 2) * MEL_SCALE + MEL_OFFSET


def _fan_in_uniform_(module: nn.Module, gen: torch.Generator) -> None:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) on weights and biases, in a
    fixed module order; p-ReLU slopes stay at their 0.25 initialization."""
    for name, param in sorted(module.named_parameters()):
        if "acts" in name:
            continue
        if param.dim() >= 2:
            if isinstance(module.get_submodule(name.rsplit(".", 1)[0]), nn.ConvTranspose1d):
                fan_in = param.shape[0] * param.shape[2]
            else:
                fan_in = int(np.prod(param.shape[1:]))
            bound = 1.0 / np.sqrt(fan_in)
        else:
            bound = 1.0 / np.sqrt(param.shape[0])
        with torch.no_grad():
            param.uniform_(-bound, bound, generator=gen)


def init_generator(config: GeneratorConfig, seed: int) -> SpectrogramInpainter:
    """Deterministic fan-in-scaled uniform initialization."""
    model = SpectrogramInpainter(config)
    gen = torch.Generator().manual_seed(seed)
    _fan_in_uniform_(model, gen)
    model.eval()
    return model


def generate(
    model: SpectrogramInpainter,
    masked_mel: MelSpectrogram | np.ndarray,
    labels: FramePhonemeSequence | np.ndarray,
) -> np.ndarray:
    """Run inference on one masked window; returns (tau, n_mels) log-mel."""
    frames = masked_mel.frames if isinstance(masked_mel, MelSpectrogram) else np.asarray(masked_mel)
    label_arr = labels.labels if isinstance(labels, FramePhonemeSequence) else np.asarray(labels)
    cfg = model.config
    if frames.shape != (cfg.window_frames, cfg.n_mels):
        raise ShapeMismatch(
            f"expected window of shape {(cfg.window_frames, cfg.n_mels)}, got {frames.shape}"
        )
    if label_arr.shape != (cfg.window_frames,):
        raise ShapeMismatch(f"expected {cfg.window_frames} labels, got {label_arr.shape}")
    if label_arr.min() < 0 or label_arr.max() >= cfg.inventory_size:
        raise ShapeMismatch("labels outside the inventory range")
    was_training = model.training
    model.eval()
    with torch.no_grad():
        # copy: the inputs may be read-only views
        x = torch.from_numpy(np.array(frames, dtype=np.float32)).unsqueeze(0)
        l = torch.from_numpy(np.array(label_arr, dtype=np.int64)).unsqueeze(0)
        out = model(x, l).squeeze(0).numpy()
    if was_training:
        model.train()
    return out
