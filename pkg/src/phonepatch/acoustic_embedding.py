"""Siamese acoustic phoneme embedder: a one-layer bidirectional GRU whose
final states (both directions) are concatenated and projected through
linear + ReLU to a fixed-size, non-negative embedding.

The same weights embed both sides of a pair; cosine similarity compares
embeddings.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .audio_dsp import MelSpectrogram
from .errors import EmptySegment, InvalidConfig, ZeroVectorWarning


@dataclass(frozen=True)
class SiameseConfig:
    n_mels: int = 80
    hidden_size: int = 300
    embed_dim: int = 128

    def __post_init__(self):
        if min(self.n_mels, self.hidden_size, self.embed_dim) < 1:
            raise InvalidConfig("all siamese dimensions must be positive")

    def to_dict(self) -> dict:
        return {
            "n_mels": self.n_mels,
            "hidden_size": self.hidden_size,
            "embed_dim": self.embed_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SiameseConfig":
        return cls(**d)


class AcousticEmbedder(nn.Module):
    def __init__(self, config: SiameseConfig):
        super().__init__()
        self.config = config
        self.gru = nn.GRU(
            input_size=config.n_mels,
            hidden_size=config.hidden_size,
            num_layers=1,
            batch_first=True,
            bidirectional=True,
        )
        self.proj = nn.Linear(2 * config.hidden_size, config.embed_dim)

    def forward(self, padded: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        """padded: (B, L, n_mels); lengths: (B,).  Returns (B, embed_dim)."""
        packed = nn.utils.rnn.pack_padded_sequence(
            padded, lengths.cpu(), batch_first=True, enforce_sorted=False
        )
        _, h_n = self.gru(packed)  # (2, B, H)
        state = torch.cat([h_n[0], h_n[1]], dim=1)
        return torch.relu(self.proj(state))

    def embed_tensors(self, segments: list[torch.Tensor]) -> torch.Tensor:
        """Embed variable-length (L_i, n_mels) segments as one padded batch."""
        if not segments:
            raise EmptySegment("no segments to embed")
        lengths = torch.tensor([s.shape[0] for s in segments])
        if int(lengths.min()) < 1:
            raise EmptySegment("segments must have at least one frame")
        padded = nn.utils.rnn.pad_sequence(segments, batch_first=True)
        return self(padded, lengths)


def init_siamese(seed: int, config: SiameseConfig | None = None) -> AcousticEmbedder:
    """Deterministic fan-in-scaled uniform initialization."""
    config = config or SiameseConfig()
    model = AcousticEmbedder(config)
    gen = torch.Generator().manual_seed(seed)
    for name, param in sorted(model.named_parameters()):
        if param.dim() >= 2:
            bound = 1.0 / np.sqrt(param.shape[1])
        else:
            bound = 1.0 / np.sqrt(config.hidden_size)
        with torch.no_grad():
            param.uniform_(-bound, bound, generator=gen)
    model.eval()
    return model


def _as_segment_array(segment) -> np.ndarray:
    frames = segment.frames if isinstance(segment, MelSpectrogram) else np.asarray(segment)
    if frames.ndim != 2 or frames.shape[0] < 1:
        raise EmptySegment("segment must be a non-empty (frames, bins) matrix")
    return frames


def embed_acoustic(model: AcousticEmbedder, segment) -> np.ndarray:
    """Embedding of one mel segment of any length >= 1; entries >= 0."""
    frames = _as_segment_array(segment)
    with torch.no_grad():
        # copy: callers may hand in read-only views
        t = torch.from_numpy(np.array(frames, dtype=np.float32))
        out = model.embed_tensors([t])[0].numpy()
    return out


def embed_many(model: AcousticEmbedder, segments) -> np.ndarray:
    """(N, embed_dim) embeddings for a list of mel segments, batched."""
    tensors = [
        torch.from_numpy(np.array(_as_segment_array(s), dtype=np.float32))
        for s in segments
    ]
    with torch.no_grad():
        return model.embed_tensors(tensors).numpy()


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """u.v / (|u||v|), clipped to [-1, 1]; zero vectors compare as 0 with a
    warning (degenerate ReLU collapse)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        warnings.warn("cosine similarity of a zero vector", ZeroVectorWarning)
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))
