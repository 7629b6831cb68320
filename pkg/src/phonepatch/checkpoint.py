"""Checkpoint directories: config.json + manifest.json + weights.bin.

weights.bin holds the parameter arrays as raw little-endian float32 in the
order listed by manifest.json, keeping checkpoints framework-neutral.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np
import torch

from .acoustic_embedding import AcousticEmbedder, SiameseConfig
from .audio_dsp import MelConfig
from .errors import ModelMissing
from .generator import GeneratorConfig, SpectrogramInpainter
from .problem_model import PhonemeInventory

_FLOAT_ORDER = "<f4"

if sys.byteorder != "little":  # raw dumps below assume little-endian hosts
    raise RuntimeError("checkpoint format requires a little-endian host")


def save_checkpoint(
    ckpt_dir,
    model: torch.nn.Module,
    inventory: PhonemeInventory,
    mel_config: MelConfig,
    metadata: dict | None = None,
) -> Path:
    ckpt_dir = Path(ckpt_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(model, SpectrogramInpainter):
        kind, model_cfg = "generator", model.config.to_dict()
    elif isinstance(model, AcousticEmbedder):
        kind, model_cfg = "siamese", model.config.to_dict()
    else:
        raise TypeError(f"cannot checkpoint a {type(model).__name__}")

    manifest = []
    blobs = []
    offset = 0
    state = model.state_dict()
    for name in sorted(state):
        arr = state[name].detach().cpu().numpy().astype(_FLOAT_ORDER)
        manifest.append(
            {"name": name, "shape": list(arr.shape), "dtype": "float32", "offset": offset}
        )
        blobs.append(arr.tobytes())
        offset += arr.nbytes

    config = {
        "kind": kind,
        "model": model_cfg,
        "inventory": {
            "symbols": list(inventory.symbols),
            "silence_symbol": inventory.silence_symbol,
        },
        "mel": mel_config.to_dict(),
        "metadata": metadata or {},
    }
    (ckpt_dir / "config.json").write_text(json.dumps(config, indent=2), encoding="utf-8")
    (ckpt_dir / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    (ckpt_dir / "weights.bin").write_bytes(b"".join(blobs))
    return ckpt_dir


def _read_config(ckpt_dir: Path) -> dict:
    path = ckpt_dir / "config.json"
    if not path.exists():
        raise ModelMissing(f"no checkpoint at {ckpt_dir}")
    return json.loads(path.read_text(encoding="utf-8"))


def _load_weights(ckpt_dir: Path, model: torch.nn.Module) -> None:
    manifest = json.loads((ckpt_dir / "manifest.json").read_text(encoding="utf-8"))
    raw = (ckpt_dir / "weights.bin").read_bytes()
    state = {}
    for entry in manifest:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(
            raw, dtype=_FLOAT_ORDER, count=count, offset=entry["offset"]
        ).reshape(shape)
        state[entry["name"]] = torch.from_numpy(arr.copy())
    model.load_state_dict(state)


def checkpoint_kind(ckpt_dir) -> str:
    return _read_config(Path(ckpt_dir))["kind"]


def load_generator(ckpt_dir) -> tuple[SpectrogramInpainter, PhonemeInventory, MelConfig]:
    ckpt_dir = Path(ckpt_dir)
    config = _read_config(ckpt_dir)
    if config["kind"] != "generator":
        raise ModelMissing(f"{ckpt_dir} holds a {config['kind']!r} checkpoint")
    model = SpectrogramInpainter(GeneratorConfig.from_dict(config["model"]))
    _load_weights(ckpt_dir, model)
    model.eval()
    inventory = PhonemeInventory(
        tuple(config["inventory"]["symbols"]), config["inventory"]["silence_symbol"]
    )
    return model, inventory, MelConfig.from_dict(config["mel"])


def load_siamese(ckpt_dir) -> tuple[AcousticEmbedder, PhonemeInventory, MelConfig]:
    ckpt_dir = Path(ckpt_dir)
    config = _read_config(ckpt_dir)
    if config["kind"] != "siamese":
        raise ModelMissing(f"{ckpt_dir} holds a {config['kind']!r} checkpoint")
    model = AcousticEmbedder(SiameseConfig.from_dict(config["model"]))
    _load_weights(ckpt_dir, model)
    model.eval()
    inventory = PhonemeInventory(
        tuple(config["inventory"]["symbols"]), config["inventory"]["silence_symbol"]
    )
    return model, inventory, MelConfig.from_dict(config["mel"])
