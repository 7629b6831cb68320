"""Shared fixtures: one small synthetic corpus and untrained model checkpoints.

Everything here is session-scoped; the corpus items carry their waveforms in
memory so no fixture hits the disk unless a test asks for the on-disk layout.
"""
import json

import pytest
import torch

from phonepatch import (
    GeneratorConfig,
    MelConfig,
    default_inventory,
    init_generator,
    init_siamese,
    save_checkpoint,
    synth_corpus,
)
from phonepatch.acoustic_embedding import SiameseConfig

torch.set_num_threads(1)

# short utterances keep the DSP-heavy tests fast while still leaving room
# for a context window around every core phone
MINI_CORPUS_KWARGS = dict(
    seed=7,
    n_items=8,
    core_duration_range=(8, 14),
    silence_duration_range=(8, 10),
    core_count_range=(2, 3),
)


@pytest.fixture(scope="session")
def inventory():
    return default_inventory()


@pytest.fixture(scope="session")
def mini_corpus(inventory):
    return synth_corpus(**MINI_CORPUS_KWARGS)


@pytest.fixture(scope="session")
def mini_corpus_dir(tmp_path_factory, inventory):
    root = tmp_path_factory.mktemp("mini_corpus")
    synth_corpus(**MINI_CORPUS_KWARGS, out_dir=root)
    return root


@pytest.fixture(scope="session")
def tiny_generator(inventory):
    cfg = GeneratorConfig(
        window_frames=20,
        n_mels=80,
        inventory_size=len(inventory),
        channels=(8, 12, 12, 16, 16),
    )
    return init_generator(cfg, seed=0)


@pytest.fixture(scope="session")
def tiny_embedder():
    return init_siamese(0, SiameseConfig(n_mels=80, hidden_size=24, embed_dim=16))


@pytest.fixture(scope="session")
def tiny_generator_ckpt(tmp_path_factory, tiny_generator, inventory):
    ckpt = tmp_path_factory.mktemp("gen_ckpt")
    save_checkpoint(ckpt, tiny_generator, inventory, MelConfig())
    return ckpt


@pytest.fixture(scope="session")
def tiny_siamese_ckpt(tmp_path_factory, tiny_embedder, inventory):
    ckpt = tmp_path_factory.mktemp("siamese_ckpt")
    save_checkpoint(ckpt, tiny_embedder, inventory, MelConfig())
    return ckpt


@pytest.fixture
def term(request):
    """Writes a line through pytest's terminal reporter so per-criterion
    pass/fail lines stay visible even with output capture on."""
    reporter = request.config.pluginmanager.getplugin("terminalreporter")

    def emit(line: str) -> None:
        print(line)
        if reporter is not None:
            reporter.ensure_newline()
            reporter.write_line(line)

    return emit


def make_prompts_file(path, prompts: list[dict]) -> None:
    path.write_text(json.dumps(prompts), encoding="utf-8")
