#!/usr/bin/env python3
"""Generate everything the correction service needs to run locally.

Writes a generator checkpoint, a prompts.json whose prompts mirror real
synthetic utterances, and sample recordings to upload against those prompts.
With --epochs 0 the checkpoint is an untrained model (fast; the corrected
region is noise but the service contract is fully exercised).
"""
import argparse
import json
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from phonepatch.audio_dsp import save_wav
from phonepatch.checkpoint import save_checkpoint
from phonepatch.corpus import CorpusSplit, synth_corpus
from phonepatch.generator import GeneratorConfig, init_generator
from phonepatch.corpus import default_inventory
from phonepatch.training import TrainConfig, pick_window_frames, train_generator

PARTNER = {"pa": "pb", "pb": "pa", "pc": "pd", "pd": "pc"}


def parse_args(argv):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("service_fixtures"))
    ap.add_argument("--n-items", type=int, default=12)
    ap.add_argument("--corpus-seed", type=int, default=5)
    ap.add_argument("--n-prompts", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=60,
                    help="generator training epochs; 0 skips training")
    return ap.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    inventory = default_inventory()
    t0 = time.perf_counter()
    items = synth_corpus(seed=args.corpus_seed, n_items=args.n_items)
    tau = pick_window_frames(items, inventory.non_silence())
    gcfg = GeneratorConfig(window_frames=tau, n_mels=80,
                           inventory_size=len(inventory),
                           channels=(48, 64, 64, 96, 96))
    if args.epochs > 0:
        split = CorpusSplit(train=tuple(it.id for it in items), validation=())
        cfg = TrainConfig(epochs=args.epochs, batch_size=100, learning_rate=2e-3,
                          patience=10**6, attract_weight=0.0, contrast_weight=0.0,
                          seed=0)
        model, _ = train_generator(items, inventory, None, cfg,
                                   inventory.non_silence(), split,
                                   generator_config=gcfg)
    else:
        model = init_generator(gcfg, seed=0)

    ckpt = args.out / "generator"
    save_checkpoint(ckpt, model, inventory, items[0].mel_config)

    prompts = []
    rec_dir = args.out / "sample_recordings"
    rec_dir.mkdir(parents=True, exist_ok=True)
    for item in items[: args.n_prompts]:
        seg = item.segmentation
        target_index = next(
            k for k, p in enumerate(seg.phonemes) if p in PARTNER
        )
        prompts.append({
            "id": item.id,
            "word": " ".join(item.word_transcript),
            "phonemes": list(seg.phonemes),
            "target_index": target_index,
            "target_phoneme": PARTNER[seg.phonemes[target_index]],
            "duration_fractions": [
                seg.duration(k) / seg.total_frames
                for k in range(len(seg.phonemes))
            ],
        })
        save_wav(rec_dir / f"{item.id}.wav", item.waveform())

    prompts_path = args.out / "prompts.json"
    prompts_path.write_text(json.dumps(prompts, indent=2))

    print(f"fixtures ready in {time.perf_counter() - t0:.0f}s:")
    print(f"  checkpoint: {ckpt}")
    print(f"  prompts:    {prompts_path} ({len(prompts)} prompts)")
    print(f"  recordings: {rec_dir}")
    print("run the service with:")
    print(f"  phonepatch serve --ckpt {ckpt} --prompts {prompts_path} "
          f"--jobs {args.out / 'jobs'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
