#!/usr/bin/env python3
"""Desk-scale substitution study on the synthetic pseudo-phoneme corpus.

Trains the acoustic embedder and the inpainting generator from scratch,
then scores three playback conditions (vocoder-only, generated substitution,
donor concatenation) with the oracle classifier on held-out utterances.
Writes checkpoints, a JSON report, and a markdown summary under --out.

The defaults reproduce the calibrated reference run (a few minutes on one
CPU core); --quick shrinks everything for a smoke test.
"""
import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from phonepatch.checkpoint import save_checkpoint
from phonepatch.corpus import items_by_id, split_corpus, synth_corpus
from phonepatch.correction_pipeline import VocoderAdapter
from phonepatch.evaluation import (
    build_centroids,
    export_listening_manifest,
    run_minimal_pair_experiment,
)
from phonepatch.generator import GeneratorConfig
from phonepatch.corpus import default_inventory
from phonepatch.training import (
    TrainConfig,
    pick_window_frames,
    segments_by_phoneme,
    train_generator,
    train_siamese,
)

PAIRS = [("pa", "pb"), ("pb", "pa"), ("pc", "pd"), ("pd", "pc")]


def parse_args(argv):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/substitution"))
    ap.add_argument("--n-items", type=int, default=100)
    ap.add_argument("--corpus-seed", type=int, default=31)
    ap.add_argument("--split-seed", type=int, default=0)
    ap.add_argument("--test-count", type=int, default=15)
    ap.add_argument("--siamese-epochs", type=int, default=12)
    ap.add_argument("--generator-epochs", type=int, default=150)
    ap.add_argument("--gl-iters", type=int, default=60)
    ap.add_argument("--max-cases", type=int, default=None,
                    help="cap oracle cases per pair")
    ap.add_argument("--listening-dir", type=Path, default=None,
                    help="also export WAVs and an ABX/MOS manifest here")
    ap.add_argument("--quick", action="store_true",
                    help="tiny corpus and few epochs; smoke test only")
    return ap.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    if args.quick:
        args.n_items = 20
        args.test_count = 4
        args.siamese_epochs = 2
        args.generator_epochs = 5
        args.gl_iters = 8
        args.max_cases = 2

    inventory = default_inventory()
    t0 = time.perf_counter()
    items = synth_corpus(
        seed=args.corpus_seed, n_items=args.n_items, core_duration_range=(20, 40)
    )
    split = split_corpus(items, seed=args.split_seed, test_count=args.test_count)
    by_id = items_by_id(items)
    train_items = [by_id[i] for i in split.train]
    test_items = [by_id[i] for i in split.test]
    print(f"corpus: {len(items)} items "
          f"({len(train_items)} train / {len(split.validation)} val / "
          f"{len(test_items)} test)")

    scfg = TrainConfig(epochs=args.siamese_epochs, batch_size=100,
                       learning_rate=1e-3, patience=10**6, seed=3)
    embedder, _ = train_siamese(items, scfg, inventory, split)
    print(f"embedder trained ({time.perf_counter() - t0:.0f}s)")

    tau = pick_window_frames(train_items, inventory.non_silence())
    gcfg = GeneratorConfig(window_frames=tau, n_mels=80,
                           inventory_size=len(inventory),
                           channels=(48, 64, 64, 96, 96))
    tcfg = TrainConfig(epochs=args.generator_epochs, batch_size=100,
                       learning_rate=2e-3, patience=10**6, seed=5)
    model, report = train_generator(items, inventory, embedder, tcfg,
                                    inventory.non_silence(), split,
                                    generator_config=gcfg)
    print(f"generator trained, window {tau} frames, "
          f"best epoch {report.best_epoch} ({time.perf_counter() - t0:.0f}s)")

    args.out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(args.out / "siamese", embedder, inventory,
                    items[0].mel_config, metadata={"train_config": scfg.to_dict()})
    save_checkpoint(args.out / "generator", model, inventory,
                    items[0].mel_config, metadata={"train_config": tcfg.to_dict()})

    centroids = build_centroids(embedder, segments_by_phoneme(train_items, inventory))
    eval_report = run_minimal_pair_experiment(
        test_items, PAIRS, model, embedder, centroids, inventory,
        VocoderAdapter(iterations=args.gl_iters), seed=args.split_seed,
        donor_items=train_items, max_cases_per_pair=args.max_cases,
        keep_audio=args.listening_dir is not None,
    )
    (args.out / "report.json").write_text(eval_report.to_json())
    (args.out / "report.md").write_text(eval_report.to_markdown())
    if args.listening_dir is not None:
        manifest = export_listening_manifest(
            eval_report.stimuli, args.listening_dir, args.split_seed,
            vocabulary=tuple(inventory.non_silence()),
        )
        print(f"listening manifest: {len(manifest['abx_tasks'])} ABX tasks "
              f"-> {args.listening_dir}")

    print(eval_report.to_markdown())
    print(f"total {time.perf_counter() - t0:.0f}s; artifacts in {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
