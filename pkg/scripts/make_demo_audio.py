#!/usr/bin/env python3
"""Produce audible before/after artifacts for a few corrected utterances.

For each demo case the script writes four WAVs: the original recording, the
vocoder round-trip of the unmodified spectrogram (the fair comparison), the
generated substitution, and the donor-concatenation baseline.  Models are
trained from scratch on the synthetic corpus, so expect a few minutes with
the defaults; --quick trades quality for speed.
"""
import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from phonepatch.audio_dsp import save_wav
from phonepatch.baseline_concat import (
    DonorQuery,
    segment_waveform,
    select_donor,
    smooth_concat,
)
from phonepatch.corpus import items_by_id, split_corpus, synth_corpus
from phonepatch.correction_pipeline import (
    CorrectionRequest,
    VocoderAdapter,
    correct_utterance_detailed,
)
from phonepatch.errors import NoDonor
from phonepatch.generator import GeneratorConfig
from phonepatch.corpus import default_inventory
from phonepatch.training import (
    TrainConfig,
    pick_window_frames,
    train_generator,
    train_siamese,
)

PARTNER = {"pa": "pb", "pb": "pa", "pc": "pd", "pd": "pc"}


def parse_args(argv):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("runs/demo_audio"))
    ap.add_argument("--n-cases", type=int, default=4)
    ap.add_argument("--n-items", type=int, default=60)
    ap.add_argument("--corpus-seed", type=int, default=31)
    ap.add_argument("--siamese-epochs", type=int, default=12)
    ap.add_argument("--generator-epochs", type=int, default=80)
    ap.add_argument("--gl-iters", type=int, default=60)
    ap.add_argument("--quick", action="store_true")
    return ap.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    if args.quick:
        args.n_items = 16
        args.siamese_epochs = 2
        args.generator_epochs = 5
        args.gl_iters = 8
        args.n_cases = min(args.n_cases, 2)

    inventory = default_inventory()
    t0 = time.perf_counter()
    items = synth_corpus(
        seed=args.corpus_seed, n_items=args.n_items, core_duration_range=(20, 40)
    )
    split = split_corpus(items, seed=0, test_count=max(4, args.n_cases))
    by_id = items_by_id(items)
    train_items = [by_id[i] for i in split.train]
    test_items = [by_id[i] for i in split.test]

    scfg = TrainConfig(epochs=args.siamese_epochs, batch_size=100,
                       learning_rate=1e-3, patience=10**6, seed=3)
    embedder, _ = train_siamese(items, scfg, inventory, split)
    tau = pick_window_frames(train_items, inventory.non_silence())
    gcfg = GeneratorConfig(window_frames=tau, n_mels=80,
                           inventory_size=len(inventory),
                           channels=(48, 64, 64, 96, 96))
    tcfg = TrainConfig(epochs=args.generator_epochs, batch_size=100,
                       learning_rate=2e-3, patience=10**6, seed=5)
    model, _ = train_generator(items, inventory, embedder, tcfg,
                               inventory.non_silence(), split,
                               generator_config=gcfg)
    print(f"models trained ({time.perf_counter() - t0:.0f}s)")

    vocoder = VocoderAdapter(iterations=args.gl_iters)
    cases = [
        (it, k, p)
        for it in test_items
        for k, p in enumerate(it.segmentation.phonemes)
        if p in PARTNER and it.segmentation.duration(k) <= tau
    ][: args.n_cases]

    for i, (item, k, p) in enumerate(cases):
        q = PARTNER[p]
        case_dir = args.out / f"case{i:02d}_{item.id}_k{k}_{p}_to_{q}"
        case_dir.mkdir(parents=True, exist_ok=True)
        result = correct_utterance_detailed(
            CorrectionRequest(item.waveform(), item.segmentation, k, q),
            model, inventory, vocoder,
        )
        save_wav(case_dir / "original.wav", item.waveform())
        save_wav(case_dir / "vocoder_only.wav", result.vocoded_original)
        save_wav(case_dir / "generated.wav", result.vocoded_corrected)
        try:
            donor_id, dk = select_donor(
                train_items, DonorQuery(q), item.speaker_id, seed=i
            )
            donor = segment_waveform(by_id[donor_id], dk)
            spliced = smooth_concat(
                item.waveform(), item.segmentation, k, donor,
                hop_size=item.mel_config.hop_size,
            )
            save_wav(case_dir / "baseline_concat.wav", spliced)
        except NoDonor:
            print(f"  {case_dir.name}: no donor for {q}, baseline skipped")
        print(f"  wrote {case_dir}")

    print(f"done in {time.perf_counter() - t0:.0f}s; listen under {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
