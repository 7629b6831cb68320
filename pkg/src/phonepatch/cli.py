"""Command-line entry points: synthesize or validate corpora, train the two
models, correct single utterances, run the baseline, evaluate, export vocoder
fine-tuning data, and serve the HTTP API."""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import sys
from pathlib import Path

from .audio_dsp import MelConfig, load_wav, save_wav
from .baseline_concat import DonorQuery, segment_waveform, select_donor, smooth_concat
from .checkpoint import load_generator, load_siamese, save_checkpoint
from .corpus import (
    default_inventory,
    ingest_corpus,
    read_alignment_csv,
    split_corpus,
    synth_corpus,
)
from .correction_pipeline import (
    CorrectionRequest,
    VocoderAdapter,
    correct_utterance,
    export_vocoder_finetune_set,
)
from .errors import PhonepatchError
from .evaluation import (
    build_centroids,
    export_listening_manifest,
    run_minimal_pair_experiment,
)
from .problem_model import PhonemeInventory, PhonemeSegmentation
from .training import TrainConfig, TrainReport, segments_by_phoneme, train_generator, train_siamese


def _inventory_from_arg(spec: str | None) -> PhonemeInventory:
    if not spec:
        return default_inventory()
    symbols = tuple(s.strip() for s in spec.split(",") if s.strip())
    return PhonemeInventory(symbols, symbols[0])


def _load_corpus(root: str, inventory: PhonemeInventory):
    return ingest_corpus(Path(root), inventory, MelConfig())


def _read_train_config(path: str | None, seed: int | None) -> TrainConfig:
    cfg = TrainConfig()
    if path:
        cfg = TrainConfig.from_dict(json.loads(Path(path).read_text()))
    if seed is not None:
        cfg = TrainConfig.from_dict({**cfg.to_dict(), "seed": seed})
    return cfg


def _write_training_log(out_dir: Path, report: TrainReport) -> None:
    lines = []
    for row in report.epoch_rows():
        row["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
        lines.append(json.dumps(row))
    (out_dir / "training_log.jsonl").write_text("\n".join(lines) + "\n")
    summary = {
        "best_epoch": report.best_epoch,
        "epochs_run": len(report.train_losses),
        "best_val_loss": (
            report.val_losses[report.best_epoch] if report.best_epoch >= 0 else None
        ),
        "extra": {k: v for k, v in report.extra.items() if k != "first_step"},
    }
    (out_dir / "training_summary.json").write_text(json.dumps(summary, indent=2))


def _segmentation_from_csv(path: str) -> PhonemeSegmentation:
    phonemes, starts, total = read_alignment_csv(path)
    return PhonemeSegmentation(tuple(phonemes), tuple(starts), total)


def _vocoder_from_args(args) -> VocoderAdapter:
    if getattr(args, "vocoder_cmd", None):
        return VocoderAdapter(kind="external_neural", command=args.vocoder_cmd)
    return VocoderAdapter(kind="griffin_lim", iterations=args.gl_iters)


# -- subcommands ---------------------------------------------------------------------

def cmd_corpus_synth(args) -> int:
    items = synth_corpus(
        seed=args.seed,
        n_items=args.n_items,
        out_dir=args.out,
        n_speakers=args.n_speakers,
    )
    print(f"wrote {len(items)} items to {args.out}")
    return 0


def cmd_corpus_validate(args) -> int:
    inventory = _inventory_from_arg(args.inventory)
    items = _load_corpus(args.root, inventory)
    speakers = sorted({it.speaker_id for it in items})
    counts: dict[str, int] = {}
    for item in items:
        for symbol in item.segmentation.phonemes:
            counts[symbol] = counts.get(symbol, 0) + 1
    print(f"{len(items)} items, {len(speakers)} speakers")
    for symbol in inventory.symbols:
        print(f"  {symbol}: {counts.get(symbol, 0)} segments")
    return 0


def cmd_train_siamese(args) -> int:
    inventory = _inventory_from_arg(args.inventory)
    items = _load_corpus(args.corpus, inventory)
    cfg = _read_train_config(args.config, args.seed)
    split = split_corpus(items, cfg.seed)
    embedder, report = train_siamese(items, cfg, inventory, split)
    out = Path(args.out)
    save_checkpoint(
        out, embedder, inventory, items[0].mel_config,
        metadata={"train_config": cfg.to_dict(), "best_epoch": report.best_epoch},
    )
    _write_training_log(out, report)
    print(f"best epoch {report.best_epoch}, "
          f"val loss {report.val_losses[report.best_epoch]:.4f}")
    return 0


def cmd_train_generator(args) -> int:
    inventory = _inventory_from_arg(args.inventory)
    items = _load_corpus(args.corpus, inventory)
    cfg = _read_train_config(args.config, args.seed)
    targets = tuple(t.strip() for t in args.targets.split(",") if t.strip())
    embedder = None
    if args.siamese:
        embedder, emb_inventory, _ = load_siamese(args.siamese)
        if emb_inventory.symbols != inventory.symbols:
            raise PhonepatchError("siamese checkpoint inventory differs from corpus")
    else:
        # without an embedder the embedding-based terms cannot be computed
        cfg = TrainConfig.from_dict(
            {**cfg.to_dict(), "attract_weight": 0.0, "contrast_weight": 0.0}
        )
    split = split_corpus(items, cfg.seed)
    model, report = train_generator(items, inventory, embedder, cfg, targets, split)
    out = Path(args.out)
    save_checkpoint(
        out, model, inventory, items[0].mel_config,
        metadata={
            "train_config": cfg.to_dict(),
            "target_phonemes": list(targets),
            "best_epoch": report.best_epoch,
        },
    )
    _write_training_log(out, report)
    print(f"window {model.config.window_frames} frames; best epoch {report.best_epoch}")
    return 0


def cmd_correct(args) -> int:
    model, inventory, mel_config = load_generator(args.ckpt)
    wave = load_wav(args.infile)
    seg = _segmentation_from_csv(args.align)
    req = CorrectionRequest(wave, seg, args.k, args.target, blend=args.blend)
    out_wave = correct_utterance(req, model, inventory, _vocoder_from_args(args), mel_config)
    save_wav(args.out, out_wave)
    print(f"wrote {args.out} ({out_wave.duration:.2f} s)")
    return 0


def cmd_baseline_concat(args) -> int:
    inventory = _inventory_from_arg(args.inventory)
    items = _load_corpus(args.corpus, inventory)
    wave = load_wav(args.infile)
    seg = _segmentation_from_csv(args.align)
    query = DonorQuery(args.target, gender=args.gender)
    donor_id, dk = select_donor(items, query, args.exclude_speaker, args.seed)
    donor_item = next(it for it in items if it.id == donor_id)
    donor = segment_waveform(donor_item, dk)
    out_wave = smooth_concat(wave, seg, args.k, donor,
                             hop_size=donor_item.mel_config.hop_size)
    save_wav(args.out, out_wave)
    print(f"donor {donor_id}[{dk}] -> {args.out}")
    return 0


def cmd_eval_minimal_pair(args) -> int:
    inventory = _inventory_from_arg(args.inventory)
    items = _load_corpus(args.corpus, inventory)
    model, gen_inventory, _ = load_generator(args.gen)
    embedder, _, _ = load_siamese(args.siamese)
    if gen_inventory.symbols != inventory.symbols:
        raise PhonepatchError("generator checkpoint inventory differs from corpus")
    pairs = []
    for token in args.pairs.split(","):
        p, _, q = token.partition(":")
        if not q:
            raise PhonepatchError(f"bad pair {token!r}, expected p:q")
        pairs.append((p.strip(), q.strip()))
    centroids = build_centroids(embedder, segments_by_phoneme(items, inventory))
    report = run_minimal_pair_experiment(
        items, pairs, model, embedder, centroids, inventory,
        _vocoder_from_args(args), args.seed,
        max_cases_per_pair=args.max_cases,
        keep_audio=bool(args.listening_dir),
    )
    Path(args.out).write_text(report.to_json())
    if args.markdown:
        Path(args.markdown).write_text(report.to_markdown())
    if args.listening_dir:
        vocabulary = tuple(inventory.non_silence())
        export_listening_manifest(
            report.stimuli, args.listening_dir, args.seed, vocabulary
        )
    print(report.to_markdown())
    return 0


def cmd_export_finetune_set(args) -> int:
    inventory = _inventory_from_arg(args.inventory)
    items = _load_corpus(args.corpus, inventory)
    model, _, _ = load_generator(args.gen)
    targets = tuple(t.strip() for t in args.targets.split(",") if t.strip())
    manifest = export_vocoder_finetune_set(items, model, inventory, targets, args.out)
    print(f"exported {len(manifest['pairs'])} pairs "
          f"({manifest['skipped_windows']} windows skipped)")
    return 0


def cmd_serve(args) -> int:
    from .service import run_service

    run_service(
        ckpt_dir=args.ckpt, prompts_path=args.prompts, jobs_dir=args.jobs,
        port=args.port, host=args.host,
    )
    return 0


# -- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phonepatch",
        description="Speech correction by phoneme-conditioned spectrogram inpainting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    corpus = sub.add_parser("corpus", help="synthetic corpus tools")
    corpus_sub = corpus.add_subparsers(dest="subcommand", required=True)
    p = corpus_sub.add_parser("synth", help="write a synthetic pseudo-phoneme corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n-items", type=int, default=80)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-speakers", type=int, default=None)
    p.set_defaults(func=cmd_corpus_synth)
    p = corpus_sub.add_parser("validate", help="ingest a corpus and print stats")
    p.add_argument("--root", required=True)
    p.add_argument("--inventory", default=None)
    p.set_defaults(func=cmd_corpus_validate)

    train = sub.add_parser("train", help="model training")
    train_sub = train.add_subparsers(dest="subcommand", required=True)
    p = train_sub.add_parser("siamese", help="train the acoustic embedder")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="TrainConfig overrides as JSON")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--inventory", default=None)
    p.set_defaults(func=cmd_train_siamese)
    p = train_sub.add_parser("generator", help="train the inpainting generator")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--targets", required=True, help="comma-separated phonemes")
    p.add_argument("--siamese", default=None, help="embedder checkpoint dir")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--inventory", default=None)
    p.set_defaults(func=cmd_train_generator)

    p = sub.add_parser("correct", help="correct one phoneme of one utterance")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--align", required=True, help="alignment CSV")
    p.add_argument("--k", type=int, required=True, help="segment index to replace")
    p.add_argument("--target", required=True, help="desired phoneme")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--blend", type=int, default=3)
    p.add_argument("--gl-iters", type=int, default=60)
    p.add_argument("--vocoder-cmd", default=None,
                   help="external vocoder command with {mel} and {wav} placeholders")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("baseline-concat", help="donor-splice baseline")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--align", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--corpus", required=True, help="donor corpus root")
    p.add_argument("--gender", default=None)
    p.add_argument("--exclude-speaker", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inventory", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline_concat)

    ev = sub.add_parser("eval", help="objective evaluation")
    ev_sub = ev.add_subparsers(dest="subcommand", required=True)
    p = ev_sub.add_parser("minimal-pair", help="oracle minimal-pair experiment")
    p.add_argument("--corpus", required=True)
    p.add_argument("--pairs", required=True, help="e.g. pa:pb,pb:pa")
    p.add_argument("--gen", required=True)
    p.add_argument("--siamese", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-cases", type=int, default=None)
    p.add_argument("--gl-iters", type=int, default=60)
    p.add_argument("--vocoder-cmd", default=None)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--markdown", default=None)
    p.add_argument("--listening-dir", default=None)
    p.add_argument("--inventory", default=None)
    p.set_defaults(func=cmd_eval_minimal_pair)

    p = sub.add_parser("export-finetune-set", help="vocoder fine-tuning pairs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--gen", required=True)
    p.add_argument("--targets", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--inventory", default=None)
    p.set_defaults(func=cmd_export_finetune_set)

    p = sub.add_parser("serve", help="run the correction HTTP service")
    p.add_argument("--ckpt", default=None)
    p.add_argument("--prompts", default=None)
    p.add_argument("--jobs", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PhonepatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
