"""Objective evaluation of corrections on minimal pairs.

A nearest-centroid oracle built on the acoustic embedder classifies the
corrected region of each stimulus.  The oracle stands in for human raters
only in the sense of giving a reproducible, automatic signal; every report
carries a note that its numbers are not comparable to human listening
results.  For actual listening tests, export_listening_manifest writes the
stimuli and task descriptions an external crowdsourcing front end needs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .acoustic_embedding import AcousticEmbedder, embed_acoustic, embed_many
from .audio_dsp import MelSpectrogram, Waveform, mel_spectrogram, save_wav
from .baseline_concat import DonorQuery, segment_waveform, select_donor, smooth_concat
from .corpus import CorpusItem, items_by_id
from .correction_pipeline import (
    CorrectionRequest,
    VocoderAdapter,
    correct_utterance_detailed,
)
from .errors import EmptySegment, NoDonor, PhonemeAbsent, ShapeMismatch
from .generator import SpectrogramInpainter
from .problem_model import PhonemeInventory, WindowSpec
from .training import segments_by_phoneme

ORACLE_NOTE = (
    "Oracle classification by the acoustic embedder replaces human raters; "
    "these numbers are reproducible but NOT comparable to human listening "
    "results."
)

CONDITIONS = ("vocoder_only", "generated", "smooth_concat")


def spectral_metrics(
    a, b, region: WindowSpec | None = None
) -> tuple[float, float]:
    """(element-mean L1, spectral convergence ||a-b||_F / ||b||_F), over the
    whole matrix or the region's frames; b is the reference."""
    am = a.frames if isinstance(a, MelSpectrogram) else np.asarray(a)
    bm = b.frames if isinstance(b, MelSpectrogram) else np.asarray(b)
    if am.shape != bm.shape:
        raise ShapeMismatch(f"shapes differ: {am.shape} vs {bm.shape}")
    if region is not None:
        if region.utterance_start < 0 or region.utterance_end > am.shape[0]:
            raise ShapeMismatch("region exceeds the spectrogram")
        am = am[region.utterance_start : region.utterance_end]
        bm = bm[region.utterance_start : region.utterance_end]
    return _diff_metrics(am.astype(np.float64), bm.astype(np.float64))


def _diff_metrics(am: np.ndarray, bm: np.ndarray) -> tuple[float, float]:
    diff = am - bm
    l1 = float(np.mean(np.abs(diff))) if diff.size else 0.0
    denom = float(np.linalg.norm(bm))
    num = float(np.linalg.norm(diff))
    if denom == 0.0:
        sc = 0.0 if num == 0.0 else float("inf")
    else:
        sc = num / denom
    return l1, sc


# -- the oracle ----------------------------------------------------------------------

def build_centroids(
    embedder: AcousticEmbedder, segments: dict[str, list[np.ndarray]]
) -> dict[str, np.ndarray]:
    """Mean embedding per phoneme over ground-truth segments."""
    out = {}
    for symbol in sorted(segments):
        if not segments[symbol]:
            continue
        out[symbol] = embed_many(embedder, segments[symbol]).mean(axis=0)
    if not out:
        raise ValueError("no segments to build centroids from")
    return out


def _cos(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def phoneme_identity_score(
    segment,
    embedder: AcousticEmbedder,
    centroids: dict[str, np.ndarray],
    inventory: PhonemeInventory,
) -> tuple[str, float]:
    """Nearest centroid by cosine similarity; exact ties go to whichever
    phoneme comes first in the inventory."""
    seg = segment.frames if isinstance(segment, MelSpectrogram) else np.asarray(segment)
    if seg.ndim != 2 or seg.shape[0] < 1:
        raise EmptySegment("cannot classify an empty segment")
    emb = embed_acoustic(embedder, seg)
    best_symbol, best_sim = None, -np.inf
    for symbol in inventory.symbols:
        if symbol not in centroids:
            continue
        sim = _cos(emb, centroids[symbol])
        if sim > best_sim:
            best_symbol, best_sim = symbol, sim
    if best_symbol is None:
        raise ValueError("no centroid matches any inventory phoneme")
    return best_symbol, best_sim


# -- experiment bookkeeping ---------------------------------------------------------------

@dataclass
class _Tally:
    n: int = 0
    correct: int = 0
    switched: int = 0
    l1_sum: float = 0.0
    sc_sum: float = 0.0
    metric_n: int = 0

    def add(self, predicted: str, target: str, other: str,
            l1: float | None, sc: float | None) -> None:
        self.n += 1
        if predicted == target:
            self.correct += 1
        elif predicted == other:
            self.switched += 1
        if l1 is not None:
            self.l1_sum += l1
            self.sc_sum += sc
            self.metric_n += 1

    def row(self) -> dict:
        none_count = self.n - self.correct - self.switched
        return {
            "n": self.n,
            "accuracy": self.correct / self.n if self.n else 0.0,
            "switched": self.switched / self.n if self.n else 0.0,
            "none": none_count / self.n if self.n else 0.0,
            "counts": {
                "accuracy": self.correct,
                "switched": self.switched,
                "none": none_count,
            },
            "context_l1": self.l1_sum / self.metric_n if self.metric_n else 0.0,
            "spectral_convergence": self.sc_sum / self.metric_n if self.metric_n else 0.0,
        }


@dataclass
class ListeningStimulus:
    case_id: str
    item_id: str
    segment_index: int
    source_phoneme: str
    target_phoneme: str
    condition: str
    audio: Waveform
    reference: Waveform


@dataclass
class EvalReport:
    note: str
    seed: int
    pairs: list[tuple[str, str]]
    conditions: dict[str, dict]
    per_phoneme: dict[str, dict[str, dict]]
    skipped: int = 0
    stimuli: list[ListeningStimulus] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "note": self.note,
            "seed": self.seed,
            "pairs": [list(p) for p in self.pairs],
            "conditions": self.conditions,
            "per_phoneme": self.per_phoneme,
            "skipped": self.skipped,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_markdown(self) -> str:
        lines = [f"> {self.note}", ""]
        header = ("| condition | n | accuracy | switched | none | "
                  "context L1 | spectral convergence |")
        rule = "|---" * 7 + "|"
        lines += [header, rule]
        for cond in CONDITIONS:
            if cond not in self.conditions:
                continue
            lines.append(_md_row(cond, self.conditions[cond]))
        for cond in CONDITIONS:
            rows = self.per_phoneme.get(cond)
            if not rows:
                continue
            lines += ["", f"### {cond} by desired phoneme", "", header, rule]
            for symbol in sorted(rows):
                lines.append(_md_row(f"{cond} ({symbol})", rows[symbol]))
        return "\n".join(lines) + "\n"


def _md_row(label: str, row: dict) -> str:
    return (
        f"| {label} | {row['n']} | {row['accuracy']:.3f} | "
        f"{row['switched']:.3f} | {row['none']:.3f} | "
        f"{row['context_l1']:.4f} | {row['spectral_convergence']:.4f} |"
    )


# -- the experiment ------------------------------------------------------------------------

def _classify_region(
    wave: Waveform,
    lo_frame: int,
    hi_frame: int,
    embedder: AcousticEmbedder,
    centroids: dict[str, np.ndarray],
    inventory: PhonemeInventory,
    cfg,
) -> tuple[str, MelSpectrogram]:
    mel = mel_spectrogram(wave, cfg)
    hi = min(hi_frame, mel.num_frames)
    predicted, _ = phoneme_identity_score(
        mel.frames[lo_frame:hi], embedder, centroids, inventory
    )
    return predicted, mel


def _context_metrics(
    out_mel: np.ndarray, ref_mel: np.ndarray,
    lo: int, hi_out: int, hi_ref: int,
) -> tuple[float, float]:
    """L1/convergence over frames outside the replaced region; the two mels
    may differ in length after the region (donor substitution)."""
    head_a, head_b = out_mel[:lo], ref_mel[:lo]
    tail_a, tail_b = out_mel[hi_out:], ref_mel[hi_ref:]
    n = min(len(tail_a), len(tail_b))
    am = np.concatenate([head_a, tail_a[:n]]).astype(np.float64)
    bm = np.concatenate([head_b, tail_b[:n]]).astype(np.float64)
    return _diff_metrics(am, bm)


def run_minimal_pair_experiment(
    test_items: list[CorpusItem],
    pairs: list[tuple[str, str]],
    model: SpectrogramInpainter,
    embedder: AcousticEmbedder,
    centroids: dict[str, np.ndarray],
    inventory: PhonemeInventory,
    vocoder: VocoderAdapter,
    seed: int,
    donor_items: list[CorpusItem] | None = None,
    blend: int = 3,
    max_cases_per_pair: int | None = None,
    keep_audio: bool = False,
) -> EvalReport:
    """For every test occurrence of a pair's first phoneme: vocode as-is,
    regenerate it as the second phoneme, and donor-splice it, then let the
    oracle classify the affected region of each output.

    accuracy counts predictions of the desired phoneme, switched counts the
    original one.  Deterministic for a fixed seed.
    """
    if model is None or embedder is None:
        from .errors import ModelMissing

        raise ModelMissing("experiment needs a trained generator and embedder")
    donor_items = donor_items if donor_items is not None else test_items
    tau = model.config.window_frames
    overall = {c: _Tally() for c in CONDITIONS}
    per_phoneme: dict[str, dict[str, _Tally]] = {c: {} for c in CONDITIONS}
    report = EvalReport(
        note=ORACLE_NOTE, seed=seed, pairs=list(pairs),
        conditions={}, per_phoneme={},
    )
    donor_by_id = items_by_id(donor_items)

    case_counter = 0
    for p, q in pairs:
        occurrences = [
            (item, k)
            for item in sorted(test_items, key=lambda it: it.id)
            for k in item.segmentation.occurrences(p)
        ]
        if not occurrences:
            raise PhonemeAbsent(f"{p!r} does not occur in the test items")
        if max_cases_per_pair is not None:
            occurrences = occurrences[:max_cases_per_pair]
        for item, k in occurrences:
            seg = item.segmentation
            if seg.total_frames < tau or seg.duration(k) > tau:
                report.skipped += 1
                continue
            case_counter += 1
            case_id = f"case{case_counter:04d}_{p}_to_{q}"
            cfg = item.mel_config
            lo, hi = seg.segment_bounds(k)
            wave = item.waveform()
            ref_mel = item.mel().frames

            res = correct_utterance_detailed(
                CorrectionRequest(wave, seg, k, q, blend),
                model, inventory, vocoder, cfg,
            )

            pred_vo, mel_vo = _classify_region(
                res.vocoded_original, lo, hi, embedder, centroids, inventory, cfg
            )
            l1, sc = _context_metrics(mel_vo.frames, ref_mel, lo, hi, hi)
            _tally(overall, per_phoneme, "vocoder_only", p, pred_vo, q, l1, sc)

            pred_gen, mel_gen = _classify_region(
                res.vocoded_corrected, lo, hi, embedder, centroids, inventory, cfg
            )
            l1, sc = _context_metrics(mel_gen.frames, ref_mel, lo, hi, hi)
            _tally(overall, per_phoneme, "generated", q, pred_gen, p, l1, sc)

            wave_sc = None
            try:
                donor_id, dk = select_donor(
                    donor_items, DonorQuery(q, item.gender),
                    item.speaker_id, seed + case_counter,
                )
            except NoDonor:
                try:
                    donor_id, dk = select_donor(
                        donor_items, DonorQuery(q), item.speaker_id,
                        seed + case_counter,
                    )
                except NoDonor:
                    donor_id = None
                    report.skipped += 1
            if donor_id is not None:
                donor_item = donor_by_id[donor_id]
                donor_wave = segment_waveform(donor_item, dk)
                wave_sc = smooth_concat(
                    wave, seg, k, donor_wave, hop_size=cfg.hop_size
                )
                donor_frames = int(round(len(donor_wave) / cfg.hop_size))
                pred_sc, mel_sc = _classify_region(
                    wave_sc, lo, lo + donor_frames,
                    embedder, centroids, inventory, cfg,
                )
                l1, sc = _context_metrics(
                    mel_sc.frames, ref_mel, lo, lo + donor_frames, hi
                )
                _tally(overall, per_phoneme, "smooth_concat", q, pred_sc, p, l1, sc)

            if keep_audio:
                report.stimuli.append(ListeningStimulus(
                    case_id, item.id, k, p, q, "generated",
                    res.vocoded_corrected, res.vocoded_original,
                ))
                if wave_sc is not None:
                    report.stimuli.append(ListeningStimulus(
                        case_id, item.id, k, p, q, "smooth_concat",
                        wave_sc, res.vocoded_original,
                    ))

    report.conditions = {c: overall[c].row() for c in CONDITIONS if overall[c].n}
    report.per_phoneme = {
        c: {s: t.row() for s, t in rows.items()}
        for c, rows in per_phoneme.items()
        if rows
    }
    return report


def _tally(overall, per_phoneme, condition, desired, predicted, other, l1, sc):
    overall[condition].add(predicted, desired, other, l1, sc)
    per_phoneme[condition].setdefault(desired, _Tally()).add(
        predicted, desired, other, l1, sc
    )


# -- listening-test export ----------------------------------------------------------------

LISTENING_MANIFEST_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["note", "seed", "abx_tasks", "mos_pairs"],
    "properties": {
        "note": {"type": "string"},
        "seed": {"type": "integer"},
        "abx_tasks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "stimulus_wav", "condition", "options"],
                "properties": {
                    "id": {"type": "string"},
                    "stimulus_wav": {"type": "string"},
                    "condition": {"enum": list(CONDITIONS)},
                    "options": {
                        "type": "array",
                        "minItems": 4,
                        "maxItems": 4,
                        "items": {
                            "type": "object",
                            "required": ["kind", "word"],
                            "properties": {
                                "kind": {
                                    "enum": [
                                        "target",
                                        "minimal_pair",
                                        "control",
                                        "none_of_the_above",
                                    ]
                                },
                                "word": {"type": ["string", "null"]},
                            },
                        },
                    },
                },
            },
        },
        "mos_pairs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "reference_wav", "candidate_wav", "condition"],
                "properties": {
                    "id": {"type": "string"},
                    "reference_wav": {"type": "string"},
                    "candidate_wav": {"type": "string"},
                    "condition": {"enum": list(CONDITIONS)},
                },
            },
        },
    },
}


def export_listening_manifest(
    stimuli: list[ListeningStimulus],
    out_dir,
    seed: int,
    vocabulary: tuple[str, ...] = (),
) -> dict:
    """Writes stimulus WAVs plus a JSON manifest of ABX word-choice tasks and
    reference/candidate MOS pairs for an external listening front end.

    Each ABX task offers the desired word, the original (minimal-pair) word, a
    control word, and "none of the above", in a seed-shuffled order that the
    manifest records.
    """
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    abx, mos = [], []
    for i, st in enumerate(stimuli):
        stem = f"{st.case_id}_{st.condition}"
        stim_name = f"{stem}.wav"
        ref_name = f"{stem}_reference.wav"
        save_wav(out / stim_name, st.audio)
        save_wav(out / ref_name, st.reference)
        controls = [
            w for w in vocabulary
            if w not in (st.target_phoneme, st.source_phoneme)
        ]
        control = (
            controls[int(rng.integers(len(controls)))] if controls else None
        )
        options = [
            {"kind": "target", "word": st.target_phoneme},
            {"kind": "minimal_pair", "word": st.source_phoneme},
            {"kind": "control", "word": control},
            {"kind": "none_of_the_above", "word": None},
        ]
        order = rng.permutation(4)
        abx.append({
            "id": f"abx{i:04d}",
            "stimulus_wav": stim_name,
            "condition": st.condition,
            "options": [options[j] for j in order],
            "presented_order": [options[j]["kind"] for j in order],
        })
        mos.append({
            "id": f"mos{i:04d}",
            "reference_wav": ref_name,
            "candidate_wav": stim_name,
            "condition": st.condition,
        })
    manifest = {"note": ORACLE_NOTE, "seed": seed, "abx_tasks": abx, "mos_pairs": mos}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest
