"""Corpus handling: TIMIT-style ingestion, a deterministic synthetic corpus of
formant-like pseudo-phonemes, train/validation splitting, and phoneme-instance
sampling.

Corpus layout on disk:
    <root>/speakers.csv                     speaker_id,gender
    <root>/<speaker_id>/<utt_id>.wav        mono PCM16 or float32
    <root>/<speaker_id>/<utt_id>.align.csv  or <utt_id>.TextGrid
    <root>/<speaker_id>/<utt_id>.words.txt  optional word transcript
"""
from __future__ import annotations

import csv
import math
import re
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_dsp import MelConfig, MelSpectrogram, Waveform, load_wav, mel_spectrogram, resample, save_wav
from .errors import (
    FrameCountMismatch,
    MissingAlignment,
    PhonemeAbsent,
    TooFewItems,
    UnknownPhoneme,
)
from .problem_model import PhonemeInventory, PhonemeSegmentation

DEFAULT_PSEUDO_PHONEMES = ("pa", "pb", "pc", "pd")

# fundamental frequency and two resonance band centers per pseudo-phoneme
_PSEUDO_PROFILES = {
    "pa": (220.0, (600.0, 1800.0)),
    "pb": (330.0, (1000.0, 2600.0)),
    "pc": (440.0, (1400.0, 3400.0)),
    "pd": (550.0, (1900.0, 4200.0)),
}


def default_inventory() -> PhonemeInventory:
    return PhonemeInventory(("sil",) + DEFAULT_PSEUDO_PHONEMES, "sil")


@dataclass
class CorpusItem:
    id: str
    speaker_id: str
    gender: str  # "M", "F" or "unknown"
    segmentation: PhonemeSegmentation
    word_transcript: tuple[str, ...]
    mel_config: MelConfig
    waveform_path: Path | None = None
    _waveform: Waveform | None = field(default=None, repr=False)
    _mel: MelSpectrogram | None = field(default=None, repr=False)

    def waveform(self) -> Waveform:
        if self._waveform is None:
            w = load_wav(self.waveform_path)
            self._waveform = resample(w, self.mel_config.sample_rate)
        return self._waveform

    def mel(self) -> MelSpectrogram:
        if self._mel is None:
            self._mel = mel_spectrogram(self.waveform(), self.mel_config)
        return self._mel


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...] = ()

    def __post_init__(self):
        parts = [set(self.train), set(self.validation), set(self.test)]
        total = sum(len(p) for p in parts)
        if len(parts[0] | parts[1] | parts[2]) != total:
            raise ValueError("split partitions must be disjoint")


# -- alignment files -------------------------------------------------------------

def write_alignment_csv(path, segmentation: PhonemeSegmentation) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"total_frames={segmentation.total_frames}\n")
        writer = csv.writer(fh)
        writer.writerow(["phoneme", "start_frame"])
        for p, t in zip(segmentation.phonemes, segmentation.start_frames):
            writer.writerow([p, t])


def read_alignment_csv(path) -> tuple[list[str], list[int], int]:
    """Returns (phonemes, start_frames, total_frames)."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
        m = re.fullmatch(r"total_frames=(\d+)", first)
        if not m:
            raise FrameCountMismatch(f"{path}: missing total_frames header")
        total = int(m.group(1))
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["phoneme", "start_frame"]:
            raise FrameCountMismatch(f"{path}: expected 'phoneme,start_frame' header")
        phonemes, starts = [], []
        for row in reader:
            if not row:
                continue
            phonemes.append(row[0].strip())
            starts.append(int(row[1]))
    return phonemes, starts, total


def read_textgrid(path, cfg: MelConfig, silence_symbol: str = "sil",
                  tier: str = "phones") -> tuple[list[str], list[int], int]:
    """Minimal TextGrid reader: the interval tier named `tier`, interval times
    in seconds converted to frames via the hop size.  Blank interval labels
    map to the silence symbol."""
    text = Path(path).read_text(encoding="utf-8", errors="replace")
    tiers = re.split(r"item\s*\[\d+\]\s*:", text)
    block = None
    for t in tiers[1:]:
        name = re.search(r'name\s*=\s*"([^"]*)"', t)
        if name and name.group(1) == tier:
            block = t
            break
    if block is None:
        raise MissingAlignment(f"{path}: no interval tier named {tier!r}")
    intervals = re.findall(
        r'xmin\s*=\s*([\d.eE+-]+)\s*\n\s*xmax\s*=\s*([\d.eE+-]+)\s*\n\s*text\s*=\s*"([^"]*)"',
        block,
    )
    if not intervals:
        raise MissingAlignment(f"{path}: tier {tier!r} has no intervals")

    def to_frame(seconds: float) -> int:
        return int(round(float(seconds) * cfg.sample_rate / cfg.hop_size))

    phonemes, starts = [], []
    last_end = 0.0
    for xmin, xmax, label in intervals:
        frame = to_frame(float(xmin))
        label = label.strip() or silence_symbol
        if starts and frame <= starts[-1]:
            continue  # collapse zero-length intervals after rounding
        phonemes.append(label)
        starts.append(frame)
        last_end = float(xmax)
    return phonemes, starts, to_frame(last_end)


def _read_speakers_csv(root: Path) -> dict[str, str]:
    path = root / "speakers.csv"
    genders: dict[str, str] = {}
    if not path.exists():
        return genders
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        for row in reader:
            if len(row) >= 2:
                genders[row[0].strip()] = row[1].strip() or "unknown"
    return genders


# -- ingestion ---------------------------------------------------------------------

def _validate_item(item: CorpusItem, inventory: PhonemeInventory) -> None:
    for symbol in item.segmentation.phonemes:
        if symbol not in inventory:
            raise UnknownPhoneme(item.id, symbol)
    n_mel = item.mel().num_frames
    if item.segmentation.total_frames != n_mel:
        raise FrameCountMismatch(
            f"item {item.id!r}: alignment covers {item.segmentation.total_frames} "
            f"frames but the mel spectrogram has {n_mel}"
        )


def ingest_corpus(
    root_path, inventory: PhonemeInventory, cfg: MelConfig | None = None
) -> list[CorpusItem]:
    """Load every <speaker>/<utt>.wav with its alignment, resampled to the
    config rate and validated against the inventory and mel frame counts.

    A 1-frame rounding slack at the file end is tolerated by clamping the
    alignment's total to the mel frame count.
    """
    cfg = cfg or MelConfig()
    root = Path(root_path)
    genders = _read_speakers_csv(root)
    items: list[CorpusItem] = []
    for wav_path in sorted(root.glob("*/*.wav")):
        speaker_id = wav_path.parent.name
        utt_id = wav_path.stem
        align_csv = wav_path.with_suffix(".align.csv")
        textgrid = wav_path.with_suffix(".TextGrid")
        if align_csv.exists():
            phonemes, starts, total = read_alignment_csv(align_csv)
        elif textgrid.exists():
            phonemes, starts, total = read_textgrid(textgrid, cfg, inventory.silence_symbol)
        else:
            raise MissingAlignment(f"no alignment file next to {wav_path}")

        waveform = resample(load_wav(wav_path), cfg.sample_rate)
        mel = mel_spectrogram(waveform, cfg)
        if abs(total - mel.num_frames) > 1:
            raise FrameCountMismatch(
                f"item {utt_id!r}: alignment total {total} vs mel frames {mel.num_frames}"
            )
        total = mel.num_frames
        if starts and starts[-1] >= total:
            raise FrameCountMismatch(
                f"item {utt_id!r}: last phoneme starts at or beyond the final frame"
            )
        words_path = wav_path.with_suffix(".words.txt")
        transcript: tuple[str, ...] = ()
        if words_path.exists():
            transcript = tuple(words_path.read_text(encoding="utf-8").split())
        item = CorpusItem(
            id=utt_id,
            speaker_id=speaker_id,
            gender=genders.get(speaker_id, "unknown"),
            segmentation=PhonemeSegmentation(tuple(phonemes), tuple(starts), total),
            word_transcript=transcript,
            mel_config=cfg,
            waveform_path=wav_path,
            _waveform=waveform,
            _mel=mel,
        )
        _validate_item(item, inventory)
        items.append(item)
    return items


# -- synthetic corpus -----------------------------------------------------------------

def _resonance_envelope(freqs: np.ndarray, bands: tuple[float, float]) -> np.ndarray:
    c1, c2 = bands
    return (
        np.exp(-(((freqs - c1) / 300.0) ** 2))
        + 0.7 * np.exp(-(((freqs - c2) / 400.0) ** 2))
        + 0.02
    )


def _synth_segment(
    symbol: str,
    n_samples: int,
    pitch_factor: float,
    gain: float,
    rng: np.random.Generator,
    cfg: MelConfig,
    phase_rng: np.random.Generator | None = None,
) -> np.ndarray:
    if symbol == "sil":
        return 1e-4 * rng.standard_normal(n_samples)
    f0, bands = _PSEUDO_PROFILES[symbol]
    f0 = f0 * pitch_factor
    t = np.arange(n_samples) / cfg.sample_rate
    max_freq = min(5000.0, cfg.sample_rate / 2 * 0.9)
    n_harmonics = max(1, int(max_freq // f0))
    harmonic_freqs = f0 * np.arange(1, n_harmonics + 1)
    amps = _resonance_envelope(harmonic_freqs, bands)
    phases = (phase_rng or rng).uniform(0, 2 * np.pi, size=n_harmonics)
    wave = (amps[:, None] * np.sin(
        2 * np.pi * harmonic_freqs[:, None] * t[None, :] + phases[:, None]
    )).sum(axis=0)
    wave *= gain / max(np.abs(wave).max(), 1e-9) * 0.5
    ramp = min(int(0.005 * cfg.sample_rate), n_samples // 2)
    if ramp > 0:
        env = np.ones(n_samples)
        edge = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        env[:ramp] = edge
        env[-ramp:] = edge[::-1]
        wave *= env
    return wave


def synth_corpus(
    seed: int,
    n_items: int,
    inventory: PhonemeInventory | None = None,
    cfg: MelConfig | None = None,
    out_dir=None,
    n_speakers: int | None = None,
    core_duration_range: tuple[int, int] = (40, 120),
    silence_duration_range: tuple[int, int] = (20, 30),
    gain_range: tuple[float, float] = (0.6, 1.0),
    core_count_range: tuple[int, int] = (3, 5),
    phase_style: str = "random",
) -> list[CorpusItem]:
    """Deterministic synthetic corpus: each pseudo-phoneme is a harmonic stack
    with fixed resonance bands; durations in frames are drawn from the given
    ranges; each synthetic speaker is a global pitch offset shared across
    their items.

    phase_style "random" draws fresh harmonic phases for every segment;
    "fixed" reuses one phase set per pseudo-phoneme, making repeated
    instances identical up to pitch, gain and duration.

    With out_dir set, the corpus is also written in the on-disk layout.
    """
    if n_items < 1:
        raise ValueError("n_items must be >= 1")
    if not 1 <= core_duration_range[0] <= core_duration_range[1]:
        raise ValueError("bad core duration range")
    if not 1 <= silence_duration_range[0] <= silence_duration_range[1]:
        raise ValueError("bad silence duration range")
    if not 0.0 < gain_range[0] <= gain_range[1]:
        raise ValueError("bad gain range")
    if not 1 <= core_count_range[0] <= core_count_range[1]:
        raise ValueError("bad core count range")
    if phase_style not in ("random", "fixed"):
        raise ValueError("phase_style must be 'random' or 'fixed'")
    inventory = inventory or default_inventory()
    cfg = cfg or MelConfig()
    pseudo = inventory.non_silence()
    if len(pseudo) < 4:
        raise ValueError("need an inventory with at least 4 pseudo-phonemes")
    for symbol in pseudo:
        if symbol not in _PSEUDO_PROFILES:
            raise ValueError(f"no synthesis profile for pseudo-phoneme {symbol!r}")
    rng = np.random.default_rng(seed)
    if n_speakers is None:
        n_speakers = max(2, int(round(math.sqrt(n_items))))
    pitch_offsets = 2.0 ** rng.uniform(-0.15, 0.15, size=n_speakers)
    genders = ["M" if i % 2 == 0 else "F" for i in range(n_speakers)]

    items: list[CorpusItem] = []
    for i in range(n_items):
        speaker = int(rng.integers(0, n_speakers))
        # with the default ranges, 3+ core phones and 20+ frame edge silences
        # guarantee that a context window 30% longer than the longest phone
        # always fits the utterance
        n_core = int(rng.integers(core_count_range[0], core_count_range[1] + 1))
        core_lo, core_hi = core_duration_range
        sil_lo, sil_hi = silence_duration_range
        symbols = ["sil"] + [str(rng.choice(pseudo)) for _ in range(n_core)] + ["sil"]
        durations = [int(rng.integers(sil_lo, sil_hi + 1))] + [
            int(rng.integers(core_lo, core_hi + 1)) for _ in range(n_core)
        ] + [int(rng.integers(sil_lo, sil_hi + 1))]
        gains = rng.uniform(gain_range[0], gain_range[1], size=len(symbols))

        chunks = []
        starts = []
        pos = 0
        for sym, dur, gain in zip(symbols, durations, gains):
            starts.append(pos)
            phase_rng = None
            if phase_style == "fixed":
                phase_rng = np.random.default_rng(zlib.crc32(sym.encode("utf-8")))
            chunks.append(
                _synth_segment(
                    sym, dur * cfg.hop_size, pitch_offsets[speaker], gain, rng, cfg,
                    phase_rng=phase_rng,
                )
            )
            pos += dur
        samples = np.concatenate(chunks)
        total_frames = pos + 1  # mel of n*hop samples has n+1 frames
        segmentation = PhonemeSegmentation(tuple(symbols), tuple(starts), total_frames)
        item = CorpusItem(
            id=f"utt{i:04d}",
            speaker_id=f"spk{speaker:02d}",
            gender=genders[speaker],
            segmentation=segmentation,
            word_transcript=tuple(s for s in symbols if s != "sil"),
            mel_config=cfg,
            _waveform=Waveform(samples, cfg.sample_rate),
        )
        _validate_item(item, inventory)
        items.append(item)

    if out_dir is not None:
        root = Path(out_dir)
        root.mkdir(parents=True, exist_ok=True)
        with open(root / "speakers.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["speaker_id", "gender"])
            for s in range(n_speakers):
                writer.writerow([f"spk{s:02d}", genders[s]])
        for item in items:
            spk_dir = root / item.speaker_id
            spk_dir.mkdir(exist_ok=True)
            wav_path = spk_dir / f"{item.id}.wav"
            save_wav(wav_path, item.waveform(), cfg.sample_rate)
            write_alignment_csv(spk_dir / f"{item.id}.align.csv", item.segmentation)
            (spk_dir / f"{item.id}.words.txt").write_text(
                " ".join(item.word_transcript) + "\n", encoding="utf-8"
            )
            item.waveform_path = wav_path
    return items


# -- splitting ---------------------------------------------------------------------

def _speaker_exact_subset(
    items: list[CorpusItem], target: int, order: list[str]
) -> set[str] | None:
    """Speakers (in the given shuffled order) whose item counts sum exactly to
    target, or None when no such subset exists."""
    counts = {s: 0 for s in order}
    for item in items:
        counts[item.speaker_id] += 1
    reachable: dict[int, tuple[str, ...]] = {0: ()}
    for speaker in order:
        c = counts[speaker]
        additions = {}
        for total, chosen in reachable.items():
            cand = total + c
            if cand <= target and cand not in reachable and cand not in additions:
                additions[cand] = chosen + (speaker,)
        reachable.update(additions)
        if target in reachable:
            return set(reachable[target])
    return set(reachable[target]) if target in reachable else None


def _partition(
    items: list[CorpusItem], count: int, rng: np.random.Generator
) -> tuple[list[CorpusItem], list[CorpusItem]]:
    """Split into (chosen, rest) with len(chosen) == count, speaker-disjoint
    when an exact speaker packing exists."""
    speakers = sorted({it.speaker_id for it in items})
    order = list(speakers)
    rng.shuffle(order)
    subset = _speaker_exact_subset(items, count, order)
    if subset is not None:
        chosen = [it for it in items if it.speaker_id in subset]
        rest = [it for it in items if it.speaker_id not in subset]
        return chosen, rest
    idx = np.arange(len(items))
    rng.shuffle(idx)
    chosen_idx = set(idx[:count].tolist())
    chosen = [it for i, it in enumerate(items) if i in chosen_idx]
    rest = [it for i, it in enumerate(items) if i not in chosen_idx]
    return chosen, rest


def split_corpus(
    items: list[CorpusItem], seed: int, val_ratio: float = 0.2, test_count: int = 0
) -> CorpusSplit:
    """Deterministic split: optional test carve-out, then an exact
    (1-val_ratio)/val_ratio partition of the remainder, speaker-disjoint
    whenever the speaker item counts permit it."""
    if len(items) < 5:
        raise TooFewItems(f"need at least 5 items, got {len(items)}")
    rng = np.random.default_rng(seed)
    test: list[CorpusItem] = []
    rest = list(items)
    if test_count:
        test, rest = _partition(rest, test_count, rng)
    train_count = int(round((1.0 - val_ratio) * len(rest)))
    train, val = _partition(rest, train_count, rng)
    return CorpusSplit(
        train=tuple(it.id for it in train),
        validation=tuple(it.id for it in val),
        test=tuple(it.id for it in test),
    )


def items_by_id(items: list[CorpusItem]) -> dict[str, CorpusItem]:
    return {it.id: it for it in items}


# -- phoneme instance sampling --------------------------------------------------------

def phoneme_occurrences(items: list[CorpusItem], phoneme: str) -> list[tuple[str, int]]:
    occ = []
    for item in items:
        for k in item.segmentation.occurrences(phoneme):
            occ.append((item.id, k))
    return occ


def sample_phoneme_instances(
    items: list[CorpusItem], phoneme: str, n: int, seed: int
) -> list[tuple[str, int]]:
    """n occurrences of a phoneme, uniform; sampling is without replacement
    when enough occurrences exist, with replacement otherwise."""
    occ = phoneme_occurrences(items, phoneme)
    if not occ:
        raise PhonemeAbsent(f"phoneme {phoneme!r} does not occur in the corpus")
    rng = np.random.default_rng(seed)
    replace = len(occ) < n
    idx = rng.choice(len(occ), size=n, replace=replace)
    return [occ[i] for i in idx]
