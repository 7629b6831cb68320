"""Concatenative baseline: replace the flagged phoneme with a donor speaker's
production of the desired phoneme, joined by crossfades at both seams.

Each seam position is tuned by an exhaustive wave-similarity search: the join
slides within +/- search_radius samples and the offset minimizing the L2
distance between the overlapping fade windows wins (ties go to the smallest
shift).  The output length is exactly recipient - segment + donor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_dsp import MelConfig, Waveform, crossfade_splice
from .corpus import CorpusItem
from .errors import FadeOutOfRange, NoDonor, RateMismatch, SegmentOutOfRange
from .problem_model import PhonemeSegmentation

DEFAULT_FADE_SECONDS = 0.010
DEFAULT_RADIUS_SECONDS = 0.005


@dataclass(frozen=True)
class DonorQuery:
    target_phoneme: str
    gender: str | None = None
    preferred_word: str | None = None


def select_donor(
    items: list[CorpusItem],
    query: DonorQuery,
    exclude_speaker: str | None,
    seed: int,
) -> tuple[str, int]:
    """Uniform seeded choice among same-gender occurrences of the target
    phoneme by other speakers; utterances containing preferred_word take
    priority when any exist."""
    candidates: list[tuple[str, int, bool]] = []
    for item in sorted(items, key=lambda it: it.id):
        if exclude_speaker is not None and item.speaker_id == exclude_speaker:
            continue
        if query.gender is not None and item.gender != query.gender:
            continue
        has_word = (
            query.preferred_word is not None
            and query.preferred_word in item.word_transcript
        )
        for k in item.segmentation.occurrences(query.target_phoneme):
            candidates.append((item.id, k, has_word))
    if not candidates:
        raise NoDonor(
            f"no {query.target_phoneme!r} occurrence matches gender="
            f"{query.gender!r} excluding speaker {exclude_speaker!r}"
        )
    preferred = [c for c in candidates if c[2]]
    pool = preferred or candidates
    rng = np.random.default_rng(seed)
    item_id, k, _ = pool[int(rng.integers(len(pool)))]
    return item_id, k


def segment_waveform(item: CorpusItem, segment_index: int) -> Waveform:
    """The audio under one segmentation entry, cut on frame boundaries."""
    lo, hi = item.segmentation.segment_bounds(segment_index)
    hop = item.mel_config.hop_size
    wave = item.waveform()
    a = lo * hop
    b = min(hi * hop, len(wave))
    if a >= b:
        raise SegmentOutOfRange(f"segment {segment_index} has no audio")
    return Waveform(wave.samples[a:b], wave.sample_rate)


def _offsets_by_magnitude(radius: int):
    yield 0
    for d in range(1, radius + 1):
        yield -d
        yield d


def _best_join(
    reference: np.ndarray, base: int, fade_window: np.ndarray, radius: int
) -> int:
    """Position within base +/- radius whose fade-length slice of `reference`
    is closest (L2) to fade_window; smallest |shift| wins ties."""
    f = len(fade_window)
    best_pos = None
    best_cost = np.inf
    for d in _offsets_by_magnitude(radius):
        pos = base + d
        if pos < 0 or pos + f > len(reference):
            continue
        cost = float(np.sum((reference[pos : pos + f] - fade_window) ** 2))
        if cost < best_cost:
            best_cost = cost
            best_pos = pos
    if best_pos is None:
        raise FadeOutOfRange("no join position fits the fade window")
    return best_pos


def smooth_concat(
    recipient: Waveform,
    segmentation: PhonemeSegmentation,
    segment_index: int,
    donor: Waveform,
    fade_len: int | None = None,
    search_radius: int | None = None,
    hop_size: int | None = None,
) -> Waveform:
    """Splices the donor audio over the recipient's segment with similarity-
    searched crossfades at both joins.

    The far end of the utterance absorbs any leftover shift from the two
    independent join searches (trimmed or zero-padded by at most
    2 * search_radius samples) so the output length is always exactly
    len(recipient) - segment + donor.
    """
    if recipient.sample_rate != donor.sample_rate:
        raise RateMismatch("recipient and donor must share a sample rate")
    rate = recipient.sample_rate
    f = int(round(DEFAULT_FADE_SECONDS * rate)) if fade_len is None else fade_len
    radius = (
        int(round(DEFAULT_RADIUS_SECONDS * rate))
        if search_radius is None
        else search_radius
    )
    if f < 0 or radius < 0:
        raise FadeOutOfRange("fade length and search radius must be non-negative")
    if f > len(donor) or f > len(recipient):
        raise FadeOutOfRange("fade window exceeds an input")
    hop = hop_size or MelConfig().hop_size
    lo, hi = segmentation.segment_bounds(segment_index)
    seg_a = lo * hop
    seg_b = min(hi * hop, len(recipient))
    if seg_a >= len(recipient):
        raise SegmentOutOfRange("segment lies beyond the recipient audio")

    join_a = _best_join(recipient.samples, seg_a, donor.samples[:f], radius)
    spliced = crossfade_splice(recipient, donor, join_a, 0, f)
    join_b = _best_join(
        recipient.samples, seg_b - f, donor.samples[len(donor) - f :], radius
    )
    out = crossfade_splice(spliced, recipient, len(spliced) - f, join_b, f)

    target_len = len(recipient) - (seg_b - seg_a) + len(donor)
    if len(out) > target_len:
        out = Waveform(out.samples[:target_len], rate)
    elif len(out) < target_len:
        pad = np.zeros(target_len - len(out), dtype=np.float64)
        out = Waveform(np.concatenate([out.samples, pad]), rate)
    return out
