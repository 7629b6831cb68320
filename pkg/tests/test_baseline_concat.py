"""Tests for the concatenative donor-splice baseline."""

import numpy as np
import pytest

from phonepatch.audio_dsp import MelConfig, Waveform, resample
from phonepatch.baseline_concat import (
    DonorQuery,
    _best_join,
    _offsets_by_magnitude,
    segment_waveform,
    select_donor,
    smooth_concat,
)
from phonepatch.corpus import CorpusItem
from phonepatch.errors import FadeOutOfRange, NoDonor, RateMismatch, SegmentOutOfRange
from phonepatch.problem_model import PhonemeSegmentation


def _item(item_id, speaker, gender, phonemes, words=()):
    starts = tuple(range(0, 4 * len(phonemes), 4))
    seg = PhonemeSegmentation(tuple(phonemes), starts, 4 * len(phonemes))
    return CorpusItem(
        id=item_id,
        speaker_id=speaker,
        gender=gender,
        segmentation=seg,
        word_transcript=tuple(words),
        mel_config=MelConfig(),
    )


@pytest.fixture()
def donor_pool():
    return [
        _item("u1", "spkA", "F", ("sil", "pa", "sil"), words=("cat",)),
        _item("u2", "spkB", "F", ("sil", "pa", "pa", "sil"), words=("dog",)),
        _item("u3", "spkC", "M", ("sil", "pa", "sil"), words=("cat", "dog")),
        _item("u4", "spkD", "M", ("sil", "pb", "sil")),
    ]


class TestSelectDonor:
    def test_returns_an_occurrence_of_the_target(self, donor_pool):
        by_id = {it.id: it for it in donor_pool}
        for seed in range(8):
            item_id, k = select_donor(donor_pool, DonorQuery("pa"), None, seed)
            assert by_id[item_id].segmentation.phonemes[k] == "pa"

    def test_deterministic_per_seed(self, donor_pool):
        q = DonorQuery("pa")
        assert select_donor(donor_pool, q, None, 5) == select_donor(
            donor_pool, q, None, 5
        )
        picks = {select_donor(donor_pool, q, None, s) for s in range(24)}
        assert len(picks) > 1  # the pool has 4 occurrences

    def test_excludes_speaker(self, donor_pool):
        for seed in range(12):
            item_id, _ = select_donor(donor_pool, DonorQuery("pa"), "spkB", seed)
            assert item_id != "u2"

    def test_gender_filter(self, donor_pool):
        for seed in range(12):
            item_id, _ = select_donor(
                donor_pool, DonorQuery("pa", gender="M"), None, seed
            )
            assert item_id == "u3"

    def test_preferred_word_takes_priority(self, donor_pool):
        for seed in range(12):
            item_id, _ = select_donor(
                donor_pool, DonorQuery("pa", preferred_word="dog"), None, seed
            )
            assert item_id in ("u2", "u3")

    def test_absent_preferred_word_falls_back(self, donor_pool):
        item_id, k = select_donor(
            donor_pool, DonorQuery("pa", preferred_word="zebra"), None, 0
        )
        assert item_id in ("u1", "u2", "u3")

    @pytest.mark.parametrize(
        "query, exclude",
        [
            (DonorQuery("zz"), None),
            (DonorQuery("pb"), "spkD"),
            (DonorQuery("pb", gender="F"), None),
        ],
    )
    def test_no_donor(self, donor_pool, query, exclude):
        with pytest.raises(NoDonor):
            select_donor(donor_pool, query, exclude, 0)


class TestSegmentWaveform:
    def test_interior_segment_bounds(self, mini_corpus):
        item = mini_corpus[0]
        hop = item.mel_config.hop_size
        lo, hi = item.segmentation.segment_bounds(1)
        cut = segment_waveform(item, 1)
        assert cut.sample_rate == item.waveform().sample_rate
        assert np.array_equal(
            cut.samples, item.waveform().samples[lo * hop : hi * hop]
        )

    def test_final_segment_is_clipped_to_audio(self, mini_corpus):
        # the waveform holds (T - 1) * hop samples, one frame less than T * hop
        item = mini_corpus[0]
        hop = item.mel_config.hop_size
        last = len(item.segmentation.phonemes) - 1
        lo, hi = item.segmentation.segment_bounds(last)
        cut = segment_waveform(item, last)
        assert len(cut) == len(item.waveform()) - lo * hop
        assert len(cut) < (hi - lo) * hop

    def test_segment_without_audio(self):
        seg = PhonemeSegmentation(("sil", "pa"), (0, 9), 10)
        item = CorpusItem(
            id="x",
            speaker_id="s",
            gender="M",
            segmentation=seg,
            word_transcript=(),
            mel_config=MelConfig(),
            _waveform=Waveform(np.zeros(9 * 256, dtype=np.float32), 22050),
        )
        with pytest.raises(SegmentOutOfRange, match="no audio"):
            segment_waveform(item, 1)


class TestBestJoin:
    def test_offsets_walk_outward_minus_first(self):
        assert list(_offsets_by_magnitude(3)) == [0, -1, 1, -2, 2, -3, 3]
        assert list(_offsets_by_magnitude(0)) == [0]

    def test_finds_exact_match(self):
        rng = np.random.default_rng(0)
        ref = rng.normal(size=200).astype(np.float32)
        fade = ref[57:69].copy()
        assert _best_join(ref, 60, fade, 5) == 57

    def test_tie_breaks_to_base_position(self):
        ref = np.zeros(100, dtype=np.float32)
        fade = np.zeros(10, dtype=np.float32)
        assert _best_join(ref, 40, fade, 8) == 40

    def test_skips_positions_outside_reference(self):
        ref = np.zeros(100, dtype=np.float32)
        fade = np.zeros(10, dtype=np.float32)
        # base -2 is invalid; the first valid offset by magnitude is +2 -> 0
        assert _best_join(ref, -2, fade, 5) == 0

    def test_no_position_fits(self):
        ref = np.zeros(10, dtype=np.float32)
        fade = np.zeros(8, dtype=np.float32)
        with pytest.raises(FadeOutOfRange, match="no join position"):
            _best_join(ref, 5, fade, 1)

    def test_matches_brute_force_minimum(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            ref = rng.normal(size=300).astype(np.float32)
            fade = rng.normal(size=14).astype(np.float32)
            base = int(rng.integers(20, 280 - 14))
            radius = int(rng.integers(1, 20))
            got = _best_join(ref, base, fade, radius)
            costs = {}
            for d in range(-radius, radius + 1):
                pos = base + d
                if 0 <= pos and pos + 14 <= len(ref):
                    costs[pos] = float(np.sum((ref[pos : pos + 14] - fade) ** 2))
            assert costs[got] == min(costs.values())


class TestSmoothConcat:
    def test_self_splice_is_identity(self, mini_corpus):
        item = mini_corpus[1]
        k = 1  # first core segment, fully inside the audio
        donor = segment_waveform(item, k)
        out = smooth_concat(item.waveform(), item.segmentation, k, donor)
        assert out.sample_rate == item.waveform().sample_rate
        assert np.array_equal(out.samples, item.waveform().samples)

    def test_output_length_is_exact(self, mini_corpus):
        recipient = mini_corpus[0]
        donor = segment_waveform(mini_corpus[2], 1)
        hop = recipient.mel_config.hop_size
        lo, hi = recipient.segmentation.segment_bounds(1)
        rec = recipient.waveform()
        out = smooth_concat(rec, recipient.segmentation, 1, donor)
        seg_b = min(hi * hop, len(rec))
        assert len(out) == len(rec) - (seg_b - lo * hop) + len(donor)

    def test_zero_fade_zero_radius_is_plain_concat(self, mini_corpus):
        recipient = mini_corpus[0]
        donor = segment_waveform(mini_corpus[2], 1)
        hop = recipient.mel_config.hop_size
        lo, hi = recipient.segmentation.segment_bounds(1)
        rec = recipient.waveform()
        out = smooth_concat(
            rec, recipient.segmentation, 1, donor, fade_len=0, search_radius=0
        )
        expected = np.concatenate(
            [rec.samples[: lo * hop], donor.samples, rec.samples[hi * hop :]]
        )
        assert np.array_equal(out.samples, expected)

    def test_rate_mismatch(self, mini_corpus):
        recipient = mini_corpus[0]
        donor = resample(segment_waveform(mini_corpus[2], 1), 16000)
        with pytest.raises(RateMismatch):
            smooth_concat(recipient.waveform(), recipient.segmentation, 1, donor)

    @pytest.mark.parametrize("fade_len, radius", [(-1, 0), (0, -1)])
    def test_negative_arguments(self, mini_corpus, fade_len, radius):
        recipient = mini_corpus[0]
        donor = segment_waveform(mini_corpus[2], 1)
        with pytest.raises(FadeOutOfRange, match="non-negative"):
            smooth_concat(
                recipient.waveform(),
                recipient.segmentation,
                1,
                donor,
                fade_len=fade_len,
                search_radius=radius,
            )

    def test_fade_longer_than_donor(self, mini_corpus):
        recipient = mini_corpus[0]
        donor = segment_waveform(mini_corpus[2], 1)
        with pytest.raises(FadeOutOfRange, match="exceeds"):
            smooth_concat(
                recipient.waveform(),
                recipient.segmentation,
                1,
                donor,
                fade_len=len(donor) + 1,
            )
