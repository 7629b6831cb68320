"""Loss functions and training loops for the embedder and the generator.

The generator objective is a two-region L1: the regenerated span and its
surrounding context, each averaged over its own element count, plus two
embedding-based terms: an attract loss pulling the generated span toward
real samples of the same phoneme, and a contrastive term that re-generates
the span with a deliberately different phoneme and pulls it toward samples
of that phoneme instead.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .acoustic_embedding import AcousticEmbedder
from .audio_dsp import MelConfig, MelSpectrogram
from .corpus import CorpusItem, CorpusSplit, items_by_id, split_corpus
from .errors import (
    EmptySegment,
    PhonemeTooRare,
    SamePhoneme,
    ShapeMismatch,
    TooFewClasses,
)
from .generator import (
    DOWNSAMPLE_FACTOR,
    GeneratorConfig,
    SpectrogramInpainter,
    init_generator,
)
from .problem_model import (
    FramePhonemeSequence,
    MaskVector,
    PhonemeInventory,
    WindowSpec,
    apply_mask,
    build_mask,
    choose_window_length,
    compute_context_window,
    frame_phoneme_labels,
    round_up_to_multiple,
)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 450
    batch_size: int = 100
    learning_rate: float = 1e-4
    patience: int = 20
    seed: int = 0
    masked_weight: float = 1.0
    context_weight: float = 1.0
    attract_weight: float = 0.1
    contrast_weight: float = 0.1
    margin: float = 0.3
    n_refs: int = 2

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("invalid schedule")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if min(self.masked_weight, self.context_weight,
               self.attract_weight, self.contrast_weight) < 0:
            raise ValueError("loss weights must be non-negative")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "epochs", "batch_size", "learning_rate", "patience", "seed",
            "masked_weight", "context_weight", "attract_weight",
            "contrast_weight", "margin", "n_refs")}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class TrainReport:
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_epoch: int = -1
    checkpoint_path: str | None = None
    extra: dict = field(default_factory=dict)

    def epoch_rows(self) -> list[dict]:
        rows = []
        for i, tr in enumerate(self.train_losses):
            row = {"epoch": i, "train_loss": tr}
            if i < len(self.val_losses):
                row["val_loss"] = self.val_losses[i]
            rows.append(row)
        return rows


# -- loss functions ----------------------------------------------------------------

def _to_tensor(x, like: torch.Tensor | None = None) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    if isinstance(x, MelSpectrogram):
        x = x.frames
    arr = np.asarray(x)
    if not arr.flags.writeable:
        arr = arr.copy()
    t = torch.from_numpy(np.ascontiguousarray(arr))
    if like is not None:
        t = t.to(like.dtype)
    return t


def _mask_tensor(mask, dtype) -> torch.Tensor:
    if isinstance(mask, MaskVector):
        mask = mask.values
    return _to_tensor(mask).to(dtype)


def two_region_l1(
    y: torch.Tensor, x: torch.Tensor, mask: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-example (masked_mean, context_mean) over (B, T, D) batches with a
    (B, T) binary mask; empty regions contribute zero."""
    diff = (y - x).abs()
    inside = (1.0 - mask).unsqueeze(2)
    outside = mask.unsqueeze(2)
    d = y.shape[2]
    n_in = inside.squeeze(2).sum(dim=1) * d
    n_out = outside.squeeze(2).sum(dim=1) * d
    masked = (diff * inside).sum(dim=(1, 2)) / n_in.clamp(min=1.0)
    context = (diff * outside).sum(dim=(1, 2)) / n_out.clamp(min=1.0)
    return masked, context


def reconstruction_loss(
    y, x, mask, masked_weight: float = 1.0, context_weight: float = 1.0
):
    """Weighted sum of the masked-region and context-region mean absolute
    errors.  Tensor inputs keep the autograd graph; array inputs return a
    float."""
    want_float = not isinstance(y, torch.Tensor)
    yt = _to_tensor(y)
    xt = _to_tensor(x, like=yt)
    if yt.shape != xt.shape:
        raise ShapeMismatch(f"shapes differ: {tuple(yt.shape)} vs {tuple(xt.shape)}")
    mt = _mask_tensor(mask, yt.dtype)
    if mt.shape[-1] != yt.shape[-2 if yt.dim() == 3 else 0]:
        raise ShapeMismatch("mask length does not match the frame count")
    if yt.dim() == 2:
        yt, xt, mt = yt.unsqueeze(0), xt.unsqueeze(0), mt.unsqueeze(0)
    masked, context = two_region_l1(yt, xt, mt)
    loss = (masked_weight * masked + context_weight * context).mean()
    return float(loss.item()) if want_float else loss


def _cosine_rows(u: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    nu = u.norm(dim=1).clamp(min=1e-12)
    nv = v.norm(dim=1).clamp(min=1e-12)
    return (u * v).sum(dim=1) / (nu * nv)


def _embed_slices(
    embedder: AcousticEmbedder, windows: torch.Tensor, bounds: list[tuple[int, int]]
) -> torch.Tensor:
    slices = []
    for b, (lo, hi) in enumerate(bounds):
        if hi <= lo:
            raise EmptySegment("masked slice is empty")
        slices.append(windows[b, lo:hi])
    return embedder.embed_tensors(slices)


def embedding_attract_loss(
    gen_window, window: WindowSpec, embedder: AcousticEmbedder, ref_segments
):
    """Mean over reference segments of (1 - cos) between the embedding of the
    generated masked slice and each reference embedding."""
    if not ref_segments:
        raise EmptySegment("need at least one reference segment")
    want_float = not isinstance(gen_window, torch.Tensor)
    dtype = next(embedder.parameters()).dtype
    gt = _to_tensor(gen_window).to(dtype)
    if gt.dim() != 2:
        raise ShapeMismatch("gen_window must be (frames, bins)")
    emb = _embed_slices(embedder, gt.unsqueeze(0),
                        [(window.mask_lo, window.mask_hi)])
    refs = [_to_tensor(r, like=gt) for r in ref_segments]
    ref_emb = embedder.embed_tensors(refs)
    sims = _cosine_rows(emb.expand(len(refs), -1), ref_emb)
    loss = (1.0 - sims).mean()
    return float(loss.item()) if want_float else loss


def contrastive_generation_loss(
    model: SpectrogramInpainter,
    x_window,
    window: WindowSpec,
    base_labels: FramePhonemeSequence | np.ndarray,
    contrast_index: int,
    embedder: AcousticEmbedder,
    ref_segments,
):
    """Re-generates the masked span conditioned on a different phoneme and
    applies the attract loss toward samples of that phoneme."""
    labels = base_labels.labels if isinstance(base_labels, FramePhonemeSequence) else np.asarray(base_labels)
    span = labels[window.mask_lo : window.mask_hi]
    if span.size and int(span[0]) == int(contrast_index):
        raise SamePhoneme("contrastive phoneme equals the span's own phoneme")
    want_float = not isinstance(x_window, torch.Tensor)
    dtype = next(model.parameters()).dtype
    xt = _to_tensor(x_window).to(dtype)
    mask = torch.ones(xt.shape[0], dtype=xt.dtype)
    mask[window.mask_lo : window.mask_hi] = 0.0
    labels_q = torch.from_numpy(np.array(labels, dtype=np.int64))
    labels_q[window.mask_lo : window.mask_hi] = int(contrast_index)
    y = model((xt * mask.unsqueeze(1)).unsqueeze(0), labels_q.unsqueeze(0)).squeeze(0)
    loss = embedding_attract_loss(y, window, embedder, ref_segments)
    if want_float and isinstance(loss, torch.Tensor):
        return float(loss.item())
    return loss


# -- training data assembly -----------------------------------------------------------

@dataclass
class WindowExample:
    item_id: str
    segment_index: int
    phoneme: str
    x_window: np.ndarray  # (tau, D) float32, unmasked ground truth
    mask: np.ndarray      # (tau,) float32
    labels: np.ndarray    # (tau,) int64 with the true phoneme on the span
    mask_lo: int
    mask_hi: int

    @property
    def window_spec(self) -> WindowSpec:
        return WindowSpec(0, len(self.mask), self.mask_lo, self.mask_hi)


def build_window_examples(
    items: list[CorpusItem],
    inventory: PhonemeInventory,
    target_phonemes: tuple[str, ...],
    window_frames: int,
) -> list[WindowExample]:
    examples = []
    for item in items:
        seg = item.segmentation
        if seg.total_frames < window_frames:
            continue
        mel = item.mel().frames
        for k, symbol in enumerate(seg.phonemes):
            if symbol not in target_phonemes:
                continue
            if seg.duration(k) > window_frames:
                continue
            win = compute_context_window(seg, k, window_frames)
            labels = frame_phoneme_labels(seg, win, inventory, k, symbol)
            examples.append(WindowExample(
                item_id=item.id,
                segment_index=k,
                phoneme=symbol,
                x_window=mel[win.utterance_start : win.utterance_end].copy(),
                mask=build_mask(win).values.copy(),
                labels=labels.labels.copy(),
                mask_lo=win.mask_lo,
                mask_hi=win.mask_hi,
            ))
    return examples


def segments_by_phoneme(
    items: list[CorpusItem],
    inventory: PhonemeInventory,
    include_silence: bool = False,
) -> dict[str, list[np.ndarray]]:
    """Ground-truth mel slices grouped by phoneme symbol."""
    out: dict[str, list[np.ndarray]] = {}
    for item in items:
        mel = item.mel().frames
        seg = item.segmentation
        for k, symbol in enumerate(seg.phonemes):
            if not include_silence and symbol == inventory.silence_symbol:
                continue
            lo, hi = seg.segment_bounds(k)
            out.setdefault(symbol, []).append(mel[lo:hi].copy())
    return out


def pick_window_frames(
    items: list[CorpusItem], target_phonemes: tuple[str, ...]
) -> int:
    """30% above the longest target-phoneme instance, rounded up to the
    downsampling multiple."""
    durations = [
        item.segmentation.duration(k)
        for item in items
        for k, p in enumerate(item.segmentation.phonemes)
        if p in target_phonemes
    ]
    if not durations:
        raise PhonemeTooRare("no occurrences of the target phonemes")
    return round_up_to_multiple(choose_window_length(max(durations)), DOWNSAMPLE_FACTOR)


# -- siamese training -------------------------------------------------------------------

def _pair_batch(
    rng: np.random.Generator,
    by_class: dict[str, list[int]],
    n_pairs: int,
) -> list[tuple[int, int, float]]:
    """(left, right, is_same) index pairs, half same-class, half cross-class."""
    classes = sorted(by_class)
    pairs = []
    for j in range(n_pairs):
        same = j % 2 == 0
        if same:
            cls = classes[rng.integers(len(classes))]
            pool = by_class[cls]
            a, b = rng.integers(len(pool)), rng.integers(len(pool))
            pairs.append((pool[a], pool[b], 1.0))
        else:
            ia, ib = rng.choice(len(classes), size=2, replace=False)
            a = by_class[classes[ia]][rng.integers(len(by_class[classes[ia]]))]
            b = by_class[classes[ib]][rng.integers(len(by_class[classes[ib]]))]
            pairs.append((a, b, 0.0))
    return pairs


def _pair_loss(
    embedder: AcousticEmbedder,
    segments: list[torch.Tensor],
    pairs: list[tuple[int, int, float]],
    margin: float,
) -> torch.Tensor:
    left = embedder.embed_tensors([segments[a] for a, _, _ in pairs])
    right = embedder.embed_tensors([segments[b] for _, b, _ in pairs])
    sims = _cosine_rows(left, right)
    same = torch.tensor([s for _, _, s in pairs], dtype=sims.dtype)
    loss_same = (1.0 - sims) * same
    loss_diff = torch.relu(sims - margin) * (1.0 - same)
    return (loss_same + loss_diff).mean()


def train_siamese(
    items: list[CorpusItem],
    cfg: TrainConfig,
    inventory: PhonemeInventory,
    split: CorpusSplit | None = None,
    embedder: AcousticEmbedder | None = None,
) -> tuple[AcousticEmbedder, TrainReport]:
    """Contrastive pair training on ground-truth phoneme segments: same-class
    pairs are pulled to similarity 1, cross-class pairs pushed below the
    margin.  Deterministic in cfg.seed; early stops on validation pair loss."""
    from .acoustic_embedding import SiameseConfig, init_siamese

    torch.manual_seed(cfg.seed)
    if split is None:
        split = split_corpus(items, cfg.seed)
    by_id = items_by_id(items)
    train_items = [by_id[i] for i in split.train]
    val_items = [by_id[i] for i in split.validation]

    train_segs = segments_by_phoneme(train_items, inventory)
    if len(train_segs) < 2:
        raise TooFewClasses("need at least 2 phoneme classes with segments")
    val_segs = segments_by_phoneme(val_items or train_items, inventory)

    if embedder is None:
        mel_dim = next(iter(train_segs.values()))[0].shape[1]
        embedder = init_siamese(cfg.seed, SiameseConfig(n_mels=mel_dim))
    embedder.train()

    def to_tensors(by_phoneme):
        flat, classes = [], {}
        for symbol in sorted(by_phoneme):
            classes[symbol] = []
            for seg in by_phoneme[symbol]:
                classes[symbol].append(len(flat))
                flat.append(torch.from_numpy(seg).float())
        return flat, classes

    flat_train, train_classes = to_tensors(train_segs)
    flat_val, val_classes = to_tensors(val_segs)

    rng = np.random.default_rng(cfg.seed)
    val_rng = np.random.default_rng(cfg.seed + 1)
    val_pairs = _pair_batch(val_rng, val_classes, min(100, 4 * len(flat_val)))

    # cfg.learning_rate is the initial rate; cosine-anneal to zero over the
    # run so the L1-style losses stop dithering once near a minimum.
    optimizer = torch.optim.Adam(embedder.parameters(), lr=cfg.learning_rate)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=cfg.epochs)
    report = TrainReport()
    best_state = copy.deepcopy(embedder.state_dict())
    best_loss = float("inf")
    stale = 0
    steps_per_epoch = max(1, len(flat_train) // cfg.batch_size)

    for epoch in range(cfg.epochs):
        embedder.train()
        epoch_losses = []
        for _ in range(steps_per_epoch):
            pairs = _pair_batch(rng, train_classes, cfg.batch_size)
            loss = _pair_loss(embedder, flat_train, pairs, cfg.margin)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_losses.append(float(loss.item()))
        scheduler.step()
        report.train_losses.append(float(np.mean(epoch_losses)))

        embedder.eval()
        with torch.no_grad():
            val_loss = float(_pair_loss(embedder, flat_val, val_pairs, cfg.margin).item())
        report.val_losses.append(val_loss)
        if val_loss < best_loss:
            best_loss = val_loss
            best_state = copy.deepcopy(embedder.state_dict())
            report.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    if report.best_epoch >= 0:
        embedder.load_state_dict(best_state)
    embedder.eval()
    return embedder, report


# -- generator training --------------------------------------------------------------------

class _RefBank:
    """Frozen embeddings of ground-truth phoneme segments, unit-normalized."""

    def __init__(self, embedder: AcousticEmbedder, segs: dict[str, list[np.ndarray]]):
        self.by_phoneme: dict[str, list[int]] = {}
        self.segments: list[np.ndarray] = []
        flat = []
        for symbol in sorted(segs):
            self.by_phoneme[symbol] = []
            for seg in segs[symbol]:
                self.by_phoneme[symbol].append(len(flat))
                flat.append(torch.from_numpy(seg).float())
                self.segments.append(seg)
        with torch.no_grad():
            emb = embedder.embed_tensors(flat)
        self.unit = emb / emb.norm(dim=1, keepdim=True).clamp(min=1e-12)

    def sample(self, rng: np.random.Generator, phoneme: str, n: int) -> np.ndarray:
        pool = self.by_phoneme[phoneme]
        return np.array([pool[rng.integers(len(pool))] for _ in range(n)])


def _batch_embedding_losses(
    embedder: AcousticEmbedder,
    y: torch.Tensor,
    bounds: list[tuple[int, int]],
    ref_unit: torch.Tensor,
    ref_idx: np.ndarray,
) -> torch.Tensor:
    """Mean over the batch of the mean (1 - cos) against each example's
    reference embeddings; ref_idx is (B, n_refs) into the frozen bank."""
    emb = _embed_slices(embedder, y, bounds)
    unit = emb / emb.norm(dim=1, keepdim=True).clamp(min=1e-12)
    refs = ref_unit[torch.from_numpy(ref_idx.reshape(-1))]
    n_refs = ref_idx.shape[1]
    sims = (unit.repeat_interleave(n_refs, dim=0) * refs).sum(dim=1)
    return (1.0 - sims).mean()


def train_generator(
    items: list[CorpusItem],
    inventory: PhonemeInventory,
    embedder: AcousticEmbedder | None,
    cfg: TrainConfig,
    target_phonemes: tuple[str, ...],
    split: CorpusSplit | None = None,
    generator_config: GeneratorConfig | None = None,
    model: SpectrogramInpainter | None = None,
) -> tuple[SpectrogramInpainter, TrainReport]:
    """Adam training of the inpainter on windows around correctly produced
    target phonemes; the learning rate cosine-anneals from cfg.learning_rate
    to zero.  The embedder is frozen throughout; it feeds the attract and
    contrastive terms when their weights are non-zero."""
    torch.manual_seed(cfg.seed)
    if split is None:
        split = split_corpus(items, cfg.seed)
    by_id = items_by_id(items)
    train_items = [by_id[i] for i in split.train]
    val_items = [by_id[i] for i in split.validation]

    for symbol in target_phonemes:
        count = sum(
            len(it.segmentation.occurrences(symbol)) for it in train_items
        )
        if count < 2:
            raise PhonemeTooRare(
                f"target phoneme {symbol!r} occurs {count} time(s) in the train split"
            )

    if model is None:
        if generator_config is None:
            window_frames = pick_window_frames(train_items, target_phonemes)
            generator_config = GeneratorConfig(
                window_frames=window_frames,
                n_mels=train_items[0].mel().num_bins,
                inventory_size=len(inventory),
            )
        model = init_generator(generator_config, cfg.seed)
    gen_cfg = model.config

    train_set = build_window_examples(train_items, inventory, target_phonemes, gen_cfg.window_frames)
    val_set = build_window_examples(val_items, inventory, target_phonemes, gen_cfg.window_frames)
    if not train_set:
        raise PhonemeTooRare("no usable training windows")

    use_embedding = (cfg.attract_weight > 0 or cfg.contrast_weight > 0)
    if use_embedding and embedder is None:
        raise ValueError("attract/contrast weights need an embedder")
    bank = None
    frozen_before = None
    if use_embedding:
        embedder.eval()
        embedder.requires_grad_(False)
        frozen_before = {
            k: v.detach().clone() for k, v in embedder.state_dict().items()
        }
        bank = _RefBank(embedder, segments_by_phoneme(train_items, inventory))
        for symbol in target_phonemes:
            if symbol not in bank.by_phoneme:
                raise PhonemeTooRare(f"no reference segments for {symbol!r}")

    def stack(exs: list[WindowExample]):
        if not exs:
            return None
        return {
            "x": torch.from_numpy(np.stack([e.x_window for e in exs])),
            "mask": torch.from_numpy(np.stack([e.mask for e in exs])),
            "labels": torch.from_numpy(np.stack([e.labels for e in exs])),
            "bounds": [(e.mask_lo, e.mask_hi) for e in exs],
            "phonemes": [e.phoneme for e in exs],
        }

    train_all = stack(train_set)
    val_all = stack(val_set)

    rng = np.random.default_rng(cfg.seed)
    symbols = list(target_phonemes)

    def batch_loss(data, idx, batch_rng, collect=None):
        x = data["x"][idx]
        mask = data["mask"][idx]
        labels = data["labels"][idx]
        bounds = [data["bounds"][i] for i in idx]
        phonemes = [data["phonemes"][i] for i in idx]
        y = model(x * mask.unsqueeze(2), labels)
        masked_term, context_term = two_region_l1(y, x, mask)
        loss = (cfg.masked_weight * masked_term + cfg.context_weight * context_term).mean()
        if collect is not None:
            collect["masked_l1"].append(float(masked_term.mean().item()))
        if use_embedding and cfg.attract_weight > 0:
            ref_idx = np.stack([bank.sample(batch_rng, p, cfg.n_refs) for p in phonemes])
            attract = _batch_embedding_losses(embedder, y, bounds, bank.unit, ref_idx)
            loss = loss + cfg.attract_weight * attract
        if use_embedding and cfg.contrast_weight > 0:
            q_symbols = []
            for p in phonemes:
                options = [s for s in symbols if s != p and s in bank.by_phoneme]
                q_symbols.append(options[batch_rng.integers(len(options))])
            labels_q = labels.clone()
            for b, (lo, hi) in enumerate(bounds):
                labels_q[b, lo:hi] = inventory.index(q_symbols[b])
            y_q = model(x * mask.unsqueeze(2), labels_q)
            ref_idx_q = np.stack(
                [bank.sample(batch_rng, q, cfg.n_refs) for q in q_symbols]
            )
            contrast = _batch_embedding_losses(embedder, y_q, bounds, bank.unit, ref_idx_q)
            loss = loss + cfg.contrast_weight * contrast
        return loss

    # initial rate with cosine annealing to zero, same as the Siamese loop
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=cfg.epochs)
    report = TrainReport(extra={"train_masked_l1": [], "window_frames": gen_cfg.window_frames})
    best_state = copy.deepcopy(model.state_dict())
    best_loss = float("inf")
    stale = 0
    n = len(train_set)
    batch = min(cfg.batch_size, n)
    steps_per_epoch = max(1, n // batch)
    val_rng_seed = cfg.seed + 104729

    first_step_recorded = False
    for epoch in range(cfg.epochs):
        model.train()
        order = rng.permutation(n)
        epoch_losses = []
        collect = {"masked_l1": []}
        for s in range(steps_per_epoch):
            idx = order[s * batch : (s + 1) * batch]
            if idx.size == 0:
                continue
            batch_rng = np.random.default_rng(rng.integers(2**63))
            loss = batch_loss(train_all, idx, batch_rng, collect)
            if not first_step_recorded:
                report.extra["first_step"] = {
                    "loss": float(loss.item()),
                    "entries": [
                        [train_set[i].item_id, train_set[i].segment_index] for i in idx
                    ],
                }
                first_step_recorded = True
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_losses.append(float(loss.item()))
        scheduler.step()
        report.train_losses.append(float(np.mean(epoch_losses)))
        report.extra["train_masked_l1"].append(float(np.mean(collect["masked_l1"])))

        model.eval()
        if val_all is not None:
            with torch.no_grad():
                val_loss = float(batch_loss(
                    val_all, np.arange(len(val_set)),
                    np.random.default_rng(val_rng_seed),
                ).item())
        else:
            val_loss = report.train_losses[-1]
        report.val_losses.append(val_loss)
        if val_loss < best_loss:
            best_loss = val_loss
            best_state = copy.deepcopy(model.state_dict())
            report.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    if report.best_epoch >= 0:
        model.load_state_dict(best_state)
    model.eval()

    if frozen_before is not None:
        after = embedder.state_dict()
        for key, tensor in frozen_before.items():
            if not torch.equal(tensor, after[key]):
                raise RuntimeError("frozen embedder parameters changed during training")
    return model, report
