"""Speech correction by phoneme-conditioned mel-spectrogram inpainting.

Train on correct speech only, mask the mispronounced phoneme's region, let a
conditioned generator repaint it as the desired phoneme, splice it back, and
re-vocode; everything outside the repainted window keeps the speaker's
original spectral content bit for bit.
"""
from .audio_dsp import (
    CANONICAL_RATE,
    MelConfig,
    MelSpectrogram,
    Waveform,
    crossfade_splice,
    griffin_lim,
    load_wav,
    mel_spectrogram,
    resample,
    save_wav,
)
from .acoustic_embedding import (
    AcousticEmbedder,
    SiameseConfig,
    cosine_similarity,
    embed_acoustic,
    embed_many,
    init_siamese,
)
from .baseline_concat import DonorQuery, segment_waveform, select_donor, smooth_concat
from .checkpoint import checkpoint_kind, load_generator, load_siamese, save_checkpoint
from .corpus import (
    CorpusItem,
    CorpusSplit,
    default_inventory,
    ingest_corpus,
    sample_phoneme_instances,
    split_corpus,
    synth_corpus,
)
from .correction_pipeline import (
    CorrectionRequest,
    CorrectionResult,
    VocoderAdapter,
    correct_utterance,
    correct_utterance_detailed,
    export_vocoder_finetune_set,
    read_mel_file,
    splice_back,
    vocode,
    write_mel_file,
)
from .errors import *  # noqa: F401,F403 -- the error taxonomy is the public surface
from .evaluation import (
    EvalReport,
    build_centroids,
    export_listening_manifest,
    phoneme_identity_score,
    run_minimal_pair_experiment,
    spectral_metrics,
)
from .generator import GeneratorConfig, SpectrogramInpainter, generate, init_generator
from .problem_model import (
    FramePhonemeSequence,
    MaskVector,
    PhonemeInventory,
    PhonemeSegmentation,
    WindowSpec,
    apply_mask,
    build_mask,
    choose_window_length,
    compute_context_window,
    frame_phoneme_labels,
)
from .training import (
    TrainConfig,
    TrainReport,
    contrastive_generation_loss,
    embedding_attract_loss,
    reconstruction_loss,
    train_generator,
    train_siamese,
)

__version__ = "0.1.0"
