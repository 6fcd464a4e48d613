"""Distributed preprocessing for high-volume bird acoustic recordings."""

from .audio import (AudioClip, ChunkId, band_reject, downsample, highpass,
                    read_wav, split, to_mono, write_wav)
from .corpus import SynthSpec, gen_corpus
from .detect import (DecisionTree, SilenceConfig, classify, detect_silence,
                     load_rules, save_rules, train_tree)
from .enhance import EnhanceConfig, estimate_noise_psd, mmse_stsa
from .pipeline import (ChunkOutcome, PipelineConfig, preprocess_front,
                       process_chunk, run_sequential)
from .spectral import (BandRange, Spectrogram, band_features,
                       cicada_band_estimate, snr_index, stft, welch_psd)

__all__ = [
    "AudioClip", "ChunkId", "read_wav", "write_wav", "split", "to_mono",
    "downsample", "highpass", "band_reject",
    "SynthSpec", "gen_corpus",
    "Spectrogram", "BandRange", "stft", "welch_psd", "band_features",
    "snr_index", "cicada_band_estimate",
    "EnhanceConfig", "estimate_noise_psd", "mmse_stsa",
    "DecisionTree", "SilenceConfig", "train_tree", "classify",
    "detect_silence", "save_rules", "load_rules",
    "PipelineConfig", "ChunkOutcome", "preprocess_front", "process_chunk",
    "run_sequential",
]

__version__ = "0.1.0"
