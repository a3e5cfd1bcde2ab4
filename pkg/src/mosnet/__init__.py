"""Frame-wise MOS prediction, listener-agreement analysis and evaluation tools."""

__version__ = "0.1.0"

from .dsp import Spectrogram, Waveform, load_waveform, resample, stft_magnitude
from .estimators import MOSNetRegressor, SimilarityClassifier, SpectrogramExtractor
from .metrics import mse, pearson_lcc, spearman_srcc
from .models import ModelConfig, build_model, forward_mos, forward_similarity

__all__ = [
    "MOSNetRegressor", "ModelConfig", "SimilarityClassifier", "Spectrogram",
    "SpectrogramExtractor", "Waveform", "build_model", "forward_mos", "forward_similarity",
    "load_waveform", "mse", "pearson_lcc", "resample", "spearman_srcc", "stft_magnitude",
]
