"""Speech-to-EGG reconstruction codec with dEGG-based F0 extraction.

The package trains a small convolutional encoder/quantizer/decoder to map
speech waveforms onto their electroglottography (EGG) counterparts using a
multi-scale log-mel loss plus a hybrid time-domain loss, then extracts F0
from reconstructed (or reference) EGG via dEGG peak picking. Evaluation
covers MAE, 50-cent RPA, 20% GPE, VDE, and waveform PPMCC.
"""

from .autodiff import Tensor
from .estimators import DeggF0Extractor, EggReconstructor
from .f0 import F0Track, PeakList, degg, extract_f0, frame_f0, peakdet, periods_to_f0
from .losses import (
    LossConfig,
    LossReport,
    cosine_distance,
    reconstruction_loss,
    spectral_loss,
    time_loss,
)
from .metrics import MetricReport, evaluate_run, ppmcc
from .model import Codebook, EggCodecModel, ModelConfig
from .signals import (
    PIPELINE_RATE,
    SignalBuffer,
    add_white_noise_snr,
    highpass_filter,
    load_wav,
    peak_normalize,
    resample,
    save_wav,
)
from .spectral import MelSpectrogram, log_mel, log_mel_backward, mel_filterbank, stft_mag
from .synth import SynthSpec, closure_instants, constant_spec, glide_spec, synth_corpus
from .training import AdamState, TrainConfig, adam_step, fit, make_batch

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "Codebook",
    "DeggF0Extractor",
    "EggCodecModel",
    "EggReconstructor",
    "F0Track",
    "LossConfig",
    "LossReport",
    "MelSpectrogram",
    "MetricReport",
    "ModelConfig",
    "PIPELINE_RATE",
    "PeakList",
    "SignalBuffer",
    "SynthSpec",
    "Tensor",
    "TrainConfig",
    "adam_step",
    "add_white_noise_snr",
    "closure_instants",
    "constant_spec",
    "cosine_distance",
    "degg",
    "evaluate_run",
    "extract_f0",
    "fit",
    "frame_f0",
    "glide_spec",
    "highpass_filter",
    "load_wav",
    "log_mel",
    "log_mel_backward",
    "make_batch",
    "mel_filterbank",
    "peak_normalize",
    "peakdet",
    "periods_to_f0",
    "ppmcc",
    "reconstruction_loss",
    "resample",
    "save_wav",
    "spectral_loss",
    "stft_mag",
    "synth_corpus",
    "time_loss",
]
