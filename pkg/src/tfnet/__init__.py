"""Interpretable time-frequency convolutional networks for 1D fault signals.

The package couples a constrained, kernel-function-parameterized
convolutional layer (complex correlation + modulus) with a small 1D CNN,
trains it with hand-rolled backprop and Adam, and inspects what it learned
through the FIR frequency response of its first-layer kernels.
"""

from tfnet.kernels import KernelFamily, KernelGrid, KernelParams
from tfnet.tfconv import TFconvLayer, reference_tft
from tfnet.nn import Model, assemble_model, build_backbone
from tfnet.training import TrainConfig, TrainHistory, evaluate, train
from tfnet.data import Dataset, SynthSpec, split, synth_generate, synthbearing5, window_signal
from tfnet.interpret import (
    BandReport,
    FrequencyResponse,
    band_coverage,
    channel_frequency_response,
    dataset_spectrum,
    export_representations,
    overall_frequency_response,
    separability_ratio,
)
from tfnet.checkpoint import load_model, save_model

__version__ = "0.1.0"

__all__ = [
    "BandReport",
    "Dataset",
    "FrequencyResponse",
    "KernelFamily",
    "KernelGrid",
    "KernelParams",
    "Model",
    "SynthSpec",
    "TFconvLayer",
    "TrainConfig",
    "TrainHistory",
    "assemble_model",
    "band_coverage",
    "build_backbone",
    "channel_frequency_response",
    "dataset_spectrum",
    "evaluate",
    "export_representations",
    "load_model",
    "overall_frequency_response",
    "reference_tft",
    "save_model",
    "separability_ratio",
    "split",
    "synth_generate",
    "synthbearing5",
    "train",
    "window_signal",
]
