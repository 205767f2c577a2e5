"""Frequency-domain interpretability: filter responses and band coverage.

The first layer of a model is read as a bank of FIR filters.  Each
channel's frequency response (C-FR) is the FFT magnitude of its
zero-padded kernel on the non-negative half axis; the overall response
(O-FR) is the channel mean.  Band coverage scores the O-FR against
declared information bands: a band is hit when a local maximum at least
1.5x the O-FR median falls inside it.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from tfnet.nn import Conv1d, Flatten, Model
from tfnet.tfconv import TFconvLayer
from tfnet.training import standardize


@dataclass(frozen=True)
class FrequencyResponse:
    """Per-channel and averaged filter magnitudes on [0, 0.5]."""

    freqs: np.ndarray  # (n_freqs,)
    cfr: np.ndarray    # (n_channels, n_freqs)
    ofr: np.ndarray    # (n_freqs,)


def _layer_kernels(layer) -> np.ndarray:
    """Kernel bank (C, K) of a first-layer filter; complex for TFconv."""
    if isinstance(layer, TFconvLayer):
        return layer.kernels()
    if isinstance(layer, Conv1d):
        # input-channel-summed kernels; first layers have one input anyway
        return layer.weight.sum(axis=1)
    if isinstance(layer, np.ndarray):
        if layer.ndim != 2:
            raise ValueError(f"kernel bank must be 2D (channels, taps), got {layer.shape}")
        return layer
    raise TypeError(f"cannot read kernels from {type(layer).__name__}")


def channel_frequency_response(layer, n_fft: int = 1024) -> FrequencyResponse:
    """FFT magnitude of each channel's zero-padded kernel.

    The two half-spectra are folded by pointwise maximum, so the result
    is invariant under kernel conjugation and real kernels are unchanged.
    """
    kernels = _layer_kernels(layer)
    C, K = kernels.shape
    if n_fft < K:
        raise ValueError(f"n_fft={n_fft} shorter than kernel length {K}")
    mag = np.abs(np.fft.fft(kernels, n_fft, axis=1))
    half = n_fft // 2 + 1
    mirror = mag[:, (-np.arange(half)) % n_fft]
    cfr = np.maximum(mag[:, :half], mirror)
    freqs = np.arange(half) / n_fft
    return FrequencyResponse(freqs=freqs, cfr=cfr, ofr=overall_frequency_response(cfr))


def overall_frequency_response(cfr: np.ndarray) -> np.ndarray:
    """Channel mean of the C-FR matrix."""
    cfr = np.asarray(cfr)
    if cfr.ndim != 2 or cfr.shape[0] < 1:
        raise ValueError(f"cfr must be (n_channels >= 1, n_freqs), got {cfr.shape}")
    return cfr.mean(axis=0)


def model_frequency_response(model: Model, n_fft: int = 1024) -> FrequencyResponse:
    """Frequency response of the model's first filtering layer."""
    return channel_frequency_response(model.first_filter_layer(), n_fft)


def spectrum_freqs(length: int) -> np.ndarray:
    """Normalized frequency axis matching ``dataset_spectrum`` output."""
    return np.arange(length // 2 + 1) / length


def dataset_spectrum(dataset) -> np.ndarray:
    """Mean magnitude spectrum of per-sample standardized signals.

    Accepts a Dataset or a raw (N, L) array; returns the non-negative
    half spectrum (length L//2 + 1).
    """
    signals = dataset.signals if hasattr(dataset, "signals") else np.asarray(dataset)
    signals = np.atleast_2d(np.asarray(signals, dtype=np.float64))
    if signals.ndim == 3:
        signals = signals[:, 0, :]
    if signals.shape[0] == 0:
        raise ValueError("cannot take the spectrum of an empty dataset")
    z = standardize(signals)
    return np.abs(np.fft.rfft(z, axis=1)).mean(axis=0)


@dataclass(frozen=True)
class BandPeak:
    band: tuple[float, float]
    peak_frequency: float
    peak_magnitude: float
    hit: bool


@dataclass(frozen=True)
class BandReport:
    bands: tuple[BandPeak, ...]
    ofr_median: float
    threshold_factor: float = 1.5

    @property
    def threshold(self) -> float:
        return self.threshold_factor * self.ofr_median

    @property
    def n_hits(self) -> int:
        return sum(1 for b in self.bands if b.hit)


def _local_maxima(values: np.ndarray) -> np.ndarray:
    """Indices of plateau-tolerant local maxima, endpoints included."""
    v = np.asarray(values)
    if v.size == 1:
        return np.array([0])
    ge_left = np.empty(v.size, dtype=bool)
    ge_right = np.empty(v.size, dtype=bool)
    ge_left[0] = True
    ge_left[1:] = v[1:] >= v[:-1]
    ge_right[-1] = True
    ge_right[:-1] = v[:-1] >= v[1:]
    return np.flatnonzero(ge_left & ge_right)


def band_coverage(ofr, freqs, bands, threshold_factor: float = 1.5) -> BandReport:
    """Score the O-FR against information bands.

    A band is hit when some local maximum inside it reaches
    ``threshold_factor`` times the O-FR median (and is positive, so a
    flat zero response never scores).
    """
    ofr = np.asarray(ofr, dtype=np.float64)
    freqs = np.asarray(freqs, dtype=np.float64)
    if ofr.shape != freqs.shape or ofr.ndim != 1 or ofr.size == 0:
        raise ValueError("ofr and freqs must be equal-length non-empty 1D arrays")
    if threshold_factor <= 0:
        raise ValueError("threshold_factor must be positive")
    median = float(np.median(ofr))
    threshold = threshold_factor * median
    maxima = _local_maxima(ofr)
    results = []
    for band in bands:
        lo, hi = (float(v) for v in band)
        if not (0.0 <= lo < hi <= 0.5):
            raise ValueError(f"band [{lo}, {hi}] is not a subinterval of [0, 0.5]")
        in_band = np.flatnonzero((freqs >= lo) & (freqs <= hi))
        if in_band.size == 0:
            results.append(BandPeak((lo, hi), (lo + hi) / 2, 0.0, False))
            continue
        band_max = maxima[np.isin(maxima, in_band)]
        hit = bool(
            band_max.size
            and np.any((ofr[band_max] >= threshold) & (ofr[band_max] > 0.0))
        )
        peak_pool = band_max if band_max.size else in_band
        k = peak_pool[np.argmax(ofr[peak_pool])]
        results.append(BandPeak((lo, hi), float(freqs[k]), float(ofr[k]), hit))
    return BandReport(tuple(results), ofr_median=median, threshold_factor=threshold_factor)


def export_representations(model: Model, signals, batch_size: int = 256,
                           labels=None, csv_path=None) -> np.ndarray:
    """Inference-mode activations at the first Flatten layer, (N, features).

    With ``csv_path`` (requires ``labels``) also writes a
    ``label,f1..fD`` CSV.
    """
    x = np.asarray(signals)
    if x.ndim == 2:
        x = x[:, None, :]
    reps = []
    for start in range(0, x.shape[0], batch_size):
        xb = standardize(x[start : start + batch_size], dtype=model.dtype)
        _, captured = model.forward_capture(xb, Flatten, training=False)
        reps.append(captured)
    reps = np.concatenate(reps, axis=0)
    if csv_path is not None:
        if labels is None:
            raise ValueError("csv export needs labels")
        write_representations_csv(csv_path, reps, labels)
    return reps


def write_representations_csv(path, reps: np.ndarray, labels) -> None:
    reps = np.asarray(reps)
    labels = np.asarray(labels)
    if reps.shape[0] != labels.shape[0]:
        raise ValueError("representations and labels disagree on sample count")
    header = "label," + ",".join(f"f{i + 1}" for i in range(reps.shape[1]))
    with Path(path).open("w") as fh:
        fh.write(header + "\n")
        for lab, row in zip(labels, reps):
            fh.write(str(int(lab)) + "," + ",".join(repr(float(v)) for v in row) + "\n")


def separability_ratio(reps: np.ndarray, labels) -> float:
    """Mean inter-class centroid distance over mean intra-class spread."""
    reps = np.asarray(reps, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("separability needs at least two classes")
    centroids = np.stack([reps[labels == c].mean(axis=0) for c in classes])
    spreads = [
        float(np.linalg.norm(reps[labels == c] - centroids[i], axis=1).mean())
        for i, c in enumerate(classes)
    ]
    inter = [
        float(np.linalg.norm(centroids[i] - centroids[j]))
        for i in range(classes.size)
        for j in range(i + 1, classes.size)
    ]
    intra = float(np.mean(spreads))
    if intra == 0.0:
        return float("inf")
    return float(np.mean(inter)) / intra


def write_ofr_csv(path, freqs, ofr) -> None:
    with Path(path).open("w") as fh:
        fh.write("freq,ofr\n")
        for f, v in zip(freqs, ofr):
            fh.write(f"{repr(float(f))},{repr(float(v))}\n")


def write_cfr_csv(path, freqs, cfr) -> None:
    with Path(path).open("w") as fh:
        fh.write("channel,freq,magnitude\n")
        for c in range(cfr.shape[0]):
            for f, v in zip(freqs, cfr[c]):
                fh.write(f"{c},{repr(float(f))},{repr(float(v))}\n")


def write_band_report(path, report: BandReport) -> None:
    """Plain-text manifest of a band coverage report."""
    lines = [
        f"threshold_factor: {report.threshold_factor}",
        f"ofr_median: {repr(report.ofr_median)}",
        f"threshold: {repr(report.threshold)}",
        f"hits: {report.n_hits}/{len(report.bands)}",
    ]
    for b in report.bands:
        lines.append(
            f"band [{b.band[0]}, {b.band[1]}]: peak_freq={repr(b.peak_frequency)} "
            f"peak_magnitude={repr(b.peak_magnitude)} hit={'yes' if b.hit else 'no'}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
