"""Synthetic fault-signal generation, file ingestion and dataset handling.

The synthetic generator produces labeled one-channel signals from a small
vocabulary of components (steady tones, amplitude-modulated tones, damped
impulse trains) plus Gaussian noise.  Each class recipe places its
discriminative energy inside declared information bands, which downstream
interpretability checks score against.

On disk a dataset is a directory: ``meta.json`` (manifest), ``samples.f64le``
(row-major little-endian float64) and ``labels.u32le``.  A flat CSV form is
also supported for interoperability.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from tfnet.seeding import derive_rng


@dataclass(frozen=True)
class Tone:
    """Constant-amplitude sinusoid with per-sample random phase."""

    freq: float
    amplitude: float = 1.0


@dataclass(frozen=True)
class AMTone:
    """Sinusoidal carrier with slow sinusoidal amplitude modulation."""

    carrier: float
    mod_freq: float
    amplitude: float = 1.0
    depth: float = 0.5


@dataclass(frozen=True)
class ImpulseTrain:
    """Periodic impulses convolved with a damped cosine resonance.

    Each sample draws a random integer start offset in [0, period), the
    train's initial phase.
    """

    period: int
    resonance: float
    damping: float
    amplitude: float = 3.0


@dataclass(frozen=True)
class ClassSpec:
    name: str
    components: tuple = ()


def _component_freqs(component):
    if isinstance(component, Tone):
        return [component.freq]
    if isinstance(component, AMTone):
        return [component.carrier]
    if isinstance(component, ImpulseTrain):
        return [component.resonance]
    raise TypeError(f"unknown component type {type(component).__name__}")


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a labeled synthetic dataset.

    Invariants: every component frequency lies in (0, 0.5); information
    bands are disjoint subintervals of [0, 0.5]; every tone/carrier/
    resonance frequency falls inside some declared band.
    """

    classes: tuple[ClassSpec, ...]
    information_bands: tuple[tuple[float, float], ...]
    samples_per_class: int = 200
    sample_length: int = 1024
    noise_sigma: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        if len(self.classes) == 0:
            raise ValueError("spec needs at least one class")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be >= 1")
        if self.sample_length < 16:
            raise ValueError("sample_length must be >= 16")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        bands = [tuple(float(v) for v in b) for b in self.information_bands]
        for lo, hi in bands:
            if not (0.0 <= lo < hi <= 0.5):
                raise ValueError(f"band [{lo}, {hi}] is not a subinterval of [0, 0.5]")
        for (lo1, hi1), (lo2, hi2) in zip(sorted(bands), sorted(bands)[1:]):
            if lo2 < hi1:
                raise ValueError("information bands must be disjoint")
        for cls in self.classes:
            for comp in cls.components:
                for f in _component_freqs(comp):
                    if not (0.0 < f < 0.5):
                        raise ValueError(
                            f"class {cls.name!r}: frequency {f} outside (0, 0.5)"
                        )
                    if bands and not any(lo <= f <= hi for lo, hi in bands):
                        raise ValueError(
                            f"class {cls.name!r}: frequency {f} lies in no information band"
                        )
                if isinstance(comp, ImpulseTrain):
                    if comp.period < 2 or comp.period >= self.sample_length:
                        raise ValueError(
                            f"class {cls.name!r}: impulse period {comp.period} out of range"
                        )

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def class_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.classes)


def synthbearing5(samples_per_class: int = 200) -> SynthSpec:
    """Default five-class bearing-like spec ("SynthBearing-5").

    Classes: a weak steady tone (healthy baseline), an amplitude-modulated
    tone, two damped impulse trains with distinct resonances, and a compound
    class carrying both resonances plus the tone.
    """
    return SynthSpec(
        classes=(
            ClassSpec("normal", (Tone(0.05, 0.5),)),
            ClassSpec("modulated", (AMTone(0.08, 0.004, 1.0),)),
            ClassSpec("impulse-fast", (ImpulseTrain(64, 0.18, 0.02, amplitude=4.5),)),
            ClassSpec("impulse-slow", (ImpulseTrain(100, 0.30, 0.02, amplitude=4.5),)),
            ClassSpec(
                "compound",
                (
                    ImpulseTrain(64, 0.18, 0.02, amplitude=1.2),
                    ImpulseTrain(100, 0.30, 0.02, amplitude=4.5),
                    Tone(0.08, 0.1),
                ),
            ),
        ),
        information_bands=((0.04, 0.06), (0.07, 0.09), (0.16, 0.20), (0.28, 0.32)),
        samples_per_class=samples_per_class,
        noise_sigma=1.0,
        name="SynthBearing-5",
    )


@dataclass
class Dataset:
    """Labeled sample matrix (count, 1, length) with a manifest dict."""

    samples: np.ndarray
    labels: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.samples.ndim == 2:
            self.samples = self.samples[:, None, :]
        if self.samples.ndim != 3 or self.samples.shape[1] != 1:
            raise ValueError(f"samples must be (count, 1, length), got {self.samples.shape}")
        if self.labels.shape != (self.samples.shape[0],):
            raise ValueError("labels length does not match sample count")

    @property
    def signals(self) -> np.ndarray:
        """(count, length) view without the channel axis."""
        return self.samples[:, 0, :]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def length(self) -> int:
        return self.samples.shape[2]

    @property
    def n_classes(self) -> int:
        names = self.meta.get("class_names")
        if names:
            return len(names)
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


def _render_component(component, n, rng):
    if isinstance(component, Tone):
        phase = rng.uniform(0.0, 2.0 * np.pi)
        return component.amplitude * np.sin(2.0 * np.pi * component.freq * n + phase)
    if isinstance(component, AMTone):
        phase_c = rng.uniform(0.0, 2.0 * np.pi)
        phase_m = rng.uniform(0.0, 2.0 * np.pi)
        envelope = 1.0 + component.depth * np.sin(2.0 * np.pi * component.mod_freq * n + phase_m)
        return component.amplitude * envelope * np.sin(2.0 * np.pi * component.carrier * n + phase_c)
    if isinstance(component, ImpulseTrain):
        L = n.size
        offset = int(rng.integers(0, component.period))
        comb = np.zeros(L)
        comb[offset :: component.period] = component.amplitude
        resonance = np.exp(-component.damping * n) * np.cos(2.0 * np.pi * component.resonance * n)
        return np.convolve(comb, resonance)[:L]
    raise TypeError(f"unknown component type {type(component).__name__}")


def synth_generate(spec: SynthSpec, seed: int = 0) -> Dataset:
    """Generate the labeled dataset described by ``spec``.

    Deterministic in (spec, seed): sample (c, i) draws from its own
    derived stream, so per-class counts can change without reshuffling
    other samples.
    """
    L = spec.sample_length
    n = np.arange(L, dtype=np.float64)
    count = spec.n_classes * spec.samples_per_class
    samples = np.empty((count, 1, L), dtype=np.float64)
    labels = np.empty(count, dtype=np.int64)
    row = 0
    for c, cls in enumerate(spec.classes):
        for i in range(spec.samples_per_class):
            rng = derive_rng(seed, "synth", c, i)
            x = np.zeros(L)
            for comp in cls.components:
                x += _render_component(comp, n, rng)
            if spec.noise_sigma > 0:
                x += rng.normal(0.0, spec.noise_sigma, L)
            samples[row, 0] = x
            labels[row] = c
            row += 1
    meta = {
        "name": spec.name,
        "class_names": list(spec.class_names),
        "sample_rate": 1.0,
        "information_bands": [list(b) for b in spec.information_bands],
        "seed": seed,
        "spec": _spec_manifest(spec),
    }
    return Dataset(samples, labels, meta)


def _spec_manifest(spec: SynthSpec) -> dict:
    return {
        "name": spec.name,
        "samples_per_class": spec.samples_per_class,
        "sample_length": spec.sample_length,
        "noise_sigma": spec.noise_sigma,
        "information_bands": [list(b) for b in spec.information_bands],
        "classes": [
            {
                "name": cls.name,
                "components": [
                    {"type": type(comp).__name__, **asdict(comp)} for comp in cls.components
                ],
            }
            for cls in spec.classes
        ],
    }


def window_signal(signal: np.ndarray, window: int, hop: int | None = None) -> np.ndarray:
    """Cut a 1D signal into (n_windows, window) frames; default hop = window."""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1:
        raise ValueError(f"expected a 1D signal, got shape {signal.shape}")
    if window < 1 or window > signal.size:
        raise ValueError(f"window {window} out of range for length {signal.size}")
    hop = window if hop is None else hop
    if hop < 1:
        raise ValueError("hop must be >= 1")
    frames = np.lib.stride_tricks.sliding_window_view(signal, window)[::hop]
    return np.ascontiguousarray(frames)


def split(dataset: Dataset, train_frac: float = 0.6, seed: int = 0):
    """Stratified train/test split; rounds per-class train counts to nearest.

    Every class keeps at least one sample on each side, so classes with
    fewer than two samples are rejected.
    """
    if not 0.0 < train_frac < 1.0:
        raise ValueError("train_frac must lie strictly between 0 and 1")
    labels = dataset.labels
    train_idx = []
    test_idx = []
    for c in range(dataset.n_classes):
        idx = np.flatnonzero(labels == c)
        if idx.size < 2:
            raise ValueError(f"class {c} has {idx.size} samples; need >= 2 to split")
        perm = idx[derive_rng(seed, "split", c).permutation(idx.size)]
        n_train = int(np.floor(train_frac * idx.size + 0.5))
        n_train = min(max(n_train, 1), idx.size - 1)
        train_idx.append(perm[:n_train])
        test_idx.append(perm[n_train:])
    train_idx = np.concatenate(train_idx)
    test_idx = np.concatenate(test_idx)

    def _subset(indices, role):
        meta = dict(dataset.meta)
        meta["split_role"] = role
        meta["split_seed"] = seed
        return Dataset(dataset.samples[indices].copy(), labels[indices].copy(), meta)

    return _subset(train_idx, "train"), _subset(test_idx, "test")


def save_dataset(dataset: Dataset, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    meta = dict(dataset.meta)
    meta["count"] = dataset.n_samples
    meta["length"] = dataset.length
    meta["format"] = {"samples": "samples.f64le", "labels": "labels.u32le", "version": 1}
    (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    (d / "samples.f64le").write_bytes(
        np.ascontiguousarray(dataset.samples, dtype="<f8").tobytes()
    )
    (d / "labels.u32le").write_bytes(dataset.labels.astype("<u4").tobytes())


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    meta_path = d / "meta.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"{meta_path} not found; not a dataset directory")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{meta_path}: invalid JSON manifest: {exc}") from exc
    count = int(meta["count"])
    length = int(meta["length"])
    raw = (d / "samples.f64le").read_bytes()
    expected = count * length * 8
    if len(raw) != expected:
        raise ValueError(
            f"{d / 'samples.f64le'}: expected {expected} bytes for "
            f"{count}x{length} float64, found {len(raw)}"
        )
    samples = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(count, 1, length)
    rawl = (d / "labels.u32le").read_bytes()
    if len(rawl) != count * 4:
        raise ValueError(f"{d / 'labels.u32le'}: expected {count * 4} bytes, found {len(rawl)}")
    labels = np.frombuffer(rawl, dtype="<u4").astype(np.int64)
    meta = {k: v for k, v in meta.items() if k not in ("count", "length", "format")}
    return Dataset(samples, labels, meta)


def dataset_to_csv(dataset: Dataset, path) -> None:
    """Flat CSV: header then one ``label,x0,...`` row per sample."""
    p = Path(path)
    L = dataset.length
    header = "label," + ",".join(f"x{i}" for i in range(L))
    with p.open("w") as fh:
        fh.write(header + "\n")
        for sig, lab in zip(dataset.signals, dataset.labels):
            fh.write(str(int(lab)) + "," + ",".join(repr(float(v)) for v in sig) + "\n")


def dataset_from_csv(path, meta: dict | None = None) -> Dataset:
    p = Path(path)
    labels = []
    rows = []
    with p.open() as fh:
        header = fh.readline()
        if not header.startswith("label,"):
            raise ValueError(f"{p}: missing 'label,...' header row")
        for ln, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            try:
                labels.append(int(fields[0]))
                rows.append([float(v) for v in fields[1:]])
            except ValueError as exc:
                raise ValueError(f"{p}:{ln}: cannot parse row: {exc}") from exc
    if not rows:
        raise ValueError(f"{p}: no data rows")
    lengths = {len(r) for r in rows}
    if len(lengths) != 1:
        raise ValueError(f"{p}: inconsistent row lengths {sorted(lengths)}")
    return Dataset(np.asarray(rows), np.asarray(labels), dict(meta or {}))


def load_signal_file(path) -> np.ndarray:
    """Read a raw 1D signal from .csv/.txt (one value per line or comma
    separated) or .f64le/.bin/.raw (little-endian float64)."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"signal file {p} not found")
    suffix = p.suffix.lower()
    if suffix in (".csv", ".txt"):
        try:
            values = np.loadtxt(p, delimiter=",", dtype=np.float64)
        except ValueError as exc:
            raise ValueError(f"{p}: cannot parse as numeric CSV: {exc}") from exc
        return np.atleast_1d(values.ravel().astype(np.float64))
    if suffix in (".f64le", ".bin", ".raw"):
        raw = p.read_bytes()
        if len(raw) % 8 != 0:
            raise ValueError(f"{p}: byte length {len(raw)} is not a multiple of 8")
        return np.frombuffer(raw, dtype="<f8").astype(np.float64)
    raise ValueError(f"{p}: unsupported signal format {suffix!r}")
