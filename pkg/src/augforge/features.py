"""Log-mel front-end, SpecCutout masking and the ``NRFT0001`` feature file."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.signal import get_window

from .audio import CANONICAL_RATE, AudioBuffer, resample
from .corpus import load_entry_audio, resolve_path, write_manifest
from .errors import ConfigurationError, InvalidArgument, TooShortError
from .parallel import ordered_map
from .rng import keyed_rng

MAGIC = b"NRFT0001"


@dataclass(frozen=True)
class FeatureConfig:
    n_mels: int = 64
    window_ms: float = 20.0
    hop_ms: float = 10.0
    fft_size: int = 512
    window_fn: str = "hann"
    log_floor: float = 1e-5
    mel_fmin_hz: float = 0.0
    mel_fmax_hz: float | None = None  # None means Nyquist
    sample_rate_hz: int = CANONICAL_RATE
    normalize: bool = False

    def __post_init__(self):
        if self.n_mels < 1:
            raise ConfigurationError("n_mels must be at least 1")
        if self.fft_size < self.window_samples:
            raise ConfigurationError("fft_size must cover the analysis window")
        if self.hop_samples > self.window_samples or self.hop_samples < 1:
            raise ConfigurationError("hop must be positive and no longer than the window")
        if not self.log_floor > 0:
            raise ConfigurationError("log_floor must be positive")
        if not 0 <= self.mel_fmin_hz < self.fmax_hz <= self.sample_rate_hz / 2:
            raise ConfigurationError("need 0 <= fmin < fmax <= Nyquist")

    @property
    def window_samples(self) -> int:
        return int(round(self.window_ms * self.sample_rate_hz / 1000))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop_ms * self.sample_rate_hz / 1000))

    @property
    def fmax_hz(self) -> float:
        return self.sample_rate_hz / 2 if self.mel_fmax_hz is None else self.mel_fmax_hz

    @property
    def frame_rate_hz(self) -> float:
        return self.sample_rate_hz / self.hop_samples


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """Frames x mel bins of natural-log power, float32."""

    values: np.ndarray
    frame_rate_hz: float = 100.0

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float32, copy=True)
        if v.ndim != 2:
            raise InvalidArgument("spectrogram must be a 2-D matrix")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=16)
def _filterbank(n_mels, fft_size, sample_rate_hz, fmin, fmax) -> np.ndarray:
    bins = np.arange(fft_size // 2 + 1) * sample_rate_hz / fft_size
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    edges[0], edges[-1] = fmin, fmax  # undo mel round-trip error at the band edges
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins - lo) / (mid - lo)
    falling = (hi - bins) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    peaks = fb.max(axis=1)
    empty = np.flatnonzero(peaks <= 0)
    if empty.size:
        raise ConfigurationError(
            f"{n_mels} mel filters is too many for a {fft_size}-point FFT: "
            f"filter {int(empty[0])} covers no FFT bin")
    fb /= peaks[:, None]
    fb.setflags(write=False)
    return fb


def mel_filterbank(config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Triangular HTK-mel filters, shape ``(n_mels, fft_size // 2 + 1)``, each peaking at 1."""
    return _filterbank(config.n_mels, config.fft_size, config.sample_rate_hz,
                       float(config.mel_fmin_hz), float(config.fmax_hz))


def num_frames(n_samples: int, config: FeatureConfig = FeatureConfig()) -> int:
    if n_samples < config.window_samples:
        return 0
    return (n_samples - config.window_samples) // config.hop_samples + 1


def log_mel(buf: AudioBuffer, config: FeatureConfig = FeatureConfig()) -> Spectrogram:
    if buf.sample_rate_hz != config.sample_rate_hz:
        raise InvalidArgument(f"front-end expects {config.sample_rate_hz} Hz audio, got {buf.sample_rate_hz} Hz")
    win = config.window_samples
    n = num_frames(len(buf), config)
    if n == 0:
        raise TooShortError(f"need at least {win} samples for one frame, got {len(buf)}")
    frames = np.lib.stride_tricks.sliding_window_view(buf.samples, win)[::config.hop_samples][:n]
    window = get_window(config.window_fn, win, fftbins=True)
    power = np.abs(np.fft.rfft(frames * window, n=config.fft_size, axis=1)) ** 2
    mel = power @ mel_filterbank(config).T
    values = np.log(mel + config.log_floor)
    if config.normalize:
        values = (values - values.mean(axis=0)) / (values.std(axis=0) + 1e-5)
    return Spectrogram(values, config.frame_rate_hz)


# -- SpecCutout --------------------------------------------------------------

@dataclass(frozen=True)
class CutoutConfig:
    n_rects: int = 5
    max_freq_bins: int = 15
    max_time_frames: int = 25

    def __post_init__(self):
        if self.n_rects < 0:
            raise ConfigurationError("n_rects must be non-negative")
        if self.n_rects > 0 and (self.max_freq_bins < 1 or self.max_time_frames < 1):
            raise ConfigurationError("rectangle maxima must be at least 1")


def cutout_rects(shape, config: CutoutConfig, rng: np.random.Generator) -> list[tuple[int, int, int, int]]:
    """Rectangles as ``(t0, t1, f0, f1)`` half-open ranges, already clipped to ``shape``."""
    n_frames, n_bins = shape
    if n_frames == 0 or n_bins == 0:
        return []
    rects = []
    for _ in range(config.n_rects):
        height = int(rng.integers(1, config.max_freq_bins + 1))
        width = int(rng.integers(1, config.max_time_frames + 1))
        f0 = int(rng.integers(0, n_bins))
        t0 = int(rng.integers(0, n_frames))
        rects.append((t0, min(t0 + width, n_frames), f0, min(f0 + height, n_bins)))
    return rects


def spec_cutout(spec: Spectrogram, config: CutoutConfig, rng: np.random.Generator,
                fill_value: float = math.log(1e-5)) -> Spectrogram:
    v = np.array(spec.values, copy=True)
    for t0, t1, f0, f1 in cutout_rects(v.shape, config, rng):
        v[t0:t1, f0:f1] = fill_value
    return Spectrogram(v, spec.frame_rate_hz)


# -- feature files -----------------------------------------------------------

def write_features(path, spec: Spectrogram) -> None:
    n_frames, n_mels = spec.shape
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", n_frames, n_mels))
        f.write(np.ascontiguousarray(spec.values, dtype="<f4").tobytes())


def read_features(path, frame_rate_hz: float = 100.0) -> Spectrogram:
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != MAGIC:
        raise InvalidArgument(f"{path}: not an NRFT0001 feature file")
    n_frames, n_mels = struct.unpack("<II", data[8:16])
    expected = 16 + 4 * n_frames * n_mels
    if len(data) != expected:
        raise InvalidArgument(f"{path}: expected {expected} bytes, found {len(data)}")
    values = np.frombuffer(data, dtype="<f4", offset=16).reshape(n_frames, n_mels)
    return Spectrogram(values.astype(np.float32), frame_rate_hz)


# -- batch driver ------------------------------------------------------------

_WORKER = {}


def _init_worker(config, cutout, seed, out_dir, manifest_path):
    _WORKER.update(config=config, cutout=cutout, seed=seed, out_dir=out_dir, manifest_path=manifest_path)


def _featurize_one(job):
    index, entry = job
    w = _WORKER
    uid = entry.utterance_id
    try:
        buf = resample(load_entry_audio(entry, w["manifest_path"]), w["config"].sample_rate_hz)
        spec = log_mel(buf, w["config"])
        if w["cutout"] is not None:
            spec = spec_cutout(spec, w["cutout"], keyed_rng(w["seed"], "speccutout", uid),
                               fill_value=math.log(w["config"].log_floor))
        name = uid.replace("/", "_") + ".nrft"
        write_features(Path(w["out_dir"]) / name, spec)
    except Exception as exc:
        return index, None, {"index": index, "id": uid, "error": type(exc).__name__, "message": str(exc)}
    extra = dict(entry.extra)
    extra.update(id=uid, feature_filepath=name, n_frames=spec.shape[0])
    return index, entry.replace(extra=extra), None


def featurize_manifest(entries, out_dir, config: FeatureConfig = FeatureConfig(),
                       cutout: CutoutConfig | None = None, seed: int = 0, workers: int = 1,
                       manifest_path=None):
    """Write ``<id>.nrft`` per entry and ``manifest.jsonl`` listing them.

    Returns ``(entries, errors)``. Audio paths in the output manifest are
    made absolute so it stays usable from ``out_dir``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = ordered_map(_featurize_one, list(enumerate(entries)), workers, _init_worker,
                          (config, cutout, seed, str(out_dir), manifest_path))
    done = [r[1].replace(audio_filepath=str(resolve_path(r[1], manifest_path).resolve()))
            for r in results if r[1] is not None]
    errors = [r[2] for r in results if r[2] is not None]
    write_manifest(out_dir / "manifest.jsonl", done)
    return done, errors
