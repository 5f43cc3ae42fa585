"""Core DSP kernels: buffers, resampling, level arithmetic, noise mixing and
room-impulse-response convolution.

All functions are pure. Anything random takes an explicit
``numpy.random.Generator``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy import signal

from .errors import InvalidArgument, SilentNoiseError, SilentSignalError

CANONICAL_RATE = 16000
NARROWBAND_RATE = 8000
PEAK_LIMIT = 0.99
# Direct convolution below this many taps, FFT at or above.
FFT_CONV_MIN_TAPS = 128


def _frozen_array(samples) -> np.ndarray:
    arr = np.array(samples, dtype=np.float64, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Mono audio with its sample rate. Samples are stored read-only as float64."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        if int(self.sample_rate_hz) <= 0:
            raise InvalidArgument(f"sample rate must be positive, got {self.sample_rate_hz}")
        arr = _frozen_array(self.samples)
        if not np.all(np.isfinite(arr)):
            raise InvalidArgument("audio contains NaN or Inf samples")
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_secs(self) -> float:
        return len(self) / self.sample_rate_hz

    def with_samples(self, samples) -> "AudioBuffer":
        return AudioBuffer(samples, self.sample_rate_hz)


@dataclass(frozen=True, eq=False)
class RirBuffer:
    taps: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        if int(self.sample_rate_hz) <= 0:
            raise InvalidArgument(f"sample rate must be positive, got {self.sample_rate_hz}")
        taps = _frozen_array(self.taps)
        if taps.size == 0:
            raise InvalidArgument("RIR has no taps")
        if not np.all(np.isfinite(taps)):
            raise InvalidArgument("RIR contains NaN or Inf taps")
        if not np.any(taps):
            raise InvalidArgument("RIR is all zeros")
        object.__setattr__(self, "taps", taps)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return self.taps.shape[0]

    def resampled(self, target_rate_hz: int) -> "RirBuffer":
        if target_rate_hz == self.sample_rate_hz:
            return self
        out = resample(AudioBuffer(self.taps, self.sample_rate_hz), target_rate_hz)
        return RirBuffer(out.samples, target_rate_hz)


# -- resampling --------------------------------------------------------------

# Kaiser design targets. The passband edge sits at 84% of the lower Nyquist
# and the stopband starts exactly at it.
_STOPBAND_DB = 80.0
_PASSBAND_FRACTION = 0.84


def _kaiser_beta(atten_db: float) -> float:
    if atten_db > 50:
        return 0.1102 * (atten_db - 8.7)
    if atten_db >= 21:
        return 0.5842 * (atten_db - 21) ** 0.4 + 0.07886 * (atten_db - 21)
    return 0.0


@lru_cache(maxsize=64)
def lowpass_taps(up: int, down: int) -> np.ndarray:
    """Kaiser-windowed sinc anti-aliasing filter at the ``up``-times rate.

    Unit DC gain; ``scipy.signal.resample_poly`` applies the factor ``up``.
    """
    rate = max(up, down)
    stop = 1.0 / rate  # lower Nyquist relative to the upsampled Nyquist
    width = stop * (1.0 - _PASSBAND_FRACTION)
    cutoff = stop - width / 2
    # Kaiser's order estimate, width given as a fraction of pi.
    numtaps = int(math.ceil((_STOPBAND_DB - 7.95) / (2.285 * math.pi * width))) + 1
    numtaps |= 1  # odd length keeps the filter linear-phase with integer delay
    n = np.arange(numtaps) - (numtaps - 1) / 2
    h = cutoff * np.sinc(cutoff * n) * np.kaiser(numtaps, _kaiser_beta(_STOPBAND_DB))
    h /= h.sum()
    h.setflags(write=False)
    return h


def resample(buf: AudioBuffer, target_rate_hz: int) -> AudioBuffer:
    """Band-limited rational resampling via a polyphase FIR filter."""
    target_rate_hz = int(target_rate_hz)
    if target_rate_hz <= 0:
        raise InvalidArgument(f"target rate must be positive, got {target_rate_hz}")
    if target_rate_hz == buf.sample_rate_hz:
        return buf
    g = math.gcd(target_rate_hz, buf.sample_rate_hz)
    up, down = target_rate_hz // g, buf.sample_rate_hz // g
    if len(buf) == 0:
        return AudioBuffer(np.zeros(0), target_rate_hz)
    out = signal.resample_poly(buf.samples, up, down, window=np.array(lowpass_taps(up, down)))
    return AudioBuffer(out, target_rate_hz)


def narrowband_simulate(buf: AudioBuffer) -> AudioBuffer:
    """16 kHz -> 8 kHz -> 16 kHz round trip, removing everything above 4 kHz."""
    if buf.sample_rate_hz != CANONICAL_RATE:
        raise InvalidArgument(
            f"narrowband simulation expects {CANONICAL_RATE} Hz input, got {buf.sample_rate_hz}"
        )
    out = resample(resample(buf, NARROWBAND_RATE), CANONICAL_RATE)
    # Round-trip length can differ by a sample; keep the input length.
    return buf.with_samples(_fit_length(out.samples, len(buf)))


def _fit_length(x: np.ndarray, n: int) -> np.ndarray:
    if len(x) >= n:
        return x[:n]
    return np.concatenate([x, np.zeros(n - len(x))])


# -- levels ------------------------------------------------------------------

def rms(buf) -> float:
    x = buf.samples if isinstance(buf, AudioBuffer) else np.asarray(buf, dtype=np.float64)
    if x.size == 0:
        raise InvalidArgument("RMS of an empty buffer is undefined")
    return float(np.sqrt(np.mean(np.square(x))))


def snr_gain(signal_rms: float, noise_rms: float, snr_db: float) -> float:
    """Gain to apply to noise so that signal/noise RMS ratio equals ``snr_db``."""
    if signal_rms <= 0:
        raise SilentSignalError("signal RMS is zero; SNR is undefined")
    if noise_rms <= 0:
        raise SilentNoiseError("noise RMS is zero; cannot scale to a target SNR")
    return (signal_rms / noise_rms) * 10.0 ** (-snr_db / 20.0)


def measured_snr_db(speech, noise) -> float:
    return 20.0 * math.log10(rms(speech) / rms(noise))


# -- noise mixing ------------------------------------------------------------

class MixMode(str, Enum):
    FOREGROUND = "foreground"
    BACKGROUND = "background"


@dataclass(frozen=True)
class MixResult:
    """Mixture plus the scaled noise component, before peak normalization."""

    audio: AudioBuffer
    noise_track: np.ndarray
    gain: float
    peak_scale: float
    start: int


def _position_index(position: float, n: int) -> int:
    # Maps a uniform draw in [0, 1) onto {0, ..., n - 1}.
    return min(int(position * n), n - 1)


def mix_noise_detailed(
    speech: AudioBuffer,
    noise: AudioBuffer,
    snr_db: float,
    mode: MixMode | str = MixMode.BACKGROUND,
    rng: np.random.Generator | None = None,
    position: float | None = None,
) -> MixResult:
    """Add ``noise`` to ``speech`` at ``snr_db``.

    Placement comes from ``position`` (a number in [0, 1)) if given,
    otherwise from one uniform draw on ``rng``.

    Background mode tiles the noise from a start offset to cover the whole
    utterance. Foreground mode inserts one segment of length
    ``min(len(noise), len(speech))``; when the noise is longer than the
    speech the position selects the crop inside the noise instead.
    """
    mode = MixMode(mode)
    if speech.sample_rate_hz != noise.sample_rate_hz:
        raise InvalidArgument(
            f"sample rate mismatch: speech {speech.sample_rate_hz} Hz, noise {noise.sample_rate_hz} Hz"
        )
    if len(noise) == 0:
        raise InvalidArgument("noise buffer is empty")
    n = len(speech)
    if n == 0 or not np.any(speech.samples):
        raise SilentSignalError("speech is silent; SNR is undefined")
    if position is None:
        if rng is None:
            raise InvalidArgument("either rng or position is required")
        position = float(rng.random())
    if not 0.0 <= position < 1.0:
        raise InvalidArgument(f"position must lie in [0, 1), got {position}")

    x = speech.samples
    track = np.zeros(n)
    if mode is MixMode.BACKGROUND:
        start = _position_index(position, len(noise))
        seg = np.take(noise.samples, (start + np.arange(n)) % len(noise))
        gain = snr_gain(rms(x), rms(seg), snr_db)
        track = gain * seg
    else:
        m = min(len(noise), n)
        start = _position_index(position, abs(len(noise) - n) + 1)
        if len(noise) >= n:
            seg, lo = noise.samples[start:start + m], 0
        else:
            seg, lo = noise.samples, start
        ref = x[lo:lo + m]
        # A digitally silent overlap falls back to the whole-utterance level.
        ref_rms = rms(ref) if np.any(ref) else rms(x)
        gain = snr_gain(ref_rms, rms(seg), snr_db)
        track[lo:lo + m] = gain * seg

    if mode is MixMode.FOREGROUND:
        mixed = x.copy()
        mixed[lo:lo + m] += track[lo:lo + m]
    else:
        mixed = x + track
    peak = float(np.max(np.abs(mixed)))
    scale = 1.0
    if peak > PEAK_LIMIT:
        scale = PEAK_LIMIT / peak
        mixed = mixed * scale
    return MixResult(speech.with_samples(mixed), track, gain, scale, start)


def mix_noise(speech, noise, snr_db, mode=MixMode.BACKGROUND, rng=None, position=None) -> AudioBuffer:
    return mix_noise_detailed(speech, noise, snr_db, mode, rng, position).audio


# -- reverberation -----------------------------------------------------------

def convolve_rir(speech: AudioBuffer, rir: RirBuffer) -> AudioBuffer:
    """Reverberate ``speech``.

    The full convolution is shifted so the strongest tap lands on lag 0,
    truncated to the input length and rescaled to the input RMS.
    """
    if speech.sample_rate_hz != rir.sample_rate_hz:
        raise InvalidArgument(
            f"sample rate mismatch: speech {speech.sample_rate_hz} Hz, RIR {rir.sample_rate_hz} Hz"
        )
    if not np.any(rir.taps):
        raise InvalidArgument("RIR is all zeros")
    n = len(speech)
    if n == 0:
        return speech
    if len(rir) >= FFT_CONV_MIN_TAPS:
        full = signal.fftconvolve(speech.samples, rir.taps, mode="full")
    else:
        full = np.convolve(speech.samples, rir.taps, mode="full")
    direct = int(np.argmax(np.abs(rir.taps)))
    out = full[direct:direct + n]
    in_rms = rms(speech.samples)
    out_rms = rms(out)
    if in_rms == 0 or out_rms == 0:
        return speech.with_samples(np.zeros(n))
    return speech.with_samples(out * (in_rms / out_rms))
