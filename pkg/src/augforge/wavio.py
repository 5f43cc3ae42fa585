"""WAV read/write for mono PCM16 and float32 files."""
from __future__ import annotations

import os
import warnings

import numpy as np
from scipy.io import wavfile

from .audio import AudioBuffer
from .errors import InvalidArgument

PCM16 = "PCM_16"
FLOAT32 = "FLOAT"


def _to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        return data.astype(np.float64) / 2147483648.0
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if np.issubdtype(data.dtype, np.floating):
        return data.astype(np.float64)
    raise InvalidArgument(f"unsupported WAV sample type {data.dtype}")


def read_wav(path) -> AudioBuffer:
    """Read a WAV file as mono float samples; channels are averaged."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", wavfile.WavFileWarning)
        rate, data = wavfile.read(os.fspath(path))
    x = _to_float(data)
    if x.ndim == 2:
        x = x.mean(axis=1)
    return AudioBuffer(x, rate)


def probe_wav(path) -> tuple[int, int]:
    """(n_frames, sample_rate) without decoding the sample data."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", wavfile.WavFileWarning)
        rate, data = wavfile.read(os.fspath(path), mmap=True)
    n = int(data.shape[0])
    del data
    return n, int(rate)


def wav_duration(path) -> float:
    n, rate = probe_wav(path)
    return n / rate


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    # Inverse of the 1/32768 read scaling, so PCM16 round trips are exact.
    return np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")


def write_wav(path, buf: AudioBuffer, subtype: str = PCM16) -> None:
    if subtype == PCM16:
        data = to_pcm16(buf.samples)
    elif subtype == FLOAT32:
        data = buf.samples.astype("<f4")
    else:
        raise InvalidArgument(f"unknown WAV subtype {subtype!r}")
    wavfile.write(os.fspath(path), buf.sample_rate_hz, data)
