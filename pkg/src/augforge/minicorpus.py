"""Synthetic mini-corpus for smoke tests and demos.

Generates speech-like harmonic utterances with transcripts, four labelled
noise types standing in for recorded noise, and a few exponentially decaying
RIRs. Total audio stays under a minute.

    python -m augforge.minicorpus OUT_DIR [--seed 0]
"""
from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
from scipy import signal

from .audio import AudioBuffer
from .wavio import write_wav

RATE = 16000
WORDS = ("alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet")
NOISE_TYPES = ("babble", "music", "television", "background")


def speech_like(rng: np.random.Generator, secs: float) -> np.ndarray:
    """Voiced harmonics on a wandering pitch, gated into syllables."""
    n = int(secs * RATE)
    t = np.arange(n) / RATE
    f0 = rng.uniform(100, 220) * (1 + 0.1 * np.sin(2 * np.pi * rng.uniform(0.5, 2) * t))
    phase = 2 * np.pi * np.cumsum(f0) / RATE
    x = sum(np.sin(k * phase) / k for k in range(1, 12) if k * f0.max() < 3800)
    syllable = np.clip(np.sin(np.pi * rng.uniform(3, 5) * t + rng.uniform(0, np.pi)), 0, None) ** 2
    x = x * syllable
    return 0.3 * x / np.max(np.abs(x))


def noise_like(rng: np.random.Generator, kind: str, secs: float) -> np.ndarray:
    n = int(secs * RATE)
    if kind == "babble":
        x = sum(speech_like(rng, secs) for _ in range(6))
    elif kind == "music":
        t = np.arange(n) / RATE
        notes = rng.choice([220.0, 261.6, 329.6, 392.0, 440.0, 523.3], size=4)
        x = sum(np.sin(2 * np.pi * f * t) * (0.5 + 0.5 * np.sin(2 * np.pi * 0.7 * t + i))
                for i, f in enumerate(notes))
    elif kind == "television":
        b, a = signal.butter(4, [300, 3400], btype="band", fs=RATE)
        x = signal.lfilter(b, a, rng.standard_normal(n)) + 0.5 * speech_like(rng, secs)
    else:
        # Pink-ish rumble.
        b, a = signal.butter(2, 500, fs=RATE)
        x = signal.lfilter(b, a, rng.standard_normal(n))
    return 0.2 * x / np.max(np.abs(x))


def rir_like(rng: np.random.Generator, secs: float = 0.3, delay: int = 40) -> np.ndarray:
    n = int(secs * RATE)
    t60 = rng.uniform(0.2, 0.6)
    h = rng.standard_normal(n) * np.exp(-6.9 * np.arange(n) / (t60 * RATE)) * 0.15
    h[:delay] = 0.0
    h[delay] = 1.0
    return h


def make_mini_corpus(out_dir, seed: int = 0, n_utterances: int = 10, utt_secs: float = 1.5,
                     noise_secs: float = 6.0, n_rirs: int = 3) -> dict[str, Path]:
    out = Path(out_dir)
    rng = np.random.default_rng(seed)
    dirs = {name: out / name for name in ("speech", "noise", "rir")}
    for d in dirs.values():
        d.mkdir(parents=True, exist_ok=True)
    for i in range(n_utterances):
        path = dirs["speech"] / f"utt{i:03d}.wav"
        write_wav(path, AudioBuffer(speech_like(rng, utt_secs), RATE))
        words = rng.choice(WORDS, size=int(rng.integers(2, 6)))
        path.with_suffix(".txt").write_text(" ".join(words) + "\n", encoding="utf-8")
    for kind in NOISE_TYPES:
        (dirs["noise"] / kind).mkdir(exist_ok=True)
        write_wav(dirs["noise"] / kind / f"{kind}.wav", AudioBuffer(noise_like(rng, kind, noise_secs), RATE))
    for i in range(n_rirs):
        write_wav(dirs["rir"] / f"rir{i}.wav", AudioBuffer(rir_like(rng), RATE))
    return dirs


def main(argv=None):
    parser = argparse.ArgumentParser(prog="augforge.minicorpus")
    parser.add_argument("out_dir")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    for name, path in make_mini_corpus(args.out_dir, args.seed).items():
        print(f"{name}: {path}")


if __name__ == "__main__":
    main()
