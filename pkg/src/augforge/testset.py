"""Noisy evaluation-set simulation over an SNR x noise-type x iteration grid."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from . import audio as dsp
from .augment import safe_name
from .corpus import AudioCorpus, ManifestEntry, load_entry_audio, write_manifest
from .errors import AugforgeError, ConfigurationError, UtteranceError
from .parallel import ordered_map
from .rng import keyed_rng
from .wavio import write_wav

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimPlan:
    snr_list_db: tuple[float, ...]
    noise_types: tuple[str, ...]
    iterations: int = 5
    narrowband: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "snr_list_db", tuple(float(s) for s in self.snr_list_db))
        object.__setattr__(self, "noise_types", tuple(str(t) for t in self.noise_types))
        if not self.snr_list_db or not self.noise_types:
            raise ConfigurationError("SNR list and noise types must be non-empty")
        if len(set(self.snr_list_db)) != len(self.snr_list_db) or len(set(self.noise_types)) != len(self.noise_types):
            raise ConfigurationError("SNR list and noise types must not repeat")
        if int(self.iterations) < 1:
            raise ConfigurationError("iterations must be >= 1")

    @property
    def sample_rate_hz(self) -> int:
        return dsp.NARROWBAND_RATE if self.narrowband else dsp.CANONICAL_RATE

    def cells(self):
        for snr in self.snr_list_db:
            for noise_type in self.noise_types:
                for k in range(1, self.iterations + 1):
                    yield snr, noise_type, k


def cell_name(snr_db: float, noise_type: str, iteration: int) -> str:
    return f"{noise_type}_snr{snr_db:g}_iter{iteration}"


_WORKER = {}


def _init_worker(plan, noise_by_type, out_dir, manifest_path):
    _WORKER.update(plan=plan, noise=noise_by_type, out_dir=Path(out_dir), manifest_path=manifest_path)


def _simulate_utterance(entry: ManifestEntry) -> list[tuple[tuple, ManifestEntry]]:
    w = _WORKER
    plan: SimPlan = w["plan"]
    uid = entry.utterance_id
    try:
        speech = dsp.resample(load_entry_audio(entry, w["manifest_path"]), plan.sample_rate_hz)
        rows = []
        for cell in plan.cells():
            snr, noise_type, k = cell
            corpus = w["noise"][noise_type]
            rng = keyed_rng(plan.seed, snr, noise_type, k, uid)
            noise_index = int(rng.integers(len(corpus)))
            mix = dsp.mix_noise_detailed(speech, corpus.audio(noise_index), snr,
                                         dsp.MixMode.BACKGROUND, rng=rng)
            rel = Path(cell_name(*cell)) / f"{safe_name(uid)}.wav"
            write_wav(w["out_dir"] / rel, mix.audio)
            extra = {k2: v for k2, v in entry.extra.items() if k2 != "offset"}
            extra.update(id=uid, snr_db=snr, noise_type=noise_type, iteration=k,
                         noise_index=noise_index, noise_start=mix.start,
                         noise_gain=mix.gain, peak_scale=mix.peak_scale)
            rows.append((cell, ManifestEntry(rel.as_posix(), len(speech) / speech.sample_rate_hz,
                                             entry.text, extra)))
        return rows
    except (AugforgeError, OSError, ValueError) as exc:
        raise UtteranceError(uid, exc) from exc


def simulate(test_entries: list[ManifestEntry], noise: AudioCorpus | dict[str, AudioCorpus],
             plan: SimPlan, out_dir, workers: int = 1, manifest_path=None) -> dict[tuple, Path]:
    """Write one noisy copy of the test set per grid cell.

    Returns ``{(snr_db, noise_type, iteration): manifest_path}``; manifests are
    named ``{type}_snr{snr}_iter{k}.jsonl`` inside ``out_dir``.
    """
    by_type = noise.partition() if isinstance(noise, AudioCorpus) else dict(noise)
    missing = [t for t in plan.noise_types if t not in by_type or len(by_type[t]) == 0]
    if missing:
        raise ConfigurationError(f"noise corpus has no segments of type: {', '.join(missing)}")
    ids = [safe_name(e.utterance_id) for e in test_entries]
    if len(set(ids)) != len(ids):
        raise ConfigurationError("test set has duplicate utterance ids")
    by_type = {t: by_type[t].at_rate(plan.sample_rate_hz) for t in plan.noise_types}
    out_dir = Path(out_dir)
    for cell in plan.cells():
        (out_dir / cell_name(*cell)).mkdir(parents=True, exist_ok=True)

    per_utt = ordered_map(_simulate_utterance, list(test_entries), workers, _init_worker,
                          (plan, by_type, str(out_dir), manifest_path))
    grouped: dict[tuple, list[ManifestEntry]] = {cell: [] for cell in plan.cells()}
    for rows in per_utt:
        for cell, entry in rows:
            grouped[cell].append(entry)
    manifests = {}
    for cell, entries in grouped.items():
        path = out_dir / f"{cell_name(*cell)}.jsonl"
        write_manifest(path, entries)
        manifests[cell] = path
    log.info("wrote %d simulated sets of %d utterances", len(manifests), len(test_entries))
    return manifests
