"""Manifest handling and noise-corpus preparation.

A manifest is UTF-8 JSON lines with at least ``audio_filepath``,
``duration`` and ``text``. Extra keys (``offset`` for noise segments,
``noise_type``, ``id``) are carried through untouched.
"""
from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal


from .audio import AudioBuffer, RirBuffer, resample
from .errors import AugforgeError, ConfigurationError, InvalidArgument, ManifestParseError
from .wavio import probe_wav, read_wav

log = logging.getLogger(__name__)

AUDIO_SUFFIXES = (".wav",)
DURATION_TOLERANCE_SECS = 0.1


@dataclass(frozen=True)
class ManifestEntry:
    audio_filepath: str
    duration: float
    text: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.audio_filepath:
            raise InvalidArgument("manifest entry has an empty audio_filepath")
        if not self.duration > 0:
            raise InvalidArgument(f"duration must be positive, got {self.duration}")

    @property
    def utterance_id(self) -> str:
        """The ``id`` key if present, else the audio file stem."""
        if "id" in self.extra:
            return str(self.extra["id"])
        return Path(self.audio_filepath).stem

    @property
    def offset(self) -> float:
        return float(self.extra.get("offset", 0.0))

    def to_dict(self) -> dict:
        d = {"audio_filepath": self.audio_filepath, "duration": self.duration, "text": self.text}
        d.update(self.extra)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestEntry":
        d = dict(d)
        path = d.pop("audio_filepath")
        duration = float(d.pop("duration"))
        text = d.pop("text", "")
        return cls(str(path), duration, "" if text is None else str(text), d)

    def replace(self, **changes) -> "ManifestEntry":
        fields = {"audio_filepath": self.audio_filepath, "duration": self.duration,
                  "text": self.text, "extra": dict(self.extra)}
        extra = changes.pop("extra", None)
        fields.update(changes)
        if extra:
            fields["extra"].update(extra)
        return ManifestEntry(**fields)


def parse_manifest_lines(lines: Iterable[str], path="<manifest>") -> list[ManifestEntry]:
    entries = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestParseError(path, line_no, f"invalid JSON: {exc.msg}") from None
        if not isinstance(record, dict):
            raise ManifestParseError(path, line_no, "record is not a JSON object")
        missing = [k for k in ("audio_filepath", "duration") if k not in record]
        if missing:
            raise ManifestParseError(path, line_no, f"missing keys: {', '.join(missing)}")
        try:
            entries.append(ManifestEntry.from_dict(record))
        except (InvalidArgument, TypeError, ValueError) as exc:
            raise ManifestParseError(path, line_no, str(exc)) from None
    return entries


def read_manifest(path) -> list[ManifestEntry]:
    with open(path, encoding="utf-8") as f:
        return parse_manifest_lines(f, path)


def write_manifest(path, entries: Iterable[ManifestEntry]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for entry in entries:
            f.write(entry.to_json() + "\n")


def resolve_path(entry: ManifestEntry, manifest_path=None) -> Path:
    """Relative audio paths are taken relative to the manifest's directory."""
    p = Path(entry.audio_filepath)
    if not p.is_absolute() and manifest_path is not None:
        p = Path(manifest_path).parent / p
    return p


def load_entry_audio(entry: ManifestEntry, manifest_path=None) -> AudioBuffer:
    """Read the audio an entry refers to, honouring ``offset``/``duration`` slices."""
    buf = read_wav(resolve_path(entry, manifest_path))
    if "offset" not in entry.extra:
        return buf
    sr = buf.sample_rate_hz
    lo = int(round(entry.offset * sr))
    hi = lo + int(round(entry.duration * sr))
    return buf.with_samples(buf.samples[lo:hi])


# -- chunking ----------------------------------------------------------------

@dataclass(frozen=True)
class NoiseSegment:
    source_path: str
    offset: float
    length: float

    def __post_init__(self):
        if self.offset < 0:
            raise InvalidArgument("segment offset must be non-negative")
        if not self.length > 0:
            raise InvalidArgument("segment length must be positive")


def chunk_bounds(n_samples: int, sample_rate: int, chunk_secs: float = 20.0,
                 min_chunk_secs: float = 1.0) -> list[tuple[int, int]]:
    """Sample ranges of consecutive chunks; a short tail survives if ≥ ``min_chunk_secs``."""
    if not (chunk_secs > min_chunk_secs > 0):
        raise InvalidArgument("need chunk_secs > min_chunk_secs > 0")
    chunk = int(round(chunk_secs * sample_rate))
    min_len = int(math.ceil(min_chunk_secs * sample_rate - 1e-9))
    bounds = []
    for start in range(0, n_samples, chunk):
        length = min(chunk, n_samples - start)
        if length < chunk and length < min_len:
            break
        bounds.append((start, start + length))
    return bounds


def chunk_noise(path, chunk_secs: float = 20.0, min_chunk_secs: float = 1.0) -> list[NoiseSegment]:
    try:
        n, sr = probe_wav(path)
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    return [NoiseSegment(os.fspath(path), lo / sr, (hi - lo) / sr)
            for lo, hi in chunk_bounds(n, sr, chunk_secs, min_chunk_secs)]


# -- manifest construction ---------------------------------------------------

Kind = Literal["speech", "noise", "rir"]


@dataclass
class ManifestSummary:
    count: int
    total_hours: float
    files: int


def discover_audio(scan_dir) -> list[Path]:
    root = Path(scan_dir)
    found = [p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in AUDIO_SUFFIXES]
    return sorted(found, key=lambda p: p.relative_to(root).as_posix())


def _noise_type(path: Path, root: Path) -> str | None:
    rel = path.relative_to(root)
    return rel.parts[0] if len(rel.parts) > 1 else None


def build_manifest(scan_dir, kind: Kind = "speech", out_path=None, chunk_secs: float = 20.0,
                   min_chunk_secs: float = 1.0) -> tuple[list[ManifestEntry], ManifestSummary]:
    """Scan ``scan_dir`` for WAV files and emit one entry per file (per chunk for noise).

    Noise files inside a subdirectory get that directory name as ``noise_type``.
    Speech files pick up a transcript from a sibling ``.txt`` file if present.
    """
    if kind not in ("speech", "noise", "rir"):
        raise InvalidArgument(f"unknown manifest kind {kind!r}")
    root = Path(scan_dir)
    files = discover_audio(root)
    entries = []
    for path in files:
        if kind == "noise":
            label = _noise_type(path, root)
            for seg in chunk_noise(path, chunk_secs, min_chunk_secs):
                extra = {"offset": seg.offset}
                if label is not None:
                    extra["noise_type"] = label
                entries.append(ManifestEntry(seg.source_path, seg.length, "", extra))
            continue
        n, sr = probe_wav(path)
        if n == 0:
            log.warning("skipping empty file %s", path)
            continue
        text = ""
        transcript = path.with_suffix(".txt")
        if kind == "speech" and transcript.exists():
            text = transcript.read_text(encoding="utf-8").strip()
        entries.append(ManifestEntry(os.fspath(path), n / sr, text))
    if not entries:
        log.warning("no audio found under %s", root)
    summary = ManifestSummary(len(entries), sum(e.duration for e in entries) / 3600.0, len(files))
    if out_path is not None:
        write_manifest(out_path, entries)
    return entries, summary


# -- validation --------------------------------------------------------------

@dataclass
class ValidationFailure:
    line_no: int
    kind: str  # "not-found" | "unreadable" | "duration-mismatch"
    message: str


@dataclass
class ValidationReport:
    path: str
    n_entries: int
    failures: list[ValidationFailure]

    @property
    def ok(self) -> bool:
        return not self.failures


def validate_manifest(path) -> ValidationReport:
    entries = read_manifest(path)
    failures = []
    for line_no, entry in enumerate(entries, start=1):
        audio = resolve_path(entry, path)
        if not audio.exists():
            failures.append(ValidationFailure(line_no, "not-found", f"{audio} does not exist"))
            continue
        try:
            n, sr = probe_wav(audio)
        except Exception as exc:  # any header problem is a per-entry failure
            failures.append(ValidationFailure(line_no, "unreadable", f"{audio}: {exc}"))
            continue
        available = n / sr - (entry.offset if "offset" in entry.extra else 0.0)
        if "offset" in entry.extra:
            bad = entry.duration > available + DURATION_TOLERANCE_SECS
        else:
            bad = abs(available - entry.duration) > DURATION_TOLERANCE_SECS
        if bad:
            failures.append(ValidationFailure(
                line_no, "duration-mismatch",
                f"declared {entry.duration:.3f}s, file has {available:.3f}s"))
    return ValidationReport(os.fspath(path), len(entries), failures)


# -- corpora used during augmentation ----------------------------------------

class AudioCorpus:
    """Read-only indexable collection of noise or RIR clips.

    Clips are read on first access and resampled to ``sample_rate_hz``.
    The cache is per process and is not pickled, so worker processes each fill
    their own.
    """

    def __init__(self, entries: list[ManifestEntry], sample_rate_hz: int = 16000,
                 manifest_path=None, max_cached: int = 4096):
        self.entries = list(entries)
        self.sample_rate_hz = sample_rate_hz
        self.manifest_path = manifest_path
        self.max_cached = max_cached
        self._cache = {}

    @classmethod
    def from_manifest(cls, path, sample_rate_hz: int = 16000) -> "AudioCorpus":
        return cls(read_manifest(path), sample_rate_hz, manifest_path=path)

    def __len__(self):
        return len(self.entries)

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_cache"] = {}
        return state

    def audio(self, index: int) -> AudioBuffer:
        if index in self._cache:
            return self._cache[index]
        try:
            buf = load_entry_audio(self.entries[index], self.manifest_path)
        except (OSError, ValueError) as exc:
            raise AugforgeError(f"cannot load corpus clip {self.entries[index].audio_filepath}: {exc}") from exc
        buf = resample(buf, self.sample_rate_hz)
        if len(self._cache) >= self.max_cached:
            self._cache.pop(next(iter(self._cache)))
        self._cache[index] = buf
        return buf

    def rir(self, index: int) -> RirBuffer:
        buf = self.audio(index)
        return RirBuffer(buf.samples, buf.sample_rate_hz)

    def partition(self, key: str = "noise_type") -> dict[str, "AudioCorpus"]:
        groups: dict[str, list[ManifestEntry]] = {}
        for entry in self.entries:
            label = entry.extra.get(key)
            if label is None:
                raise ConfigurationError(f"{entry.audio_filepath} has no {key!r} label")
            groups.setdefault(str(label), []).append(entry)
        return {label: AudioCorpus(items, self.sample_rate_hz, self.manifest_path, self.max_cached)
                for label, items in sorted(groups.items())}

    def at_rate(self, sample_rate_hz: int) -> "AudioCorpus":
        return AudioCorpus(self.entries, sample_rate_hz, self.manifest_path, self.max_cached)


def empty_corpus(sample_rate_hz: int = 16000) -> AudioCorpus:
    return AudioCorpus([], sample_rate_hz)

