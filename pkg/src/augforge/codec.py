"""Low-rate codec augmentation through an external transcoder.

The transcoder is any command line described by a template, e.g.::

    sh -c 'sox "$0" -C "$1" "$2" && sox "$2" -r 16000 "$3"' {in} {value} {enc} {out}

Placeholders: ``{in}`` and ``{out}`` (WAV files, required), ``{family}``,
``{value}``, ``{enc}`` (a scratch path for the encoded stream, whose size is
reported when the shim leaves it behind) and ``{python}`` (the running
interpreter). The template is tokenized with shell quoting rules and run
without a shell.
"""
from __future__ import annotations

import os
import shlex
import shutil
import subprocess
import sys
import tempfile
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .audio import AudioBuffer, resample
from .errors import ConfigurationError, InvalidArgument, TranscodeError
from .wavio import read_wav, write_wav

FRAME_SECS = 0.020


class CodecFamily(str, Enum):
    AMR_NB = "AMR_NB"
    OGG_VORBIS = "OGG_VORBIS"
    G711 = "G711"


LEGAL_VALUES = {
    CodecFamily.AMR_NB: (4.75, 5.15, 5.90, 6.70, 7.40),
    CodecFamily.OGG_VORBIS: (-1, 0, 1, 2, 3, 4),
    CodecFamily.G711: ("a-law", "mu-law"),
}

REQUIRED_RATE = {
    CodecFamily.AMR_NB: 8000,
    CodecFamily.OGG_VORBIS: 16000,
    CodecFamily.G711: 8000,
}

ENCODED_SUFFIX = {
    CodecFamily.AMR_NB: ".amr",
    CodecFamily.OGG_VORBIS: ".ogg",
    CodecFamily.G711: ".g711",
}


_LAW_ALIASES = {"alaw": "a-law", "µ-law": "mu-law", "u-law": "mu-law", "ulaw": "mu-law", "mulaw": "mu-law"}


def parse_family(family) -> CodecFamily:
    if isinstance(family, CodecFamily):
        return family
    key = str(family).strip().upper().replace("-", "_")
    aliases = {"AMR": "AMR_NB", "OGG": "OGG_VORBIS", "VORBIS": "OGG_VORBIS"}
    try:
        return CodecFamily(aliases.get(key, key))
    except ValueError:
        raise InvalidArgument(f"unknown codec family {family!r}") from None


@dataclass(frozen=True)
class CodecSetting:
    family: CodecFamily
    value: float | int | str

    def __post_init__(self):
        family = parse_family(self.family)
        object.__setattr__(self, "family", family)
        value = self.value
        if family is CodecFamily.AMR_NB:
            value = float(value)
            if not any(abs(value - v) < 1e-9 for v in LEGAL_VALUES[family]):
                raise InvalidArgument(f"AMR-NB rate {value} kbps is not one of {LEGAL_VALUES[family]}")
        elif family is CodecFamily.OGG_VORBIS:
            if float(value) != int(float(value)) or int(float(value)) not in LEGAL_VALUES[family]:
                raise InvalidArgument(f"Vorbis quality {value} is not one of {LEGAL_VALUES[family]}")
            value = int(float(value))
        else:
            value = str(value).lower()
            value = _LAW_ALIASES.get(value, value)
            if value not in LEGAL_VALUES[family]:
                raise InvalidArgument(f"G.711 law {value!r} is not one of {LEGAL_VALUES[family]}")
        object.__setattr__(self, "value", value)

    @property
    def value_str(self) -> str:
        if self.family is CodecFamily.AMR_NB:
            return f"{self.value:.2f}"
        return str(self.value)

    @property
    def required_rate(self) -> int:
        return REQUIRED_RATE[self.family]

    def to_dict(self) -> dict:
        return {"family": self.family.value, "value": self.value}

    @classmethod
    def from_dict(cls, d) -> "CodecSetting":
        return cls(d["family"], d["value"])


def choose_setting(family, rng: np.random.Generator) -> CodecSetting:
    family = parse_family(family)
    values = LEGAL_VALUES[family]
    return CodecSetting(family, values[int(rng.integers(len(values)))])


_probe_lock = threading.Lock()
_probed: dict[str, str] = {}


@dataclass(frozen=True)
class CodecShim:
    command_template: str
    timeout_secs: int = 60

    def __post_init__(self):
        if "{in}" not in self.command_template or "{out}" not in self.command_template:
            raise ConfigurationError("codec shim template must contain {in} and {out}")
        if int(self.timeout_secs) <= 0:
            raise ConfigurationError("codec shim timeout must be positive")
        if not shlex.split(self.command_template):
            raise ConfigurationError("codec shim template is empty")

    def argv(self, **values) -> list[str]:
        values.setdefault("python", sys.executable)
        out = []
        for token in shlex.split(self.command_template):
            for key, val in values.items():
                token = token.replace("{" + key + "}", str(val))
            out.append(token)
        return out

    def probe(self) -> str:
        """Resolve the executable once per process; raise if it is missing."""
        program = shlex.split(self.command_template)[0]
        if program == "{python}":
            return sys.executable
        with _probe_lock:
            if program not in _probed:
                found = shutil.which(program)
                if found is None:
                    raise ConfigurationError(f"codec shim executable {program!r} not found on PATH")
                _probed[program] = found
            return _probed[program]


def identity_shim() -> CodecShim:
    """Shim that copies its input; useful for tests and dry runs."""
    return CodecShim("{python} -m augforge.shims identity {in} {out}")


def g711_shim() -> CodecShim:
    return CodecShim("{python} -m augforge.shims g711 --law {value} {in} {out}")


def tmp_root() -> str | None:
    return os.environ.get("AUGFORGE_TMPDIR") or None


@dataclass(frozen=True)
class TranscodeResult:
    audio: AudioBuffer
    encoded_bytes: int | None


def transcode_detailed(buf: AudioBuffer, setting: CodecSetting, shim: CodecShim) -> TranscodeResult:
    if buf.sample_rate_hz != setting.required_rate:
        raise InvalidArgument(
            f"{setting.family.value} expects {setting.required_rate} Hz input, got {buf.sample_rate_hz} Hz"
        )
    shim.probe()
    root = tmp_root()
    if root is not None:
        os.makedirs(root, exist_ok=True)
    with tempfile.TemporaryDirectory(prefix="augforge-", dir=root) as work:
        src = Path(work, "in.wav")
        dst = Path(work, "out.wav")
        enc = Path(work, "encoded" + ENCODED_SUFFIX[setting.family])
        write_wav(src, buf)
        argv = shim.argv(**{"in": src, "out": dst, "enc": enc,
                            "family": setting.family.value, "value": setting.value_str})
        try:
            proc = subprocess.run(argv, capture_output=True, timeout=shim.timeout_secs, cwd=work)
        except subprocess.TimeoutExpired as exc:
            raise TranscodeError(f"codec shim timed out after {shim.timeout_secs}s",
                                 stderr=_text(exc.stderr)) from None
        except OSError as exc:
            raise TranscodeError(f"codec shim could not start: {exc}") from None
        if proc.returncode != 0:
            raise TranscodeError(f"codec shim exited with status {proc.returncode}: {_text(proc.stderr)[-2000:]}",
                                 returncode=proc.returncode, stderr=_text(proc.stderr))
        if not dst.exists():
            raise TranscodeError("codec shim produced no output file", returncode=0, stderr=_text(proc.stderr))
        try:
            out = read_wav(dst)
        except Exception as exc:
            raise TranscodeError(f"codec shim output is not a readable WAV: {exc}") from None
        encoded = enc.stat().st_size if enc.exists() else None
    out = resample(out, buf.sample_rate_hz)
    frame = int(round(FRAME_SECS * buf.sample_rate_hz))
    if abs(len(out) - len(buf)) > frame:
        raise TranscodeError(
            f"codec output length {len(out)} differs from input {len(buf)} by more than one frame")
    return TranscodeResult(out, encoded)


def transcode(buf: AudioBuffer, setting: CodecSetting, shim: CodecShim) -> AudioBuffer:
    return transcode_detailed(buf, setting, shim).audio


def _text(data) -> str:
    if data is None:
        return ""
    if isinstance(data, bytes):
        return data.decode("utf-8", "replace")
    return str(data)
