"""Online augmentation: per-utterance gating, plan drawing and plan application.

For an utterance whose noise gate fires, the steps are: optional RIR
convolution, a foreground noise event, then full-coverage background noise.
Codec transcoding is gated independently and applied last.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import audio as dsp
from .codec import CodecFamily, CodecSetting, CodecShim, LEGAL_VALUES, parse_family, transcode
from .corpus import AudioCorpus, ManifestEntry, load_entry_audio, write_manifest
from .errors import AugforgeError, ConfigurationError, InvalidArgument, UtteranceError
from .parallel import ordered_map
from .rng import keyed_rng
from .wavio import write_wav

log = logging.getLogger(__name__)


def _interval(value, name) -> tuple[float, float]:
    lo, hi = (float(v) for v in value)
    if lo > hi:
        raise ConfigurationError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
    return lo, hi


@dataclass(frozen=True)
class AugmentPolicy:
    p_aug: float = 0.2
    p_rir: float = 1.0
    fg_snr_db: tuple[float, float] = (0.0, 30.0)
    bg_snr_db: tuple[float, float] = (10.0, 40.0)
    codec_p_aug: float = 0.0
    codec_families: tuple[CodecFamily, ...] = ()
    seed: int = 0

    def __post_init__(self):
        for name in ("p_aug", "p_rir", "codec_p_aug"):
            p = float(getattr(self, name))
            if not 0.0 <= p <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {p}")
            object.__setattr__(self, name, p)
        object.__setattr__(self, "fg_snr_db", _interval(self.fg_snr_db, "fg_snr_db"))
        object.__setattr__(self, "bg_snr_db", _interval(self.bg_snr_db, "bg_snr_db"))
        try:
            families = tuple(sorted({parse_family(f) for f in self.codec_families}, key=lambda f: f.value))
        except InvalidArgument as exc:
            raise ConfigurationError(str(exc)) from None
        object.__setattr__(self, "codec_families", families)
        if self.codec_p_aug > 0 and not families:
            raise ConfigurationError("codec_p_aug > 0 needs at least one codec family")
        seed = int(self.seed)
        if not 0 <= seed < 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "seed", seed)

    def to_dict(self) -> dict:
        return {
            "p_aug": self.p_aug,
            "p_rir": self.p_rir,
            "fg_snr_db": list(self.fg_snr_db),
            "bg_snr_db": list(self.bg_snr_db),
            "codec_p_aug": self.codec_p_aug,
            "codec_families": [f.value for f in self.codec_families],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentPolicy":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown policy keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    def with_seed(self, seed: int) -> "AugmentPolicy":
        return AugmentPolicy.from_dict({**self.to_dict(), "seed": seed})


# Base models train clean; the "-nr" variants enable noise and codec augmentation.
PRESETS = {
    "qn-en": AugmentPolicy(p_aug=0.0, codec_p_aug=0.0),
    "qn-en-nr": AugmentPolicy(p_aug=0.2, codec_p_aug=0.1,
                              codec_families=(CodecFamily.AMR_NB, CodecFamily.OGG_VORBIS)),
    "qn-mn": AugmentPolicy(p_aug=0.0, codec_p_aug=0.0),
    "qn-mn-nr": AugmentPolicy(p_aug=0.1, codec_p_aug=0.5,
                              codec_families=(CodecFamily.AMR_NB, CodecFamily.G711)),
}


def load_policy(name_or_path) -> AugmentPolicy:
    """A preset name or a JSON policy file."""
    if str(name_or_path) in PRESETS:
        return PRESETS[str(name_or_path)]
    path = Path(name_or_path)
    if not path.exists():
        raise ConfigurationError(f"{name_or_path!r} is neither a preset ({', '.join(PRESETS)}) nor a file")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON policy: {exc}") from None
    if "preset" in data:
        base = load_policy(data.pop("preset")).to_dict()
        base.update(data)
        data = base
    return AugmentPolicy.from_dict(data)


def save_policy(path, policy: AugmentPolicy) -> None:
    Path(path).write_text(json.dumps(policy.to_dict(), indent=2) + "\n", encoding="utf-8")


# -- plans -------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseStep:
    noise_index: int
    snr_db: float
    position: float  # uniform in [0, 1); mapped to a sample offset at apply time


@dataclass(frozen=True)
class AugmentPlan:
    apply: bool = False
    use_rir: bool = False
    rir_index: int | None = None
    fg: NoiseStep | None = None
    bg: NoiseStep | None = None
    codec: CodecSetting | None = None

    @property
    def is_passthrough(self) -> bool:
        return not self.apply and self.codec is None

    def to_dict(self) -> dict:
        return {
            "apply": self.apply,
            "use_rir": self.use_rir,
            "rir_index": self.rir_index,
            "fg": asdict(self.fg) if self.fg else None,
            "bg": asdict(self.bg) if self.bg else None,
            "codec": self.codec.to_dict() if self.codec else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentPlan":
        return cls(
            apply=bool(d["apply"]),
            use_rir=bool(d["use_rir"]),
            rir_index=d.get("rir_index"),
            fg=NoiseStep(**d["fg"]) if d.get("fg") else None,
            bg=NoiseStep(**d["bg"]) if d.get("bg") else None,
            codec=CodecSetting.from_dict(d["codec"]) if d.get("codec") else None,
        )


PASSTHROUGH = AugmentPlan()


def _pick(u: float, n: int) -> int:
    return min(int(u * n), n - 1)


def draw_plan(policy: AugmentPolicy, utterance_id: str, corpora_sizes: tuple[int, int]) -> AugmentPlan:
    """Draw the augmentation plan for one utterance.

    The generator is keyed on ``(policy.seed, utterance_id)`` and a fixed
    number of uniforms is consumed whatever the gates decide, so a plan does
    not depend on processing order or on the other utterances.
    """
    n_rirs, n_noise = corpora_sizes
    rng = keyed_rng(policy.seed, str(utterance_id))
    u = rng.random(12)
    apply = bool(u[0] < policy.p_aug)
    codec = None
    if u[9] < policy.codec_p_aug:
        family = policy.codec_families[_pick(u[10], len(policy.codec_families))]
        values = LEGAL_VALUES[family]
        codec = CodecSetting(family, values[_pick(u[11], len(values))])
    if not apply:
        return AugmentPlan(codec=codec)
    if n_noise <= 0:
        raise ConfigurationError("noise augmentation fired but the noise corpus is empty")
    use_rir = bool(u[1] < policy.p_rir)
    rir_index = None
    if use_rir:
        if n_rirs <= 0:
            raise ConfigurationError("RIR augmentation fired but the RIR corpus is empty")
        rir_index = _pick(u[2], n_rirs)
    lo, hi = policy.fg_snr_db
    fg = NoiseStep(_pick(u[3], n_noise), lo + (hi - lo) * float(u[4]), float(u[5]))
    lo, hi = policy.bg_snr_db
    bg = NoiseStep(_pick(u[6], n_noise), lo + (hi - lo) * float(u[7]), float(u[8]))
    assert policy.fg_snr_db[0] <= fg.snr_db <= policy.fg_snr_db[1]
    assert policy.bg_snr_db[0] <= bg.snr_db <= policy.bg_snr_db[1]
    return AugmentPlan(True, use_rir, rir_index, fg, bg, codec)


def _codec_stage(buf: dsp.AudioBuffer, setting: CodecSetting, shim: CodecShim) -> dsp.AudioBuffer:
    rate = setting.required_rate
    coded = transcode(dsp.resample(buf, rate), setting, shim)
    back = dsp.resample(coded, buf.sample_rate_hz)
    return buf.with_samples(dsp._fit_length(back.samples, len(buf)))


def apply_plan(speech: dsp.AudioBuffer, plan: AugmentPlan, rirs: AudioCorpus | None,
               noise: AudioCorpus | None, codec_shim: CodecShim | None = None,
               utterance_id: str = "") -> dsp.AudioBuffer:
    """RIR, foreground noise, background noise, codec; each stage sees the previous output."""
    if plan.is_passthrough:
        return speech
    try:
        if speech.sample_rate_hz != dsp.CANONICAL_RATE:
            raise InvalidArgument(f"augmentation expects {dsp.CANONICAL_RATE} Hz speech, got {speech.sample_rate_hz}")
        out = speech
        if plan.apply:
            if plan.use_rir:
                out = dsp.convolve_rir(out, rirs.rir(plan.rir_index).resampled(out.sample_rate_hz))
            if plan.fg is not None:
                out = dsp.mix_noise(out, noise.audio(plan.fg.noise_index), plan.fg.snr_db,
                                    dsp.MixMode.FOREGROUND, position=plan.fg.position)
            if plan.bg is not None:
                out = dsp.mix_noise(out, noise.audio(plan.bg.noise_index), plan.bg.snr_db,
                                    dsp.MixMode.BACKGROUND, position=plan.bg.position)
        if plan.codec is not None:
            if codec_shim is None:
                raise ConfigurationError("plan requests codec augmentation but no codec shim is configured")
            out = _codec_stage(out, plan.codec, codec_shim)
        return out
    except UtteranceError:
        raise
    except (AugforgeError, OSError, ValueError) as exc:
        raise UtteranceError(utterance_id, exc) from exc


# -- batch driver ------------------------------------------------------------

@dataclass
class AugmentResult:
    entries: list[ManifestEntry]
    errors: list[dict] = field(default_factory=list)
    n_input: int = 0
    n_applied: int = 0
    n_codec: int = 0

    @property
    def error_fraction(self) -> float:
        return len(self.errors) / self.n_input if self.n_input else 0.0


_WORKER = {}


def safe_name(utterance_id: str) -> str:
    return str(utterance_id).replace("/", "_").replace("\\", "_")


def _init_worker(policy, rirs, noise, codec_shim, out_dir, manifest_path):
    _WORKER.update(policy=policy, rirs=rirs, noise=noise, codec_shim=codec_shim,
                   out_dir=Path(out_dir), manifest_path=manifest_path)


def _augment_one(job):
    index, entry = job
    w = _WORKER
    uid = entry.utterance_id
    try:
        rirs, noise = w["rirs"], w["noise"]
        plan = draw_plan(w["policy"], uid, (len(rirs) if rirs else 0, len(noise) if noise else 0))
        speech = dsp.resample(load_entry_audio(entry, w["manifest_path"]), dsp.CANONICAL_RATE)
        out = apply_plan(speech, plan, rirs, noise, w["codec_shim"], uid)
        rel = Path("audio") / f"{safe_name(uid)}.wav"
        write_wav(w["out_dir"] / rel, out)
    except Exception as exc:
        cause = exc.cause if isinstance(exc, UtteranceError) else exc
        if isinstance(cause, ConfigurationError):
            raise cause
        return index, None, {"index": index, "id": uid, "audio_filepath": entry.audio_filepath,
                             "error": type(cause).__name__, "message": str(cause)}
    extra = {k: v for k, v in entry.extra.items() if k != "offset"}
    extra["id"] = uid
    extra["augment"] = plan.to_dict()
    new = ManifestEntry(rel.as_posix(), len(out) / out.sample_rate_hz, entry.text, extra)
    return index, new, None


def augment_manifest(entries: list[ManifestEntry], policy: AugmentPolicy, rirs: AudioCorpus | None,
                     noise: AudioCorpus | None, out_dir, workers: int = 1,
                     codec_shim: CodecShim | None = None, manifest_path=None) -> AugmentResult:
    """Augment every entry into ``out_dir/audio/<id>.wav`` and write ``out_dir/manifest.jsonl``.

    Per-entry failures go to ``out_dir/errors.jsonl``; configuration errors
    abort the run before anything is written.
    """
    out_dir = Path(out_dir)
    ids = [safe_name(e.utterance_id) for e in entries]
    dupes = sorted({i for i in ids if ids.count(i) > 1}) if len(set(ids)) != len(ids) else []
    if dupes:
        raise ConfigurationError(f"duplicate utterance ids: {', '.join(dupes[:5])}")
    if policy.p_aug > 0 and (noise is None or len(noise) == 0) and entries:
        raise ConfigurationError("p_aug > 0 but no noise corpus was given")
    if policy.p_aug > 0 and policy.p_rir > 0 and (rirs is None or len(rirs) == 0) and entries:
        raise ConfigurationError("p_rir > 0 but no RIR corpus was given")
    if policy.codec_p_aug > 0 and entries:
        if codec_shim is None:
            raise ConfigurationError("codec_p_aug > 0 but no codec shim was given")
        codec_shim.probe()
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)

    results = ordered_map(_augment_one, list(enumerate(entries)), workers, _init_worker,
                          (policy, rirs, noise, codec_shim, os.fspath(out_dir), manifest_path))
    out_entries = [r[1] for r in results if r[1] is not None]
    errors = [r[2] for r in results if r[2] is not None]
    write_manifest(out_dir / "manifest.jsonl", out_entries)
    with open(out_dir / "errors.jsonl", "w", encoding="utf-8") as f:
        for err in errors:
            f.write(json.dumps(err, ensure_ascii=False) + "\n")
    applied = sum(1 for e in out_entries if e.extra["augment"]["apply"])
    coded = sum(1 for e in out_entries if e.extra["augment"]["codec"])
    for err in errors:
        log.warning("augmentation failed for %s: %s", err["id"], err["message"])
    return AugmentResult(out_entries, errors, len(entries), applied, coded)
