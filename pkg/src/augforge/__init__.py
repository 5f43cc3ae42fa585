"""Deterministic speech augmentation (reverberation, SNR-controlled noise,
low-rate codecs), log-mel front-end, noisy test-set simulation and WER scoring."""

__version__ = "0.1.0"

from .audio import (AudioBuffer, MixMode, RirBuffer, convolve_rir, mix_noise, narrowband_simulate,
                    resample, rms, snr_gain)
from .augment import AugmentPlan, AugmentPolicy, PRESETS, apply_plan, augment_manifest, draw_plan, load_policy
from .codec import CodecFamily, CodecSetting, CodecShim, choose_setting, transcode
from .corpus import ManifestEntry, NoiseSegment, build_manifest, chunk_noise, read_manifest, validate_manifest
from .evaluate import WerReport, aggregate_sweep, align, ctc_greedy_decode, score
from .features import CutoutConfig, FeatureConfig, Spectrogram, log_mel, mel_filterbank, spec_cutout
from .testset import SimPlan, simulate

__all__ = [
    "AudioBuffer",
    "AugmentPlan",
    "AugmentPolicy",
    "CodecFamily",
    "CodecSetting",
    "CodecShim",
    "CutoutConfig",
    "FeatureConfig",
    "ManifestEntry",
    "MixMode",
    "NoiseSegment",
    "PRESETS",
    "RirBuffer",
    "SimPlan",
    "Spectrogram",
    "WerReport",
    "aggregate_sweep",
    "align",
    "apply_plan",
    "augment_manifest",
    "build_manifest",
    "choose_setting",
    "chunk_noise",
    "convolve_rir",
    "ctc_greedy_decode",
    "draw_plan",
    "load_policy",
    "log_mel",
    "mel_filterbank",
    "mix_noise",
    "narrowband_simulate",
    "read_manifest",
    "resample",
    "rms",
    "score",
    "simulate",
    "snr_gain",
    "spec_cutout",
    "transcode",
    "validate_manifest",
]
