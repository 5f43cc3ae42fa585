import hashlib
import json
import math
from pathlib import Path

import numpy as np
import pytest

from augforge import audio as dsp
from augforge.audio import AudioBuffer
from augforge.augment import (PRESETS, AugmentPlan, AugmentPolicy, NoiseStep, apply_plan, augment_manifest,
                              draw_plan, load_policy, save_policy)
from augforge.codec import CodecFamily, CodecSetting, LEGAL_VALUES, identity_shim
from augforge.corpus import AudioCorpus, ManifestEntry, build_manifest, read_manifest, write_manifest
from augforge.errors import ConfigurationError, UtteranceError
from augforge.wavio import read_wav, write_wav

from conftest import random_speech


@pytest.fixture(scope="module")
def corpora(mini_corpus, tmp_path_factory):
    d = tmp_path_factory.mktemp("manifests")
    build_manifest(mini_corpus["noise"], "noise", d / "noise.jsonl", chunk_secs=2)
    build_manifest(mini_corpus["rir"], "rir", d / "rir.jsonl")
    build_manifest(mini_corpus["speech"], "speech", d / "speech.jsonl")
    return {
        "noise": AudioCorpus.from_manifest(d / "noise.jsonl"),
        "rir": AudioCorpus.from_manifest(d / "rir.jsonl"),
        "speech": d / "speech.jsonl",
    }


def tree_digest(root):
    root = Path(root)
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.relative_to(root).as_posix().encode())
            h.update(p.read_bytes())
    return h.hexdigest()


# -- policy --------------------------------------------------------------------

def test_policy_validation():
    with pytest.raises(ConfigurationError):
        AugmentPolicy(p_aug=1.5)
    with pytest.raises(ConfigurationError):
        AugmentPolicy(fg_snr_db=(30, 0))
    with pytest.raises(ConfigurationError):
        AugmentPolicy(codec_p_aug=0.5)
    with pytest.raises(ConfigurationError):
        AugmentPolicy.from_dict({"p_aug": 0.1, "bogus": 1})


def test_policy_file_round_trip(tmp_path):
    p = AugmentPolicy(p_aug=0.3, p_rir=0.5, fg_snr_db=(1, 2), bg_snr_db=(15, 25), codec_p_aug=0.25,
                      codec_families=("OGG_VORBIS", "AMR_NB"), seed=2**63 + 5)
    save_policy(tmp_path / "p.json", p)
    assert load_policy(tmp_path / "p.json") == p
    assert AugmentPolicy.from_dict(json.loads(json.dumps(p.to_dict()))) == p


def test_presets_match_recipe():
    assert (PRESETS["qn-en-nr"].p_aug, PRESETS["qn-en-nr"].codec_p_aug) == (0.2, 0.1)
    assert (PRESETS["qn-mn-nr"].p_aug, PRESETS["qn-mn-nr"].codec_p_aug) == (0.1, 0.5)
    assert PRESETS["qn-en"].p_aug == PRESETS["qn-mn"].p_aug == 0.0
    assert load_policy("qn-en-nr") is PRESETS["qn-en-nr"]
    assert PRESETS["qn-en-nr"].fg_snr_db == (0.0, 30.0) and PRESETS["qn-en-nr"].bg_snr_db == (10.0, 40.0)


def test_policy_file_may_extend_a_preset(tmp_path):
    (tmp_path / "p.json").write_text('{"preset": "qn-mn-nr", "seed": 9}')
    p = load_policy(tmp_path / "p.json")
    assert (p.p_aug, p.codec_p_aug, p.seed) == (0.1, 0.5, 9)
    with pytest.raises(ConfigurationError):
        load_policy("no-such-preset")


# -- draw_plan -----------------------------------------------------------------

def test_p_aug_zero_never_applies():
    policy = AugmentPolicy(p_aug=0.0)
    assert all(draw_plan(policy, f"u{i}", (3, 3)).is_passthrough for i in range(2000))


def test_p_aug_one_always_applies_with_rir():
    policy = AugmentPolicy(p_aug=1.0, p_rir=1.0, seed=3)
    for i in range(2000):
        plan = draw_plan(policy, f"u{i}", (5, 7))
        assert plan.apply and plan.use_rir and 0 <= plan.rir_index < 5
        assert 0 <= plan.fg.snr_db <= 30 and 10 <= plan.bg.snr_db <= 40
        assert 0 <= plan.fg.noise_index < 7 and 0 <= plan.bg.position < 1


def test_gate_frequencies_converge():
    policy = AugmentPolicy(p_aug=0.2, p_rir=0.5, codec_p_aug=0.1,
                           codec_families=(CodecFamily.AMR_NB, CodecFamily.OGG_VORBIS), seed=11)
    plans = [draw_plan(policy, f"utt-{i}", (4, 4)) for i in range(100_000)]
    applied = [p for p in plans if p.apply]
    assert abs(len(applied) / 1e5 - 0.2) <= 0.01
    assert abs(sum(p.use_rir for p in applied) / len(applied) - 0.5) <= 0.01
    assert abs(sum(p.codec is not None for p in plans) / 1e5 - 0.1) <= 0.01
    # Codec gating is independent of the noise gate.
    coded_given_applied = sum(p.codec is not None for p in applied) / len(applied)
    assert abs(coded_given_applied - 0.1) <= 0.01


def test_codec_settings_drawn_from_policy_families():
    policy = AugmentPolicy(p_aug=0.0, codec_p_aug=1.0, codec_families=("G711",))
    for i in range(200):
        c = draw_plan(policy, str(i), (0, 0)).codec
        assert c.family is CodecFamily.G711 and c.value in LEGAL_VALUES[CodecFamily.G711]


def test_plan_is_independent_of_order():
    policy = AugmentPolicy(p_aug=0.5, seed=99)
    ids = [f"u{i}" for i in range(300)]
    forward = {u: draw_plan(policy, u, (3, 10)) for u in ids}
    backward = {u: draw_plan(policy, u, (3, 10)) for u in reversed(ids)}
    assert forward == backward
    other_seed = {u: draw_plan(policy.with_seed(100), u, (3, 10)) for u in ids}
    assert other_seed != forward


def test_empty_corpora_are_configuration_errors():
    with pytest.raises(ConfigurationError):
        draw_plan(AugmentPolicy(p_aug=1.0), "u", (3, 0))
    with pytest.raises(ConfigurationError):
        draw_plan(AugmentPolicy(p_aug=1.0, p_rir=1.0), "u", (0, 3))
    assert draw_plan(AugmentPolicy(p_aug=1.0, p_rir=0.0), "u", (0, 3)).apply


def test_plan_serializes():
    plan = AugmentPlan(True, True, 2, NoiseStep(1, 3.5, 0.25), NoiseStep(0, 20.0, 0.75), CodecSetting("AMR_NB", 6.7))
    assert AugmentPlan.from_dict(json.loads(json.dumps(plan.to_dict()))) == plan


# -- apply_plan ----------------------------------------------------------------

def test_passthrough_is_bit_identical(rng, corpora):
    speech = random_speech(rng)
    assert apply_plan(speech, AugmentPlan(), corpora["rir"], corpora["noise"]) is speech


def test_background_only_at_40_db(rng, corpora):
    speech = random_speech(rng)
    plan = AugmentPlan(apply=True, bg=NoiseStep(0, 40.0, 0.3))
    out = apply_plan(speech, plan, None, corpora["noise"])
    residual = dsp.rms(out.samples - speech.samples)
    assert residual == pytest.approx(dsp.rms(speech) / 100, rel=0.10)


def test_stage_order_and_running_snr(rng, corpora):
    speech = random_speech(rng)
    plan = AugmentPlan(True, True, 1, NoiseStep(2, 5.0, 0.4), NoiseStep(3, 25.0, 0.6))
    out = apply_plan(speech, plan, corpora["rir"], corpora["noise"])
    rev = dsp.convolve_rir(speech, corpora["rir"].rir(1))
    fg = dsp.mix_noise(rev, corpora["noise"].audio(2), 5.0, "foreground", position=0.4)
    bg = dsp.mix_noise_detailed(fg, corpora["noise"].audio(3), 25.0, "background", position=0.6)
    assert np.array_equal(out.samples, bg.audio.samples)
    assert 20 * math.log10(dsp.rms(fg) / dsp.rms(bg.noise_track)) == pytest.approx(25.0, abs=1e-9)


def test_apply_is_deterministic(rng, corpora):
    speech = random_speech(rng)
    plan = draw_plan(AugmentPolicy(p_aug=1.0, seed=4), "x", (len(corpora["rir"]), len(corpora["noise"])))
    a = apply_plan(speech, plan, corpora["rir"], corpora["noise"])
    b = apply_plan(speech, plan, corpora["rir"], corpora["noise"])
    assert np.array_equal(a.samples, b.samples)


def test_codec_stage_round_trips_through_8k(rng):
    speech = random_speech(rng, 16000)
    plan = AugmentPlan(codec=CodecSetting("AMR_NB", 4.75))
    out = apply_plan(speech, plan, None, None, identity_shim())
    assert out.sample_rate_hz == 16000 and len(out) == len(speech)
    narrow = dsp.narrowband_simulate(speech)
    assert np.max(np.abs(out.samples - narrow.samples)) < 1e-3


def test_errors_carry_utterance_id(corpora):
    silent = AudioBuffer(np.zeros(16000), 16000)
    with pytest.raises(UtteranceError, match="utt-9"):
        apply_plan(silent, AugmentPlan(apply=True, bg=NoiseStep(0, 10.0, 0.0)), None, corpora["noise"],
                   utterance_id="utt-9")


# -- augment_manifest ----------------------------------------------------------

def test_empty_manifest(tmp_path):
    result = augment_manifest([], PRESETS["qn-en-nr"], None, None, tmp_path / "out")
    assert result.entries == [] and (tmp_path / "out" / "manifest.jsonl").read_text() == ""


def test_identity_run_copies_audio_exactly(tmp_path, corpora):
    entries = read_manifest(corpora["speech"])
    result = augment_manifest(entries, AugmentPolicy(p_aug=0.0), None, None, tmp_path / "out",
                              manifest_path=corpora["speech"])
    assert len(result.entries) == len(entries) and result.n_applied == 0
    for src, dst in zip(entries, result.entries):
        assert (tmp_path / "out" / dst.audio_filepath).read_bytes() == Path(src.audio_filepath).read_bytes()
        assert dst.text == src.text and dst.duration == src.duration


def test_output_order_and_parallel_determinism(tmp_path, corpora):
    entries = read_manifest(corpora["speech"])[::-1]
    policy = AugmentPolicy(p_aug=0.7, seed=21)
    r1 = augment_manifest(entries, policy, corpora["rir"], corpora["noise"], tmp_path / "w1", workers=1,
                          manifest_path=corpora["speech"])
    augment_manifest(entries, policy, corpora["rir"], corpora["noise"], tmp_path / "w3", workers=3,
                          manifest_path=corpora["speech"])
    assert [e.extra["id"] for e in r1.entries] == [e.utterance_id for e in entries]
    assert tree_digest(tmp_path / "w1") == tree_digest(tmp_path / "w3")
    assert r1.n_applied > 0


def test_per_entry_errors_go_to_sidecar(tmp_path, corpora):
    entries = read_manifest(corpora["speech"])[:3] + [ManifestEntry(str(tmp_path / "gone.wav"), 1.0, "x")]
    result = augment_manifest(entries, AugmentPolicy(p_aug=0.0), None, None, tmp_path / "out",
                              manifest_path=corpora["speech"])
    assert len(result.entries) == 3 and result.error_fraction == 0.25
    errors = [json.loads(l) for l in (tmp_path / "out" / "errors.jsonl").read_text().splitlines()]
    assert errors[0]["id"] == "gone" and errors[0]["index"] == 3


def test_configuration_errors_abort_before_writing(tmp_path, corpora):
    entries = read_manifest(corpora["speech"])
    with pytest.raises(ConfigurationError):
        augment_manifest(entries, AugmentPolicy(p_aug=0.5), corpora["rir"], None, tmp_path / "a")
    with pytest.raises(ConfigurationError):
        augment_manifest(entries, PRESETS["qn-en-nr"], corpora["rir"], corpora["noise"], tmp_path / "b")
    dup = entries[:2] + entries[:1]
    with pytest.raises(ConfigurationError, match="duplicate"):
        augment_manifest(dup, AugmentPolicy(p_aug=0.0), None, None, tmp_path / "c")
    assert not (tmp_path / "a").exists() and not (tmp_path / "b").exists()


def test_resamples_non_canonical_input(tmp_path, rng):
    write_wav(tmp_path / "u.wav", random_speech(rng, 8000, 8000))
    m = tmp_path / "m.jsonl"
    write_manifest(m, [ManifestEntry("u.wav", 1.0, "hi")])
    r = augment_manifest(read_manifest(m), AugmentPolicy(p_aug=0.0), None, None, tmp_path / "out", manifest_path=m)
    out = read_wav(tmp_path / "out" / r.entries[0].audio_filepath)
    assert out.sample_rate_hz == 16000 and len(out) == 16000
