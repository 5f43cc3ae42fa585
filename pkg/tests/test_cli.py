import json
import subprocess
import sys

import pytest

from augforge.cli import dispatch
from augforge.corpus import read_manifest
from augforge.evaluate import read_report_csv
from augforge.features import read_features

from test_augment import tree_digest

SUBCOMMANDS = ["prepare-noise", "augment", "transcode", "featurize", "simulate-testset", "evaluate", "sweep-report"]


@pytest.fixture(scope="module")
def prepared(mini_corpus, tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert dispatch(["prepare-noise", "--input-dir", str(mini_corpus["noise"]), "--chunk-secs", "2",
                     "--out", str(d / "noise.jsonl")]) == 0
    assert dispatch(["prepare-noise", "--input-dir", str(mini_corpus["rir"]), "--kind", "rir",
                     "--out", str(d / "rir.jsonl")]) == 0
    assert dispatch(["prepare-noise", "--input-dir", str(mini_corpus["speech"]), "--kind", "speech",
                     "--out", str(d / "speech.jsonl")]) == 0
    return d


def test_help_lists_subcommands(capsys):
    assert dispatch(["--help"]) == 0
    text = capsys.readouterr().out
    for name in SUBCOMMANDS:
        assert name in text


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "augforge.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "simulate-testset" in proc.stdout


def test_usage_errors_exit_2(capsys):
    assert dispatch(["augment", "--policy", "qn-en", "--out-dir", "x"]) == 2
    assert "--manifest" in capsys.readouterr().err
    assert dispatch(["frobnicate"]) == 2
    assert dispatch(["augment", "--bogus-flag", "1"]) == 2


def test_prepare_noise_summary(prepared):
    summary = json.loads((prepared / "noise.jsonl.run.json").read_text())
    assert summary["counts"]["count"] == 12  # 4 files x 6 s in 2 s chunks
    assert len(read_manifest(prepared / "noise.jsonl")) == 12


def test_augment_run_and_replay(prepared, tmp_path):
    argv = ["augment", "--manifest", str(prepared / "speech.jsonl"), "--noise", str(prepared / "noise.jsonl"),
            "--rir", str(prepared / "rir.jsonl"), "--policy", "qn-en-nr", "--out-dir", str(tmp_path / "a"),
            "--workers", "2", "--codec-shim", "{python} -m augforge.shims identity {in} {out}"]
    assert dispatch(argv) == 0
    summary = json.loads((tmp_path / "a" / "run_summary.json").read_text())
    assert summary["counts"]["count"] == 10
    assert isinstance(summary["seed"], int)
    replay = [a if a != str(tmp_path / "a") else str(tmp_path / "b") for a in summary["argv"]]
    assert dispatch(replay) == 0
    (tmp_path / "a" / "run_summary.json").unlink()
    (tmp_path / "b" / "run_summary.json").unlink()
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")


def test_config_file_supplies_and_flags_override(prepared, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"seed": 4, "augment": {"manifest": str(prepared / "speech.jsonl"),
                                                      "policy": "qn-en", "workers": 1}}))
    out = tmp_path / "o"
    assert dispatch(["--config", str(cfg), "augment", "--out-dir", str(out), "--seed", "5"]) == 0
    summary = json.loads((out / "run_summary.json").read_text())
    assert summary["seed"] == 5 and summary["parameters"]["policy"] == "qn-en"


def test_operational_failures_exit_1(prepared, tmp_path):
    assert dispatch(["augment", "--manifest", str(tmp_path / "nope.jsonl"), "--policy", "qn-en",
                     "--seed", "1", "--out-dir", str(tmp_path / "o")]) == 1
    # codec augmentation requested without a shim
    assert dispatch(["augment", "--manifest", str(prepared / "speech.jsonl"), "--noise",
                     str(prepared / "noise.jsonl"), "--rir", str(prepared / "rir.jsonl"), "--policy", "qn-en-nr",
                     "--seed", "1", "--out-dir", str(tmp_path / "o2")]) == 1


def test_error_fraction_threshold(prepared, tmp_path):
    entries = (prepared / "speech.jsonl").read_text().splitlines()
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join(entries[:3] + ['{"audio_filepath": "/no/such.wav", "duration": 1.0, "text": ""}']) + "\n")
    base = ["augment", "--manifest", str(bad), "--policy", "qn-en", "--seed", "1"]
    assert dispatch(base + ["--out-dir", str(tmp_path / "strict")]) == 1
    assert dispatch(base + ["--out-dir", str(tmp_path / "lenient"), "--max-error-fraction", "0.5"]) == 0
    assert json.loads((tmp_path / "lenient" / "run_summary.json").read_text())["counts"]["errors"] == 1


def test_transcode_subcommand(mini_corpus, tmp_path):
    src = sorted(mini_corpus["speech"].glob("*.wav"))[0]
    out = tmp_path / "t.wav"
    assert dispatch(["transcode", "--in", str(src), "--out", str(out), "--family", "OGG_VORBIS", "--seed", "3",
                     "--shim", "{python} -m augforge.shims identity {in} {out}"]) == 0
    assert out.read_bytes() == src.read_bytes()
    summary = json.loads((tmp_path / "t.wav.run.json").read_text())
    assert summary["counts"]["setting"]["family"] == "OGG_VORBIS"
    assert dispatch(["transcode", "--in", str(src), "--out", str(out), "--family", "AMR_NB", "--value", "4.75",
                     "--shim", "{python} -m augforge.shims identity {in} {out}"]) == 1  # needs 8 kHz input


def test_featurize_subcommand(prepared, tmp_path):
    assert dispatch(["featurize", "--manifest", str(prepared / "speech.jsonl"), "--out-dir", str(tmp_path / "f"),
                     "--speccutout", "--seed", "8"]) == 0
    entries = read_manifest(tmp_path / "f" / "manifest.jsonl")
    assert len(entries) == 10
    spec = read_features(tmp_path / "f" / entries[0].extra["feature_filepath"])
    assert spec.shape == (149, 64)


def test_simulate_evaluate_sweep(prepared, tmp_path):
    sim = tmp_path / "sim"
    assert dispatch(["simulate-testset", "--testset", str(prepared / "speech.jsonl"), "--noise",
                     str(prepared / "noise.jsonl"), "--types", "babble,music", "--snrs", "0,10",
                     "--iterations", "2", "--seed", "4", "--out-dir", str(sim)]) == 0
    summary = json.loads((sim / "run_summary.json").read_text())
    assert summary["counts"]["count"] == 8 and summary["counts"]["per_snr"] == {"0": 4, "10": 4}
    reports = tmp_path / "reports"
    reports.mkdir()
    for manifest in sorted(sim.glob("*.jsonl")):
        hyps = tmp_path / f"{manifest.stem}.hyp.jsonl"
        lines = [json.dumps({"id": e.utterance_id, "text": " ".join(e.text.split()[1:])})
                 for e in read_manifest(manifest)]
        hyps.write_text("\n".join(lines) + "\n")
        assert dispatch(["evaluate", "--refs", str(manifest), "--hyps", str(hyps),
                         "--out", str(reports / f"{manifest.stem}.csv")]) == 0
    refs = read_manifest(sorted(sim.glob("*.jsonl"))[0])
    expected = 100 * len(refs) / sum(len(e.text.split()) for e in refs)
    assert read_report_csv(reports / "babble_snr0_iter1.csv") == pytest.approx(expected, abs=1e-4)
    assert dispatch(["sweep-report", "--in", str(reports), "--out", str(tmp_path / "sweep.csv")]) == 0
    means = (tmp_path / "means.csv").read_text().splitlines()
    assert means[0] == "snr_db,mean_wer_percent,n_cells"
    assert [l.split(",")[0] for l in means[1:]] == ["0", "10"]
