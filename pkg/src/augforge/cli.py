"""``augforge`` command line.

Exit status: 0 on success, 1 on operational failure, 2 on usage errors.
Every run writes a JSON run summary next to its outputs.
"""
from __future__ import annotations

import argparse
import json
import logging
import secrets
import sys
import time
from pathlib import Path

from . import __version__
from .augment import augment_manifest, load_policy
from .codec import CodecSetting, CodecShim, choose_setting, parse_family, transcode_detailed
from .corpus import AudioCorpus, build_manifest, read_manifest
from .errors import AugforgeError
from .evaluate import (aggregate_sweep, collect_sweep_reports, read_hypotheses, score,
                       write_report_csv, write_sweep_csv)
from .features import CutoutConfig, FeatureConfig, featurize_manifest
from .rng import keyed_rng
from .testset import SimPlan, simulate
from .wavio import read_wav, write_wav

log = logging.getLogger("augforge")

SUMMARY_NAME = "run_summary.json"

# Options that must come from the command line or the config file.
REQUIRED = {
    "prepare-noise": ["input_dir", "out"],
    "augment": ["manifest", "policy", "out_dir"],
    "transcode": ["input", "output", "family", "shim"],
    "featurize": ["manifest", "out_dir"],
    "simulate-testset": ["testset", "noise", "types", "snrs", "out_dir"],
    "evaluate": ["refs", "hyps", "out"],
    "sweep-report": ["input", "out"],
}

DEFAULTS = {
    "prepare-noise": {"chunk_secs": 20.0, "min_chunk_secs": 1.0, "kind": "noise"},
    "augment": {"workers": 1, "max_error_fraction": 0.0, "shim_timeout": 60},
    "transcode": {"shim_timeout": 60},
    "featurize": {"workers": 1, "speccutout": False, "cutout_rects": 5,
                  "cutout_max_freq": 15, "cutout_max_time": 25, "max_error_fraction": 0.0},
    "simulate-testset": {"iterations": 5, "narrowband": False, "workers": 1},
    "evaluate": {"mode": "word"},
    "sweep-report": {},
}


def _csv_list(text):
    return [t.strip() for t in str(text).split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="augforge", description="Speech augmentation and noisy-set evaluation.")
    p.add_argument("--version", action="version", version=f"augforge {__version__}")
    p.add_argument("--config", help="JSON run config; flags override it")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    p.add_argument("--log-json", action="store_true", help="emit log records as JSON lines")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    s = sub.add_parser("prepare-noise", help="chunk a noise directory into a manifest")
    s.add_argument("--input-dir")
    s.add_argument("--chunk-secs", type=float)
    s.add_argument("--min-chunk-secs", type=float)
    s.add_argument("--kind", choices=["noise", "rir", "speech"])
    s.add_argument("--out")

    s = sub.add_parser("augment", help="augment a speech manifest")
    s.add_argument("--manifest")
    s.add_argument("--noise", help="noise manifest")
    s.add_argument("--rir", help="RIR manifest")
    s.add_argument("--policy", help="preset name or policy JSON")
    s.add_argument("--seed", type=int)
    s.add_argument("--out-dir")
    s.add_argument("--workers", type=int)
    s.add_argument("--codec-shim", help="transcoder command template")
    s.add_argument("--shim-timeout", type=int)
    s.add_argument("--max-error-fraction", type=float)

    s = sub.add_parser("transcode", help="round-trip one WAV file through a codec shim")
    s.add_argument("--in", dest="input")
    s.add_argument("--out", dest="output")
    s.add_argument("--family")
    s.add_argument("--value", help="codec setting; drawn at random when omitted")
    s.add_argument("--seed", type=int)
    s.add_argument("--shim")
    s.add_argument("--shim-timeout", type=int)

    s = sub.add_parser("featurize", help="extract log-mel feature files")
    s.add_argument("--manifest")
    s.add_argument("--out-dir")
    s.add_argument("--speccutout", action="store_true", default=None)
    s.add_argument("--cutout-rects", type=int)
    s.add_argument("--cutout-max-freq", type=int)
    s.add_argument("--cutout-max-time", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--max-error-fraction", type=float)

    s = sub.add_parser("simulate-testset", help="generate noisy copies of a test set")
    s.add_argument("--testset")
    s.add_argument("--noise", help="noise manifest with noise_type labels")
    s.add_argument("--types", type=_csv_list)
    s.add_argument("--snrs", type=lambda v: [float(x) for x in _csv_list(v)])
    s.add_argument("--iterations", type=int)
    s.add_argument("--narrowband", action="store_true", default=None)
    s.add_argument("--seed", type=int)
    s.add_argument("--out-dir")
    s.add_argument("--workers", type=int)

    s = sub.add_parser("evaluate", help="score hypotheses against a reference manifest")
    s.add_argument("--refs")
    s.add_argument("--hyps")
    s.add_argument("--mode", choices=["word", "char"])
    s.add_argument("--out")

    s = sub.add_parser("sweep-report", help="aggregate per-cell reports into sweep CSVs")
    s.add_argument("--in", dest="input")
    s.add_argument("--out")
    return p


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        return json.dumps({"time": round(record.created, 3), "level": record.levelname,
                           "logger": record.name, "message": record.getMessage()})


def _setup_logging(level: str, as_json: bool):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonFormatter() if as_json else logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("augforge")
    root.handlers[:] = [handler]
    root.setLevel(level)
    root.propagate = False


def _merge_config(parser: argparse.ArgumentParser, args: argparse.Namespace) -> dict:
    config = {}
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
    section = dict(config.get(args.command, {}))
    flat = {k: v for k, v in config.items() if not isinstance(v, dict)}
    layered = {**DEFAULTS[args.command], **flat, **section}
    for key, value in layered.items():
        key = key.replace("-", "_")
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, value)
    missing = [k for k in REQUIRED[args.command] if getattr(args, k, None) in (None, [])]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        parser.error(f"{args.command}: missing required option(s): {flags}")
    return config


def _resolve_seed(args) -> bool:
    """Fill in a random seed when none was given; True if generated."""
    if getattr(args, "seed", None) is None:
        args.seed = secrets.randbits(63)
        log.info("no --seed given, using %d", args.seed)
        return True
    return False


def _write_summary(path: Path, argv, args, counts: dict, started: float, status: int, config: dict):
    params = {k: v for k, v in vars(args).items() if k not in ("config",)}
    replay = list(argv)
    if "seed" in params and "--seed" not in replay:
        replay += ["--seed", str(params["seed"])]
    summary = {
        "tool": "augforge",
        "version": __version__,
        "command": args.command,
        "argv": replay,
        "parameters": params,
        "config": config,
        "seed": params.get("seed"),
        "counts": counts,
        "exit_status": status,
        "wall_time_secs": round(time.time() - started, 3),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=2, default=str) + "\n", encoding="utf-8")


def _status_for(errors: int, total: int, threshold: float) -> int:
    if errors == 0:
        return 0
    return 1 if errors / max(total, 1) > threshold else 0


def cmd_prepare_noise(args):
    entries, summary = build_manifest(args.input_dir, args.kind, args.out, args.chunk_secs, args.min_chunk_secs)
    log.info("%d entries from %d files, %.3f h", summary.count, summary.files, summary.total_hours)
    counts = {"count": summary.count, "files": summary.files, "total_hours": summary.total_hours}
    return 0, counts, Path(str(args.out) + ".run.json")


def _shim(template, timeout):
    return CodecShim(template, timeout) if template else None


def cmd_augment(args):
    policy = load_policy(args.policy).with_seed(args.seed)
    entries = read_manifest(args.manifest)
    noise = AudioCorpus.from_manifest(args.noise) if args.noise else None
    rirs = AudioCorpus.from_manifest(args.rir) if args.rir else None
    result = augment_manifest(entries, policy, rirs, noise, args.out_dir, args.workers,
                              _shim(args.codec_shim, args.shim_timeout), manifest_path=args.manifest)
    counts = {"count": len(result.entries), "input": result.n_input, "errors": len(result.errors),
              "noise_augmented": result.n_applied, "codec_augmented": result.n_codec,
              "policy": policy.to_dict()}
    status = _status_for(len(result.errors), result.n_input, args.max_error_fraction)
    return status, counts, Path(args.out_dir) / SUMMARY_NAME


def cmd_transcode(args):
    family = parse_family(args.family)
    if args.value is None:
        _resolve_seed(args)
        setting = choose_setting(family, keyed_rng(args.seed, "transcode"))
    else:
        setting = CodecSetting(family, args.value)
    buf = read_wav(args.input)
    result = transcode_detailed(buf, setting, CodecShim(args.shim, args.shim_timeout))
    write_wav(args.output, result.audio)
    counts = {"count": 1, "setting": setting.to_dict(), "encoded_bytes": result.encoded_bytes,
              "input_samples": len(buf), "output_samples": len(result.audio)}
    return 0, counts, Path(str(args.output) + ".run.json")


def cmd_featurize(args):
    cutout = None
    if args.speccutout:
        _resolve_seed(args)
        cutout = CutoutConfig(args.cutout_rects, args.cutout_max_freq, args.cutout_max_time)
    entries = read_manifest(args.manifest)
    done, errors = featurize_manifest(entries, args.out_dir, FeatureConfig(), cutout,
                                      args.seed or 0, args.workers, manifest_path=args.manifest)
    for err in errors:
        log.warning("featurize failed for %s: %s", err["id"], err["message"])
    status = _status_for(len(errors), len(entries), args.max_error_fraction)
    return status, {"count": len(done), "errors": len(errors)}, Path(args.out_dir) / SUMMARY_NAME


def cmd_simulate(args):
    plan = SimPlan(tuple(args.snrs), tuple(args.types), args.iterations, bool(args.narrowband), args.seed)
    entries = read_manifest(args.testset)
    noise = AudioCorpus.from_manifest(args.noise)
    manifests = simulate(entries, noise, plan, args.out_dir, args.workers, manifest_path=args.testset)
    counts = {"count": len(manifests), "utterances_per_set": len(entries),
              "per_snr": {f"{s:g}": sum(1 for c in manifests if c[0] == s) for s in plan.snr_list_db}}
    return 0, counts, Path(args.out_dir) / SUMMARY_NAME


def cmd_evaluate(args):
    report = score(read_manifest(args.refs), read_hypotheses(args.hyps), args.mode)
    write_report_csv(args.out, report)
    log.info("%s error rate %.2f%% over %d tokens", args.mode, report.error_rate_percent, report.n_ref_tokens)
    return 0, {"count": report.n_utterances, **report.to_dict()}, Path(str(args.out) + ".run.json")


def cmd_sweep_report(args):
    summary = aggregate_sweep(collect_sweep_reports(args.input))
    means_path = write_sweep_csv(args.out, summary)
    counts = {"count": len(summary.rows), "missing": [list(m) for m in summary.missing],
              "means": {f"{s:g}": m for s, m in summary.means.items()}, "means_csv": str(means_path)}
    return 0, counts, Path(str(args.out) + ".run.json")


HANDLERS = {
    "prepare-noise": cmd_prepare_noise,
    "augment": cmd_augment,
    "transcode": cmd_transcode,
    "featurize": cmd_featurize,
    "simulate-testset": cmd_simulate,
    "evaluate": cmd_evaluate,
    "sweep-report": cmd_sweep_report,
}

RANDOMIZED = {"augment", "simulate-testset"}


def dispatch(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = _merge_config(parser, args)
    except SystemExit as exc:
        return int(exc.code or 0)
    _setup_logging(args.log_level, args.log_json)
    if args.command in RANDOMIZED:
        _resolve_seed(args)
    started = time.time()
    try:
        status, counts, summary_path = HANDLERS[args.command](args)
    except (AugforgeError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return 1
    _write_summary(summary_path, argv, args, counts, started, status, config)
    return status


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
