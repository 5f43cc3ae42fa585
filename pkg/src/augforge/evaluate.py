"""Greedy CTC decoding, edit-distance alignment and pooled WER/CER scoring."""
from __future__ import annotations

import csv
import json
import logging
import re
import string
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np

from .corpus import ManifestEntry
from .errors import InvalidArgument, ScoringError

log = logging.getLogger(__name__)

# ASCII punctuation except the apostrophe (keeps "don't"), plus common CJK marks.
DEFAULT_PUNCTUATION = string.punctuation.replace("'", "") + "，。！？、；：“”‘’（）《》【】…\u2014"


def ctc_greedy_decode(log_probs, vocab: Sequence[str], blank_index: int = 0) -> str:
    """Best-path CTC decoding: argmax per frame, merge repeats, drop blanks."""
    lp = np.asarray(log_probs)
    if lp.ndim != 2:
        raise InvalidArgument("log_probs must be a frames x vocab matrix")
    if lp.shape[1] != len(vocab):
        raise InvalidArgument(f"matrix has {lp.shape[1]} columns but vocab has {len(vocab)} symbols")
    if not 0 <= blank_index < len(vocab):
        raise InvalidArgument(f"blank index {blank_index} outside vocab")
    if lp.shape[0] == 0:
        return ""
    path = np.argmax(lp, axis=1)  # first maximum wins ties
    out = []
    prev = -1
    for idx in path:
        if idx != prev and idx != blank_index:
            out.append(vocab[idx])
        prev = idx
    return "".join(out)


@dataclass(frozen=True)
class Alignment:
    substitutions: int
    deletions: int
    insertions: int
    ops: tuple[tuple[str, object, object], ...]  # (op, ref_token, hyp_token); op in = S D I

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions


def align(ref: Sequence, hyp: Sequence) -> Alignment:
    """Unit-cost Levenshtein alignment.

    Backtracking prefers the diagonal (match/substitution), then deletion,
    then insertion, which makes the returned alignment canonical.
    """
    n, m = len(ref), len(hyp)
    d = np.zeros((n + 1, m + 1), dtype=np.int64)
    d[:, 0] = np.arange(n + 1)
    d[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        r = ref[i - 1]
        row, prev = d[i], d[i - 1]
        for j in range(1, m + 1):
            row[j] = min(prev[j - 1] + (r != hyp[j - 1]), prev[j] + 1, row[j - 1] + 1)
    ops = []
    s = dl = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i, j] == d[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            same = ref[i - 1] == hyp[j - 1]
            ops.append(("=" if same else "S", ref[i - 1], hyp[j - 1]))
            s += not same
            i, j = i - 1, j - 1
        elif i > 0 and d[i, j] == d[i - 1, j] + 1:
            ops.append(("D", ref[i - 1], None))
            dl += 1
            i -= 1
        else:
            ops.append(("I", None, hyp[j - 1]))
            ins += 1
            j -= 1
    ops.reverse()
    return Alignment(s, dl, ins, tuple(ops))


@dataclass(frozen=True)
class WerReport:
    n_ref_tokens: int
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    n_utterances: int = 0

    def __post_init__(self):
        if min(self.substitutions, self.deletions, self.insertions) < 0:
            raise InvalidArgument("error counts must be non-negative")
        if self.n_ref_tokens <= 0:
            raise InvalidArgument("a report needs at least one reference token")

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def error_rate_percent(self) -> float:
        return 100.0 * self.errors / self.n_ref_tokens

    def __add__(self, other: "WerReport") -> "WerReport":
        return WerReport(self.n_ref_tokens + other.n_ref_tokens, self.substitutions + other.substitutions,
                         self.deletions + other.deletions, self.insertions + other.insertions,
                         self.n_utterances + other.n_utterances)

    def to_dict(self) -> dict:
        return {"n_ref_tokens": self.n_ref_tokens, "substitutions": self.substitutions,
                "deletions": self.deletions, "insertions": self.insertions,
                "n_utterances": self.n_utterances, "error_rate_percent": self.error_rate_percent}


Mode = Literal["word", "char"]


def normalize(text: str, punctuation: str = DEFAULT_PUNCTUATION) -> str:
    text = text.lower()
    if punctuation:
        text = text.translate({ord(c): " " for c in punctuation})
    return " ".join(text.split())


def tokenize(text: str, mode: Mode = "word", punctuation: str = DEFAULT_PUNCTUATION) -> list[str]:
    text = normalize(text, punctuation)
    if mode == "word":
        return text.split()
    if mode == "char":
        return [c for c in text if not c.isspace()]
    raise InvalidArgument(f"unknown scoring mode {mode!r}")


def score_pairs(pairs: Iterable[tuple[str, str]], mode: Mode = "word",
                punctuation: str = DEFAULT_PUNCTUATION) -> WerReport:
    """Pool S/D/I and reference lengths over (ref, hyp) pairs, then take one ratio."""
    n_ref = s = d = i = n_utt = 0
    for ref, hyp in pairs:
        r, h = tokenize(ref, mode, punctuation), tokenize(hyp, mode, punctuation)
        a = align(r, h)
        n_ref += len(r)
        s, d, i = s + a.substitutions, d + a.deletions, i + a.insertions
        n_utt += 1
    if n_ref == 0:
        raise InvalidArgument("references contain no tokens; error rate is undefined")
    return WerReport(n_ref, s, d, i, n_utt)


def score(refs: list[ManifestEntry], hyps: dict[str, str], mode: Mode = "word",
          punctuation: str = DEFAULT_PUNCTUATION) -> WerReport:
    """Corpus-level error rate of ``hyps`` (id -> text) against a reference manifest."""
    ref_ids = [e.utterance_id for e in refs]
    missing = [u for u in ref_ids if u not in hyps]
    extra = sorted(set(hyps) - set(ref_ids))
    if missing or extra:
        parts = []
        if missing:
            parts.append(f"no hypothesis for: {', '.join(missing[:20])}")
        if extra:
            parts.append(f"no reference for: {', '.join(extra[:20])}")
        raise ScoringError("; ".join(parts))
    return score_pairs(((e.text, hyps[e.utterance_id]) for e in refs), mode, punctuation)


def read_hypotheses(path) -> dict[str, str]:
    """JSON lines ``{"id": ..., "text": ...}`` or two-column ``id<TAB>text``."""
    hyps = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.lstrip().startswith("{"):
                try:
                    rec = json.loads(line)
                    uid, text = str(rec["id"]), rec.get("text", "") or ""
                except (json.JSONDecodeError, KeyError) as exc:
                    raise ScoringError(f"{path}:{line_no}: bad hypothesis record ({exc})") from None
            else:
                uid, _, text = line.partition("\t")
            if uid in hyps:
                raise ScoringError(f"{path}:{line_no}: duplicate hypothesis id {uid!r}")
            hyps[uid] = text
    return hyps


def write_report_csv(path, report: WerReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["n_utterances", "n_ref_tokens", "substitutions", "deletions", "insertions", "wer_percent"])
        w.writerow([report.n_utterances, report.n_ref_tokens, report.substitutions, report.deletions,
                    report.insertions, f"{report.error_rate_percent:.4f}"])


def read_report_csv(path) -> float:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    if len(rows) != 1 or "wer_percent" not in rows[0]:
        raise InvalidArgument(f"{path} is not a single-report CSV")
    return float(rows[0]["wer_percent"])


# -- sweep aggregation -------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    snr_db: float
    noise_type: str
    iteration: int
    error_rate_percent: float


@dataclass
class SweepSummary:
    rows: list[SweepRow]
    means: dict[float, float]
    counts: dict[float, int]
    missing: list[tuple[float, str, int]]


def _rate(value) -> float:
    return value.error_rate_percent if isinstance(value, WerReport) else float(value)


def aggregate_sweep(reports: dict[tuple[float, str, int], WerReport | float],
                    expected: Iterable[tuple[float, str, int]] | None = None) -> SweepSummary:
    """Raw rows plus the mean error rate per SNR over types and iterations.

    Without ``expected`` the grid is taken as the product of the observed
    types and iterations at each observed SNR. Missing cells are listed, not
    filled in.
    """
    if not reports:
        log.warning("sweep aggregation got no reports")
        return SweepSummary([], {}, {}, [])
    rows = sorted((SweepRow(float(s), str(t), int(k), _rate(v)) for (s, t, k), v in reports.items()),
                  key=lambda r: (r.snr_db, r.noise_type, r.iteration))
    if expected is None:
        snrs = sorted({r.snr_db for r in rows})
        types = sorted({r.noise_type for r in rows})
        iters = sorted({r.iteration for r in rows})
        expected = [(s, t, k) for s in snrs for t in types for k in iters]
    present = {(r.snr_db, r.noise_type, r.iteration) for r in rows}
    missing = sorted((float(s), str(t), int(k)) for s, t, k in expected
                     if (float(s), str(t), int(k)) not in present)
    by_snr = defaultdict(list)
    for r in rows:
        by_snr[r.snr_db].append(r.error_rate_percent)
    means = {s: float(np.mean(v)) for s, v in sorted(by_snr.items())}
    counts = {s: len(v) for s, v in sorted(by_snr.items())}
    for s, t, k in missing:
        log.warning("sweep cell missing: snr=%g type=%s iteration=%d", s, t, k)
    return SweepSummary(rows, means, counts, missing)


_CELL_RE = re.compile(r"^(?P<type>.+)_snr(?P<snr>-?[0-9.]+(?:e-?[0-9]+)?)_iter(?P<iter>\d+)$")


def parse_cell_name(stem: str) -> tuple[float, str, int] | None:
    m = _CELL_RE.match(stem)
    if not m:
        return None
    return float(m["snr"]), m["type"], int(m["iter"])


def collect_sweep_reports(directory) -> dict[tuple[float, str, int], float]:
    """Read every ``{type}_snr{snr}_iter{k}.csv`` report under ``directory``."""
    out = {}
    for path in sorted(Path(directory).glob("*.csv")):
        cell = parse_cell_name(path.stem)
        if cell is not None:
            out[cell] = read_report_csv(path)
    return out


def write_sweep_csv(path, summary: SweepSummary) -> Path:
    """Write raw rows to ``path`` and per-SNR means to ``means.csv`` beside it."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["snr_db", "noise_type", "iteration", "wer_percent"])
        for r in summary.rows:
            w.writerow([f"{r.snr_db:g}", r.noise_type, r.iteration, f"{r.error_rate_percent:.4f}"])
    means_path = path.with_name("means.csv")
    with open(means_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["snr_db", "mean_wer_percent", "n_cells"])
        for s, m in summary.means.items():
            w.writerow([f"{s:g}", f"{m:.4f}", summary.counts[s]])
    return means_path
