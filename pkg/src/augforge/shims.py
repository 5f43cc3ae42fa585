"""Transcoder shims that need nothing beyond this package.

    python -m augforge.shims identity IN OUT
    python -m augforge.shims g711 --law a-law IN OUT
"""
import argparse
import shutil
import sys

import numpy as np

from .wavio import read_wav, write_wav

MU = 255.0
A = 87.6


def mu_law(x: np.ndarray) -> np.ndarray:
    y = np.sign(x) * np.log1p(MU * np.abs(x)) / np.log1p(MU)
    q = np.round(y * 127.0) / 127.0
    return np.sign(q) * np.expm1(np.abs(q) * np.log1p(MU)) / MU


def a_law(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    norm = 1.0 + np.log(A)
    y = np.where(ax < 1.0 / A, A * ax / norm, (1.0 + np.log(np.maximum(A * ax, 1e-12))) / norm)
    q = np.round(np.sign(x) * y * 127.0) / 127.0
    aq = np.abs(q)
    lin = np.where(aq < 1.0 / norm, aq * norm / A, np.exp(aq * norm - 1.0) / A)
    return np.sign(q) * lin


def main(argv=None):
    parser = argparse.ArgumentParser(prog="augforge.shims")
    sub = parser.add_subparsers(dest="shim", required=True)
    ident = sub.add_parser("identity")
    ident.add_argument("src")
    ident.add_argument("dst")
    g711 = sub.add_parser("g711", help="8-bit logarithmic companding round trip")
    g711.add_argument("--law", choices=["a-law", "mu-law"], default="mu-law")
    g711.add_argument("src")
    g711.add_argument("dst")
    args = parser.parse_args(argv)
    if args.shim == "identity":
        shutil.copyfile(args.src, args.dst)
        return 0
    buf = read_wav(args.src)
    fn = a_law if args.law == "a-law" else mu_law
    write_wav(args.dst, buf.with_samples(fn(np.clip(buf.samples, -1.0, 1.0))))
    return 0


if __name__ == "__main__":
    sys.exit(main())
