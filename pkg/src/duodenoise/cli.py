"""Command-line interface.

Subcommands: ``verify`` (exact self-checks), ``estimate`` (loss estimate of a
denoiser on a given noisy sequence), ``combine`` (run the combiner on one
sequence), ``experiment`` (full Monte Carlo experiment from a JSON config),
``influence`` (total influence of a smoothed functional).

Exit codes: 0 success, 1 validation/configuration error, 2 a ``verify``
check failed.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .channel import canonical_erasure_h, channel_from_json, compute_h, is_bec
from .combine import combined_denoise, randomized_combined_denoise
from .denoisers import SmoothingConfig
from .harness import (
    ConfigError,
    ExperimentConfig,
    denoiser_from_spec,
    denoiser_pair_from_spec,
    pointwise_influence,
    run_experiment,
)
from .losses import LossMatrix, erasure_estimate_loss, estimate_loss
from .rng import RngStream
from .verify import default_battery


def _parse_sequence(arg: str) -> np.ndarray:
    if arg.startswith("@"):
        return np.loadtxt(arg[1:], dtype=np.int64, ndmin=1)
    return np.array([int(s) for s in arg.replace(",", " ").split()], dtype=np.int64)


def _channel_h(args):
    channel = channel_from_json(json.loads(args.channel))
    if args.h == "canonical_erasure" or (args.h == "auto" and is_bec(channel)):
        h = canonical_erasure_h(channel)
    else:
        h = compute_h(channel)
    return channel, h


def _smoothing(args) -> SmoothingConfig:
    kwargs = {"mode": args.mode, "m": args.m}
    if args.q is not None:
        kwargs["q"] = args.q
    else:
        kwargs["nu"] = args.nu if args.nu is not None else 0.75
    return SmoothingConfig(**kwargs)


def cmd_verify(args) -> int:
    results = default_battery(args.n)
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail}")
    return 0 if all(r.passed for r in results) else 2


def cmd_estimate(args) -> int:
    channel, h = _channel_h(args)
    d = denoiser_from_spec(json.loads(args.denoiser), channel)
    lm = LossMatrix.hamming(channel.input_size)
    z = _parse_sequence(args.sequence)
    if args.erasure_form:
        value = erasure_estimate_loss(channel, lm, d, z)
    else:
        value = estimate_loss(channel, h, lm, d, z)
    print(f"{value:.12g}")
    return 0


def cmd_combine(args) -> int:
    channel, h = _channel_h(args)
    d1, d2 = denoiser_pair_from_spec(json.loads(args.pair), channel)
    lm = LossMatrix.hamming(channel.input_size)
    z = _parse_sequence(args.sequence)
    if args.randomized:
        cfg = _smoothing(args)
        out, sel, mask = randomized_combined_denoise(
            d1, d2, channel, h, lm, cfg, z, RngStream(args.seed)
        )
        extra = {"mask_weight": int(mask.sum())}
    else:
        out, sel = combined_denoise(d1, d2, channel, h, lm, z)
        extra = {}
    print(json.dumps({
        "chosen": sel.chosen_index,
        "estimates": list(sel.estimates),
        "tie": sel.tie,
        "output": out.tolist(),
        **extra,
    }))
    return 0


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    summary = run_experiment(cfg)
    json.dump(summary, sys.stdout, indent=1)
    print()
    return 0


def cmd_influence(args) -> int:
    cfg = _smoothing(args)
    z = (_parse_sequence(args.sequence) if args.sequence
         else np.zeros(args.n, dtype=np.int64))

    def parity(rows: np.ndarray) -> np.ndarray:
        return np.atleast_2d(rows).sum(axis=1) % 2

    rng = RngStream(args.seed) if args.mode == "monte_carlo" else None
    value, se = pointwise_influence(parity, cfg, z, rng)
    print(json.dumps({"influence": value, "se": se}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="duodenoise",
        description="Unbiased loss estimation and combination of denoisers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the exact self-check battery")
    p.add_argument("--n", type=int, default=8, help="block length for enumeration")
    p.set_defaults(func=cmd_verify)

    def channel_opts(p):
        p.add_argument("--channel", required=True, help="channel JSON")
        p.add_argument("--h", choices=("auto", "min_norm", "canonical_erasure"),
                       default="auto")

    def smoothing_opts(p):
        p.add_argument("--q", type=float, default=None, help="flip rate")
        p.add_argument("--nu", type=float, default=None, help="rate exponent, q = n^-nu")
        p.add_argument("--mode", choices=("exact", "monte_carlo"),
                       default="monte_carlo")
        p.add_argument("--m", type=int, default=128, help="Monte Carlo mask count")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("estimate", help="estimate a denoiser's loss on a sequence")
    channel_opts(p)
    p.add_argument("--denoiser", required=True, help="denoiser JSON")
    p.add_argument("--sequence", required=True,
                   help="comma/space separated symbols, or @file")
    p.add_argument("--erasure-form", action="store_true",
                   help="use the hypothetical-erasure shortcut (BEC only)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("combine", help="combine two denoisers on a sequence")
    channel_opts(p)
    p.add_argument("--pair", required=True, help="denoiser pair JSON")
    p.add_argument("--sequence", required=True)
    p.add_argument("--randomized", action="store_true")
    smoothing_opts(p)
    p.set_defaults(func=cmd_combine)

    p = sub.add_parser("experiment", help="run a Monte Carlo experiment config")
    p.add_argument("config", help="path to the experiment JSON file")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("influence",
                       help="total influence of the smoothed parity functional")
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--sequence", default=None)
    smoothing_opts(p)
    p.set_defaults(func=cmd_influence)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
