"""Command-line interface: run sweeps, dump the LUT, bound a realization, demo a trial."""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from .channel import draw_realization
from .coarse import build_lut, coarse_estimate, correlate, detect_paths, detection_threshold, \
    mu_to_theta_deg
from .crlb import crlb_bounds, fisher_matrix, parameter_index
from .errors import ConfigurationError
from .harness import (RunConfig, load_config, run_sweep, run_trial, synthesize_trial,
                      write_outputs)
from .sage import run_sage

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamest",
        description="Two-stage beam-domain channel parameter estimation "
                    "(coarse DFT-grid stage plus SAGE refinement) with "
                    "Cramer-Rao bounds and a seeded Monte-Carlo harness.")
    sub = parser.add_subparsers(dest="command")

    def add_common(p):
        p.add_argument("--config", default="default",
                       help="path to a JSON run config, or 'default'")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--snr", default=None,
                       help="comma-separated SNR sweep in dB, e.g. '-10,0,10,20'")
        p.add_argument("--trials", type=int, default=None, help="trials per SNR point")
        p.add_argument("--out", default=None, help="output path override")
        p.add_argument("--threads", type=int, default=None,
                       help="worker processes (overrides the THREADS env var)")

    add_common(sub.add_parser("run", help="full Monte-Carlo sweep to CSV"))
    add_common(sub.add_parser("lut", help="dump the beam-ratio LUT to CSV"))
    add_common(sub.add_parser("crlb", help="bounds for one drawn realization"))
    add_common(sub.add_parser("demo", help="one verbose trial: truth vs coarse vs refined"))
    return parser


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        cfg = replace(cfg, scenario=replace(cfg.scenario, seed=args.seed))
    if args.snr is not None:
        try:
            sweep = tuple(float(tok) for tok in args.snr.split(",") if tok.strip())
        except ValueError as exc:
            raise ConfigurationError(f"bad --snr list {args.snr!r}: {exc}") from exc
        if not sweep:
            raise ConfigurationError("--snr produced an empty sweep")
        cfg = replace(cfg, snr_sweep_db=sweep)
    if args.trials is not None:
        cfg = replace(cfg, trials=args.trials)
    if args.out is not None:
        cfg = replace(cfg, output_path=args.out)
    return cfg


def _resolve_threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigurationError(f"bad THREADS value {env!r}") from exc
    return 1


def _cmd_run(cfg: RunConfig, args) -> int:
    threads = _resolve_threads(args)
    rows, records = run_sweep(cfg, threads=threads)
    path = write_outputs(cfg, rows, records)
    print(f"wrote {path} ({len(rows)} rows, {cfg.trials} trials x "
          f"{len(cfg.snr_sweep_db)} SNR points, threads={threads})")
    return EXIT_OK


def _cmd_lut(cfg: RunConfig, args) -> int:
    lut = build_lut(cfg.array, cfg.coarse.k_points)
    out = args.out
    fh = open(out, "w", encoding="utf-8", newline="") if out else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("l", "mu_offset_rad", "ratio"))
        for l, ratio in enumerate(lut.ratios):
            writer.writerow((l, format(l * lut.delta_mu, ".12g"), format(ratio, ".12g")))
    finally:
        if out:
            fh.close()
    if out:
        print(f"wrote {out} ({lut.k_points + 2} rows)")
    return EXIT_OK


def _cmd_crlb(cfg: RunConfig, args) -> int:
    scen = replace(cfg.scenario, snr_db=float(cfg.snr_sweep_db[0]))
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(scen.seed, 0, 0)))
    real = draw_realization(scen, rng, cfg.array.spacing_over_lambda)
    report = crlb_bounds(fisher_matrix(real, cfg.array, cfg.cazac))
    print(f"# condition number {report.condition_number:.6g}, "
          f"invertible={report.invertible}")
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(("path", "parameter", "truth", "sqrt_crlb"))
    names = (("re", "gain_re"), ("im", "gain_im"), ("mu", "mu_rad"), ("tau", "tau_symbols"))
    gains = real.gains()
    for r, p in enumerate(real.paths):
        truths = {"gain_re": gains[r].real, "gain_im": gains[r].imag,
                  "mu_rad": p.mu, "tau_symbols": p.tau_symbols}
        for kind, label in names:
            bound = report.bounds[parameter_index(kind, r, real.r)]
            writer.writerow((r, label, format(truths[label], ".10g"),
                             format(bound, ".10g") if report.invertible else "nan"))
    return EXIT_OK


def _cmd_demo(cfg: RunConfig, args) -> int:
    snr_db = float(cfg.snr_sweep_db[0])
    print(f"single trial at SNR {snr_db:+.1f} dB, seed {cfg.scenario.seed}")
    rec = run_trial(cfg, 0, 0)
    real, y, noise_eff = synthesize_trial(cfg, 0, 0)
    guard_noise = noise_eff if noise_eff > 0 else 1.0

    pm = correlate(y)
    detections = detect_paths(pm, detection_threshold(guard_noise, cfg.array.m,
                                                      cfg.coarse.p_fa))
    print(f"truth paths ({real.r}):")
    for i, p in enumerate(real.paths):
        print(f"  [{i}] theta {p.theta_deg:+8.3f} deg  tau {p.tau_symbols:7.3f} sym  "
              f"|alpha| {abs(p.alpha):.4f}")
    if not detections:
        print("no diagonal cleared the detection threshold")
        return EXIT_OK
    lut = build_lut(cfg.array, cfg.coarse.k_points)
    coarse = coarse_estimate(pm, detections, lut, cfg.array, cfg.cazac,
                             guard_noise, v=cfg.coarse.v, p_fa=cfg.coarse.p_fa)
    print(f"coarse estimate (model order {coarse.r_hat}):")
    for i, p in enumerate(coarse.paths):
        print(f"  [{i}] theta {p.theta_hat_deg:+8.3f} deg  tau {p.tau_int:7d} sym  "
              f"beam {p.k_index:2d}  peak {p.peak_power:12.2f}")
    refined = run_sage(y, coarse, cfg.sage, guard_noise)
    print(f"refined estimate ({refined.iterations} iterations, "
          f"converged={refined.converged}):")
    for i, p in enumerate(refined.paths):
        print(f"  [{i}] theta {mu_to_theta_deg(p.mu_hat):+8.3f} deg  "
              f"tau {p.tau_hat:7.3f} sym  |gain| {abs(p.alpha_hat):.4f}")
    print(f"detection status: {rec.detection_status}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    if not argv:
        parser.print_help()
        return EXIT_CONFIG
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_CONFIG
    try:
        cfg = _apply_overrides(load_config(args.config), args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        handler = {"run": _cmd_run, "lut": _cmd_lut, "crlb": _cmd_crlb, "demo": _cmd_demo}
        return handler[args.command](cfg, args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
