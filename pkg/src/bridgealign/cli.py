"""Command-line harness: gradcheck, simulate, train, eval, track-demo, sweep.

Exit codes: 0 success, 1 validation failure, 2 numerical failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .config import ConfigError, RunConfig, load_config
from .gradcheck import run_gradcheck
from .metrics import association_accuracy, write_metrics_csv
from .simulator import generate_category_bank, generate_video
from .tensorio import TensorFormatError
from .tracker import window_inference

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

logger = logging.getLogger("bridgealign")


def _setup_logging():
    level = os.environ.get("BRIDGEALIGN_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, sim=dataclasses.replace(cfg.sim, seed=args.seed),
                                  train=dataclasses.replace(cfg.train, seed=args.seed))
    return cfg


def _out(args, default: str) -> Path:
    return Path(args.out) if args.out else Path(default)


def cmd_gradcheck(args) -> int:
    seed = 0 if args.seed is None else args.seed
    report = run_gradcheck(seed, args.trials, args.eps, corrupt=args.corrupt_gradient)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK if report["passed"] else EXIT_NUMERICAL


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _out(args, "data")
    data = pipeline.simulate(cfg)
    pipeline.save_sim(out, data, cfg)
    print(f"wrote {len(data.train)} training and {len(data.heldout)} held-out videos to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    out = _out(args, "run")
    data = pipeline.load_sim(args.data)
    projector, history = pipeline.train(cfg, data)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.save_projector(out / "projector.bin", projector)
    (out / "history.csv").write_text(pipeline.history_csv(history))
    first, last = history[0]["total"], history[-1]["total"]
    print(f"total loss {first:.5f} -> {last:.5f} (ratio {last / first:.4f}); wrote {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    data = pipeline.load_sim(args.data)
    if args.projector:
        projector = pipeline.load_projector(args.projector)
    else:
        logger.info("no --projector given; evaluating the untrained initial projector")
        projector = pipeline.initial_projector(cfg)
    rows = pipeline.evaluate(cfg, data, projector, args.config_id)
    text = write_metrics_csv(rows)
    out = _out(args, "metrics.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_track_demo(args) -> int:
    cfg = _config(args)
    sim = dataclasses.replace(cfg.sim, noise_sigma=args.noise, shuffle=True)
    bank = generate_category_bank(np.random.default_rng([sim.seed, 1]), sim.C, sim.d_out, sim.max_similarity)
    rng = np.random.default_rng([sim.seed, 5])
    video = generate_video(sim, bank, rng, rng.integers(0, sim.C, sim.instances_per_video))
    window = args.window or cfg.eval.window
    tracks, _ = window_inference(video.frames, window)
    acc = association_accuracy(tracks, video.gt_identities)
    out = _out(args, "tracks.json")
    out.write_text(tracks.to_json() + "\n")
    print(f"tracked {video.n_instances} instances over {video.n_frames} frames "
          f"(window {window}, noise {args.noise:g}): association accuracy {acc:.4f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    rows = pipeline.run_sweep(cfg, threads=args.threads)
    out = _out(args, "sweep.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(pipeline.sweep_csv(rows))
    trend = pipeline.sweep_trend(rows)
    out.with_suffix(".trend.json").write_text(json.dumps(trend, indent=2, sort_keys=True) + "\n")
    logger.info("sweep trend: %s", trend)
    print(f"wrote {len(rows)} cells to {out}")
    print("best delta per T: " + ", ".join(f"T={T}: {d}" for T, d in trend["best_delta_per_T"].items())
          + f"; best delta shrinks or holds as T decreases: {trend['best_delta_nonincreasing_as_T_decreases']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bridgealign", description=__doc__.splitlines()[0])
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="run configuration JSON")
    shared.add_argument("--seed", type=int, help="overrides sim.seed and train.seed")
    shared.add_argument("--out", help="output path")
    shared.add_argument("--threads", type=int, default=1, help="worker processes for independent jobs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gradcheck", parents=[shared], help="finite-difference audit of all gradients")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--corrupt-gradient", action="store_true", help="debug: scale analytic gradients by 1.01")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("simulate", parents=[shared], help="write bank and videos")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", parents=[shared], help="train the projector")
    p.add_argument("--data", required=True, help="directory written by simulate")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[shared], help="recognition and tracking metrics CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--projector", help="projector.bin from train; omit for the untrained projector")
    p.add_argument("--config-id", help="value for the config_id column")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("track-demo", parents=[shared], help="track one shuffled synthetic video")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--window", type=int)
    p.set_defaults(func=cmd_track_demo)

    p = sub.add_parser("sweep", parents=[shared], help="delta x T sensitivity grid")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, TensorFormatError, KeyError) as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
