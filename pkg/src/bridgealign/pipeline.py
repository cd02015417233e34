"""Simulate -> train -> evaluate, shared by the CLI commands and the sweep."""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .config import RunConfig
from .metrics import (association_accuracy, bridge_deviation, classify_bridge_center,
                      classify_frame_ensemble, entropy)
from .simulator import CategoryBank, SyntheticVideo, generate_category_bank, generate_video, generate_video_set
from .tensorio import read_tensors, write_tensors
from .tracker import window_inference
from .trainer import Projector, init_projector, project, train_projector

logger = logging.getLogger(__name__)


@dataclass
class SimData:
    bank: CategoryBank
    train: List[SyntheticVideo]
    heldout: List[SyntheticVideo]


def _f32(x):
    return np.asarray(x, dtype=np.float32).astype(np.float64)


def _quantize_video(v: SyntheticVideo) -> SyntheticVideo:
    return SyntheticVideo(_f32(v.frames), v.gt_identities, v.gt_categories, _f32(v.gt_clean), v.instance_ids)


def simulate(cfg: RunConfig) -> SimData:
    """Generate the bank, training videos and held-out videos, rounded as stored on disk."""
    sim = cfg.sim
    bank = generate_category_bank(np.random.default_rng([sim.seed, 1]), sim.C, sim.d_out, sim.max_similarity)
    train = generate_video_set(sim, bank, np.random.default_rng([sim.seed, 2]))
    heldout = generate_video_set(sim, bank, np.random.default_rng([cfg.eval.heldout_seed, 3]))
    return SimData(bank, [_quantize_video(v) for v in train], [_quantize_video(v) for v in heldout])


def _video_tensors(prefix, videos):
    for i, v in enumerate(videos):
        yield f"{prefix}/{i:04d}/frames", v.frames
        yield f"{prefix}/{i:04d}/clean", v.gt_clean


def _video_meta(videos):
    return [{"identities": v.gt_identities.tolist(), "categories": v.gt_categories.tolist(),
             "instance_ids": v.instance_ids.tolist()} for v in videos]


def save_sim(out_dir, data: SimData, cfg: RunConfig) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    # the bank stays float64 so its unit-norm invariant survives the round trip
    write_tensors(out / "bank.bin", {"bank": data.bank.embeddings}, dtype="f64", meta={"names": data.bank.names})
    write_tensors(out / "videos.bin", list(_video_tensors("train", data.train)) + list(_video_tensors("heldout", data.heldout)))
    sidecar = {"config": cfg.to_dict(), "train": _video_meta(data.train), "heldout": _video_meta(data.heldout)}
    (out / "videos.json").write_text(json.dumps(sidecar, sort_keys=True, indent=1) + "\n")


def load_sim(data_dir) -> SimData:
    d = Path(data_dir)
    bank_t, bank_meta = read_tensors(d / "bank.bin")
    tensors, _ = read_tensors(d / "videos.bin")
    sidecar = json.loads((d / "videos.json").read_text())

    def videos(prefix):
        out = []
        for i, meta in enumerate(sidecar[prefix]):
            out.append(SyntheticVideo(
                tensors[f"{prefix}/{i:04d}/frames"],
                np.array(meta["identities"], dtype=np.int64),
                np.array(meta["categories"], dtype=np.int64),
                tensors[f"{prefix}/{i:04d}/clean"],
                np.array(meta["instance_ids"], dtype=np.int64),
            ))
        return out

    return SimData(CategoryBank(bank_t["bank"], bank_meta["names"]), videos("train"), videos("heldout"))


def save_projector(path, projector: Projector) -> None:
    write_tensors(path, {k: projector.params[k] for k in sorted(projector.params)}, dtype="f64",
                  meta=projector.header())


def load_projector(path) -> Projector:
    tensors, meta = read_tensors(path)
    return Projector(meta["kind"], tensors)


def initial_projector(cfg: RunConfig) -> Projector:
    """The projector ``train`` starts from (same seed stream)."""
    rng = np.random.default_rng([cfg.train.seed, 0x7A1])
    return init_projector(rng, cfg.sim.d_in, cfg.sim.d_out, cfg.train.projector, cfg.train.hidden)


def train(cfg: RunConfig, data: SimData):
    return train_projector(data.train, data.bank, cfg.train)


def history_csv(history) -> str:
    lines = ["epoch,total,htm,bc,btc"]
    for row in history:
        lines.append(",".join([str(row["epoch"])] + [repr(row[k]) for k in ("total", "htm", "bc", "btc")]))
    return "\n".join(lines) + "\n"


def recognition_metrics(videos, bank: CategoryBank, projector: Projector, temperature: float) -> dict:
    correct = np.zeros(2)
    ent = [[], []]
    dev_raw, dev_proj = [], []
    n = 0
    for v in videos:
        raw = v.instance_frames()
        emb = project(projector, raw)
        for i in range(v.n_instances):
            label = v.gt_categories[i]
            for k, clf in enumerate((classify_bridge_center, classify_frame_ensemble)):
                cat, scores = clf(emb[i], bank.embeddings, temperature)
                correct[k] += cat == label
                ent[k].append(entropy(scores))
            if v.n_frames >= 3:
                dev_raw.append(bridge_deviation(raw[i]))
                dev_proj.append(bridge_deviation(emb[i]))
            n += 1
    out = {
        "bridge_center_accuracy": float(correct[0] / n),
        "frame_ensemble_accuracy": float(correct[1] / n),
        "bridge_center_entropy": float(np.mean(ent[0])),
        "frame_ensemble_entropy": float(np.mean(ent[1])),
        "chance_accuracy": 1.0 / len(bank),
        "test_instances": float(n),
    }
    if dev_raw:
        out["bridge_deviation_raw"] = float(np.mean(dev_raw))
        out["bridge_deviation_projected"] = float(np.mean(dev_proj))
    return out


def tracking_metrics(cfg: RunConfig, bank: CategoryBank) -> dict:
    out = {}
    for k, noise in enumerate(cfg.eval.tracking_noise):
        sim = dataclasses.replace(cfg.sim, noise_sigma=noise, shuffle=True)
        rng = np.random.default_rng([cfg.sim.seed, 4, k])
        accs = []
        for _ in range(cfg.eval.tracking_videos):
            cats = rng.integers(0, sim.C, sim.instances_per_video)
            video = generate_video(sim, bank, rng, cats)
            tracks, _ = window_inference(video.frames, cfg.eval.window)
            accs.append(association_accuracy(tracks, video.gt_identities))
        out[f"association_accuracy_noise_{noise:g}"] = float(np.mean(accs))
    return out


def evaluate(cfg: RunConfig, data: SimData, projector: Projector, config_id: str | None = None) -> List[Tuple[str, str, float]]:
    cid = config_id or cfg.eval.config_id
    metrics = recognition_metrics(data.heldout, data.bank, projector, cfg.eval.temperature)
    metrics.update(tracking_metrics(cfg, data.bank))
    return [(name, cid, value) for name, value in metrics.items()]


SWEEP_COLUMNS = ("cell", "delta", "T", "seed", "bridge_center_accuracy", "frame_ensemble_accuracy",
                 "bridge_center_entropy", "frame_ensemble_entropy", "final_loss")


def sweep_cell_config(cfg: RunConfig, index: int, delta: float, frames: int) -> RunConfig:
    seed = cfg.sim.seed ^ index
    train = dataclasses.replace(cfg.train, delta=delta, seed=cfg.train.seed ^ index,
                                epochs=cfg.sweep.epochs or cfg.train.epochs)
    sim = dataclasses.replace(cfg.sim, T=frames, seed=seed)
    return dataclasses.replace(cfg, sim=sim, train=train)


def run_sweep_cell(cfg: RunConfig, index: int, delta: float, frames: int) -> dict:
    cell_cfg = sweep_cell_config(cfg, index, delta, frames)
    data = simulate(cell_cfg)
    projector, history = train(cell_cfg, data)
    rec = recognition_metrics(data.heldout, data.bank, projector, cell_cfg.eval.temperature)
    row = {"cell": index, "delta": delta, "T": frames, "seed": cell_cfg.sim.seed, "final_loss": history[-1]["total"]}
    row.update({k: rec[k] for k in SWEEP_COLUMNS if k in rec})
    logger.info("sweep cell %d (delta=%g, T=%d): bridge-center accuracy %.4f", index, delta, frames,
                row["bridge_center_accuracy"])
    return row


def sweep_grid(cfg: RunConfig):
    return [(delta, frames) for frames in cfg.sweep.frame_counts for delta in cfg.sweep.deltas]


def run_sweep(cfg: RunConfig, threads: int = 1) -> List[dict]:
    grid = sweep_grid(cfg)
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(run_sweep_cell, cfg, i, d, t) for i, (d, t) in enumerate(grid)]
            return [f.result() for f in futures]
    return [run_sweep_cell(cfg, i, d, t) for i, (d, t) in enumerate(grid)]


def sweep_trend(rows: List[dict]) -> dict:
    """Best delta per frame count, and whether it shrinks (or holds) as T decreases."""
    best = {}
    for T in sorted({r["T"] for r in rows}):
        cells = [r for r in rows if r["T"] == T]
        top = max(cells, key=lambda r: (r["bridge_center_accuracy"], -r["delta"]))
        best[T] = top["delta"]
    ordered = [best[T] for T in sorted(best)]
    follows = all(a <= b for a, b in zip(ordered, ordered[1:]))
    return {"best_delta_per_T": {str(T): d for T, d in best.items()},
            "best_delta_nonincreasing_as_T_decreases": follows}


def sweep_csv(rows: List[dict]) -> str:
    lines = [",".join(SWEEP_COLUMNS)]
    for r in rows:
        lines.append(",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in SWEEP_COLUMNS))
    return "\n".join(lines) + "\n"
