"""Recognition and diagnostic metrics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np

from .bridge import bridge_center
from .tracker import TrackSet, hungarian


@dataclass
class InstanceTrajectory:
    embeddings: np.ndarray  # (T, d)
    category: int = -1
    instance_id: int = -1


def _traj_array(trajectory) -> np.ndarray:
    emb = trajectory.embeddings if isinstance(trajectory, InstanceTrajectory) else trajectory
    emb = np.asarray(emb, dtype=float)
    if emb.ndim != 2 or len(emb) == 0:
        raise ValueError("trajectory must be a non-empty (T, d) array")
    return emb


def alignment_scores(embedding, bank, temperature: float = 1.0) -> np.ndarray:
    """Cosine scores of a unit embedding against each category, divided by temperature."""
    embedding = np.asarray(embedding, dtype=float)
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    norms = np.linalg.norm(embedding, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise ValueError("alignment scores need unit-norm embeddings")
    return embedding @ np.asarray(bank, dtype=float).T / temperature


def classify_frame_ensemble(trajectory, bank, temperature: float = 1.0) -> Tuple[int, np.ndarray]:
    """Average the per-frame score vectors, then argmax (ties go to the lowest index)."""
    emb = _traj_array(trajectory)
    scores = alignment_scores(emb, bank, temperature).mean(axis=0)
    return int(np.argmax(scores)), scores


def classify_bridge_center(trajectory, bank, temperature: float = 1.0) -> Tuple[int, np.ndarray]:
    emb = _traj_array(trajectory)
    center = bridge_center(emb[0], emb[-1], renormalize=True)
    scores = alignment_scores(center, bank, temperature)
    return int(np.argmax(scores)), scores


def entropy(scores) -> float:
    """Shannon entropy (nats) of ``softmax(scores)``."""
    s = np.asarray(scores, dtype=float)
    z = s - s.max()
    logp = z - np.log(np.sum(np.exp(z)))
    p = np.exp(logp)
    return float(max(0.0, -np.sum(p * logp)))


def bridge_deviation(trajectory) -> float:
    """Mean squared distance of interior frames from the head-tail chord."""
    emb = _traj_array(trajectory)
    T = len(emb)
    if T < 3:
        raise ValueError("bridge deviation needs at least 3 frames")
    beta = (np.arange(1, T - 1) / (T - 1))[:, None]
    resid = emb[1:-1] - (1.0 - beta) * emb[0] - beta * emb[-1]
    return float(np.mean(np.sum(resid * resid, axis=1)))


def association_accuracy(pred: TrackSet, gt, relabel: bool = True) -> float:
    """Fraction of (id, frame) cells where a predicted id sits in its true slot.

    ``gt`` is a TrackSet or per-frame ``slot -> instance`` maps. With
    ``relabel`` predicted ids are first matched one-to-one to true ids by
    maximum overlap, making the score invariant to id naming.
    """
    gt_tracks = gt if isinstance(gt, TrackSet) else TrackSet.from_identities(gt)
    if pred.slots.shape != gt_tracks.slots.shape:
        raise ValueError(f"shape mismatch: {pred.slots.shape} vs {gt_tracks.slots.shape}")
    p, g = pred.slots, gt_tracks.slots
    if p.size == 0:
        return 1.0
    if relabel:
        overlap = (p[:, None, :] == g[None, :, :]).sum(axis=2)
        match = hungarian(-overlap.astype(float))
        hits = overlap[np.arange(len(match)), match].sum()
    else:
        hits = (p == g).sum()
    return float(hits / p.size)


def write_metrics_csv(rows: Iterable[Tuple[str, str, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "config_id", "value"])
    for metric, config_id, value in rows:
        w.writerow([metric, config_id, repr(float(value))])
    return buf.getvalue()
