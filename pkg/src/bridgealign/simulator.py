"""Synthetic category banks, bridge-structured instance videos and context tokens.

Clean trajectories live in the ``d_out`` alignment space: each instance gets
head and tail anchors rotated away from its category direction, and its
middles follow a Brownian bridge between them. Raw query features are those
trajectories pushed through a fixed random isometry into ``d_in`` plus
i.i.d. Gaussian noise, with optional per-frame slot shuffling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import List, Sequence

import numpy as np

from .bridge import sample_brownian_bridge
from .objectives import TripletBatch
from .resampler import N_SCALES, ContextFeatures


class InfeasibleBankError(RuntimeError):
    pass


@dataclass
class CategoryBank:
    embeddings: np.ndarray  # (C, d) unit rows
    names: List[str]

    def __len__(self):
        return len(self.embeddings)

    @property
    def d(self) -> int:
        return self.embeddings.shape[1]


@dataclass
class SimConfig:
    C: int = 20
    instances_per_category: int = 40
    T: int = 9
    d_in: int = 48
    d_out: int = 16
    noise_sigma: float = 0.02
    shuffle: bool = False
    endpoint_spread: float = 1.0
    seed: int = 7
    instances_per_video: int = 20
    bridge_sigma: float = 0.3
    max_similarity: float = 0.3

    def __post_init__(self):
        for name in ("C", "instances_per_category", "T", "d_in", "d_out", "instances_per_video"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.noise_sigma < 0 or self.bridge_sigma < 0:
            raise ValueError("noise_sigma and bridge_sigma must be non-negative")
        if self.d_in < self.d_out:
            raise ValueError("d_in must be at least d_out")


@dataclass
class SyntheticVideo:
    frames: np.ndarray         # (T, N, d_in), slot order
    gt_identities: np.ndarray  # (T, N): slot -> instance
    gt_categories: np.ndarray  # (N,)
    gt_clean: np.ndarray       # (N, T, d_out), instance order
    instance_ids: np.ndarray = field(default=None)  # (N,) ids unique across a video set

    def __post_init__(self):
        if self.instance_ids is None:
            self.instance_ids = np.arange(self.n_instances)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_instances(self) -> int:
        return self.frames.shape[1]

    def instance_frames(self) -> np.ndarray:
        """Raw features reordered to ``(N, T, d_in)`` in instance order."""
        T, N, d = self.frames.shape
        out = np.empty((N, T, d))
        for f in range(T):
            out[self.gt_identities[f], f] = self.frames[f]
        return out


def _unit(x):
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def generate_category_bank(rng: np.random.Generator, C: int, d: int, max_similarity: float = 0.3,
                           max_attempts: int = 100_000) -> CategoryBank:
    """Rejection-sample unit Gaussians until every pairwise cosine is <= ``max_similarity``.

    Non-positive caps with ``C <= d`` are met directly by an orthonormal draw.
    """
    if C < 1 or d < 1:
        raise ValueError("C and d must be positive")
    names = [f"category_{i:03d}" for i in range(C)]
    if max_similarity <= 0.0:
        if C > d:
            raise InfeasibleBankError(f"{C} mutually non-positive directions do not fit orthogonally in {d} dims")
        q, r = np.linalg.qr(rng.standard_normal((d, C)))
        q = q * np.sign(np.diag(r))
        return CategoryBank(np.ascontiguousarray(q.T), names)
    accepted: List[np.ndarray] = []
    attempts = 0
    while len(accepted) < C:
        if attempts >= max_attempts:
            raise InfeasibleBankError(
                f"placed {len(accepted)}/{C} categories within {max_attempts} attempts "
                f"(d={d}, max_similarity={max_similarity})")
        attempts += 1
        v = _unit(rng.standard_normal(d))
        if accepted and np.max(np.stack(accepted) @ v) > max_similarity:
            continue
        accepted.append(v)
    return CategoryBank(np.stack(accepted), names)


def isometry(config: SimConfig) -> np.ndarray:
    """Fixed ``(d_in, d_out)`` matrix with orthonormal columns, a function of the config seed only."""
    rng = np.random.default_rng([config.seed, 0x150])
    q, r = np.linalg.qr(rng.standard_normal((config.d_in, config.d_out)))
    return q * np.sign(np.diag(r))


def _rotate_away(rng, direction, angle):
    # unit vector at ``angle`` radians from ``direction`` toward a random orthogonal axis
    g = rng.standard_normal(direction.shape)
    g -= (g @ direction) * direction
    g = _unit(g)
    return np.cos(angle) * direction + np.sin(angle) * g


def clean_trajectory(rng, config: SimConfig, direction: np.ndarray) -> np.ndarray:
    head = _rotate_away(rng, direction, config.endpoint_spread)
    tail = _rotate_away(rng, direction, config.endpoint_spread)
    T = config.T
    if T == 1:
        return head[None]
    if config.bridge_sigma == 0.0:
        w = np.linspace(0.0, 1.0, T)[:, None]
        traj = (1.0 - w) * head + w * tail
        traj[0], traj[-1] = head, tail
        return traj
    # diffusion scale sigma^2 is absorbed by stretching the time axis
    horizon = config.bridge_sigma ** 2
    times = np.linspace(0.0, horizon, T)
    times[-1] = horizon
    return sample_brownian_bridge(rng, head, tail, times, horizon).states


def generate_video(config: SimConfig, bank: CategoryBank, rng: np.random.Generator,
                   categories: Sequence[int] | None = None) -> SyntheticVideo:
    """One video. Without ``categories`` it holds every instance of the config (C x instances_per_category)."""
    if bank.d != config.d_out:
        raise ValueError(f"bank dimension {bank.d} does not match d_out={config.d_out}")
    if categories is None:
        categories = np.repeat(np.arange(config.C), config.instances_per_category)
    categories = np.asarray(categories, dtype=np.int64)
    N, T = len(categories), config.T
    clean = np.stack([clean_trajectory(rng, config, bank.embeddings[c]) for c in categories])
    raw = clean @ isometry(config).T  # (N, T, d_in)
    if config.noise_sigma > 0:
        raw = raw + config.noise_sigma * rng.standard_normal(raw.shape)
    frames = np.empty((T, N, config.d_in))
    identities = np.empty((T, N), dtype=np.int64)
    for f in range(T):
        perm = rng.permutation(N) if config.shuffle else np.arange(N)
        frames[f] = raw[perm, f]
        identities[f] = perm
    return SyntheticVideo(frames, identities, categories, clean)


def generate_video_set(config: SimConfig, bank: CategoryBank, rng: np.random.Generator) -> List[SyntheticVideo]:
    """All ``C * instances_per_category`` instances, category-balanced, split into videos."""
    labels = rng.permutation(np.repeat(np.arange(config.C), config.instances_per_category))
    videos = []
    for start in range(0, len(labels), config.instances_per_video):
        chunk = labels[start:start + config.instances_per_video]
        video = generate_video(config, bank, rng, chunk)
        video.instance_ids = np.arange(start, start + len(chunk))
        videos.append(video)
    return videos


def generate_context(rng: np.random.Generator, video: SyntheticVideo, tokens_per_scale: Sequence[int] = (16, 8, 4),
                     noise: float = 0.05, concentration: float = 0.5) -> ContextFeatures:
    """Context tokens per frame and scale: Dirichlet mixtures of that frame's query features plus noise."""
    if len(tokens_per_scale) != N_SCALES or min(tokens_per_scale) < 1:
        raise ValueError(f"need {N_SCALES} positive token counts")
    T, N, d = video.frames.shape
    scales = []
    for count in tokens_per_scale:
        weights = rng.dirichlet(np.full(N, concentration), size=(T, count)) if N > 1 else np.ones((T, count, 1))
        tokens = np.einsum("tkn,tnd->tkd", weights, video.frames)
        if noise > 0:
            tokens = tokens + noise * rng.standard_normal(tokens.shape)
        scales.append(tokens)
    return ContextFeatures(scales)


def valid_triples(T: int):
    """All strict 1-based frame triples ``1 <= s < t < e <= T``."""
    return list(combinations(range(1, T + 1), 3))


def sample_triplet_batch(videos: Sequence[SyntheticVideo], rng: np.random.Generator) -> TripletBatch:
    """One uniformly drawn ``(s, t, e)`` per video, one triplet of raw features per instance."""
    feats, times, ids, cats = [], [], [], []
    for video in videos:
        T = video.n_frames
        if T < 3:
            raise ValueError(f"triplet sampling needs T >= 3, got {T}")
        s, t, e = np.sort(rng.choice(T, size=3, replace=False)) + 1
        inst = video.instance_frames()
        feats.append(inst[:, [s - 1, t - 1, e - 1]])
        times.append(np.tile([s, t, e], (video.n_instances, 1)))
        ids.append(video.instance_ids)
        cats.append(video.gt_categories)
    return TripletBatch(np.concatenate(feats), np.concatenate(times), np.concatenate(ids), np.concatenate(cats))
