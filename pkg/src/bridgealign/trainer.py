"""Projector training on the bridge-text alignment objective."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .objectives import BtaParams, TripletBatch, bta_loss, finite_difference_check
from .simulator import CategoryBank, SyntheticVideo, sample_triplet_batch

logger = logging.getLogger(__name__)


@dataclass
class Projector:
    """Linear (``d_in -> d_out``) or one-hidden-layer tanh perceptron; outputs are unit-norm."""

    kind: str
    params: Dict[str, np.ndarray]

    def __post_init__(self):
        if self.kind not in ("linear", "mlp"):
            raise ValueError(f"unknown projector kind {self.kind!r}")
        needed = ("W",) if self.kind == "linear" else ("W1", "b1", "W2", "b2")
        missing = [k for k in needed if k not in self.params]
        if missing:
            raise ValueError(f"projector parameters missing: {missing}")

    @property
    def d_in(self) -> int:
        return self.params["W" if self.kind == "linear" else "W1"].shape[1]

    @property
    def d_out(self) -> int:
        return self.params["W" if self.kind == "linear" else "W2"].shape[0]

    @property
    def hidden(self) -> int | None:
        return None if self.kind == "linear" else self.params["W1"].shape[0]

    def copy(self) -> "Projector":
        return Projector(self.kind, {k: v.copy() for k, v in self.params.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in sorted(self.params)])

    def with_flat(self, vec) -> "Projector":
        out, pos = {}, 0
        for k in sorted(self.params):
            size = self.params[k].size
            out[k] = np.asarray(vec[pos:pos + size], dtype=float).reshape(self.params[k].shape)
            pos += size
        return Projector(self.kind, out)

    def header(self) -> dict:
        return {"kind": self.kind, "d_in": self.d_in, "d_out": self.d_out, "hidden": self.hidden,
                "nonlinearity": None if self.kind == "linear" else "tanh"}


def init_projector(rng: np.random.Generator, d_in: int, d_out: int, kind: str = "linear", hidden: int = 64) -> Projector:
    if kind == "linear":
        return Projector("linear", {"W": rng.normal(0.0, 1.0 / np.sqrt(d_in), (d_out, d_in))})
    return Projector("mlp", {
        "W1": rng.normal(0.0, 1.0 / np.sqrt(d_in), (hidden, d_in)),
        "b1": np.zeros(hidden),
        "W2": rng.normal(0.0, 1.0 / np.sqrt(hidden), (d_out, hidden)),
        "b2": np.zeros(d_out),
    })


def _forward(projector: Projector, x):
    p = projector.params
    if x.shape[-1] != projector.d_in:
        raise ValueError(f"input width {x.shape[-1]} does not match projector d_in={projector.d_in}")
    if projector.kind == "linear":
        h = None
        y = x @ p["W"].T
    else:
        h = np.tanh(x @ p["W1"].T + p["b1"])
        y = h @ p["W2"].T + p["b2"]
    norms = np.linalg.norm(y, axis=-1, keepdims=True)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(norms))):
        raise FloatingPointError("projector produced non-finite outputs (diverged parameters?)")
    if np.any(norms == 0.0):
        raise ValueError("projector produced a zero vector; normalization undefined")
    return y / norms, (x, h, norms)


def project(projector: Projector, queries) -> np.ndarray:
    """Map raw query features to unit-norm alignment embeddings."""
    return _forward(projector, np.asarray(queries, dtype=float))[0]


def _backward(projector: Projector, out, cache, g_out) -> Dict[str, np.ndarray]:
    x, h, norms = cache
    x2 = x.reshape(-1, x.shape[-1])
    u = out.reshape(-1, out.shape[-1])
    g = g_out.reshape(u.shape)
    n = norms.reshape(-1, 1)
    gy = (g - u * np.sum(u * g, axis=1, keepdims=True)) / n
    p = projector.params
    if projector.kind == "linear":
        return {"W": gy.T @ x2}
    h2 = h.reshape(-1, h.shape[-1])
    gh = (gy @ p["W2"]) * (1.0 - h2 * h2)
    return {"W2": gy.T @ h2, "b2": gy.sum(axis=0), "W1": gh.T @ x2, "b1": gh.sum(axis=0)}


def projected_loss(projector: Projector, raw: TripletBatch, bank, params: BtaParams):
    """``(LossReport, parameter gradients)`` for a batch of raw-feature triplets."""
    emb, cache = _forward(projector, raw.embeddings)
    report = bta_loss(raw.with_embeddings(emb), bank, params)
    return report, _backward(projector, emb, cache, report.grads)


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_videos: int = 4
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    delta: float = 0.5
    k: int = 5
    temperature: float = 0.1
    renormalize_center: bool = True
    projector: str = "linear"
    hidden: int = 64
    seed: int = 7

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.batch_videos < 1:
            raise ValueError("batch_videos must be at least 1")

    def bta_params(self) -> BtaParams:
        return BtaParams(self.delta, self.k, self.temperature, self.renormalize_center)


class _Adam:
    def __init__(self, cfg: TrainConfig, params):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        c = self.cfg
        self.t += 1
        for k in sorted(params):
            g = grads[k]
            self.m[k] = c.beta1 * self.m[k] + (1 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1 - c.beta2) * g * g
            mhat = self.m[k] / (1 - c.beta1 ** self.t)
            vhat = self.v[k] / (1 - c.beta2 ** self.t)
            params[k] = params[k] - c.learning_rate * (mhat / (np.sqrt(vhat) + c.adam_eps) + c.weight_decay * params[k])


class _SGD:
    def __init__(self, cfg: TrainConfig, params):
        self.cfg = cfg

    def step(self, params, grads):
        lr, wd = self.cfg.learning_rate, self.cfg.weight_decay
        for k in sorted(params):
            params[k] = params[k] - lr * (grads[k] + wd * params[k])


def train_projector(videos: Sequence[SyntheticVideo], bank: CategoryBank, cfg: TrainConfig,
                    projector: Projector | None = None) -> Tuple[Projector, List[dict]]:
    """Gradient descent on the alignment objective.

    ``history[0]`` is a no-update pass with the initial projector; rows
    ``1..epochs`` average the loss components over that epoch's steps.
    """
    if not videos:
        raise ValueError("no training videos")
    n_cat = int(max(v.gt_categories.max() for v in videos)) + 1
    if n_cat > len(bank):
        raise ValueError(f"labels reference {n_cat} categories but bank has {len(bank)}")
    rng = np.random.default_rng([cfg.seed, 0x7A1])
    if projector is None:
        projector = init_projector(rng, videos[0].frames.shape[2], bank.d, cfg.projector, cfg.hidden)
    projector = projector.copy()
    params = projector.params
    opt = _Adam(cfg, params) if cfg.optimizer == "adam" else _SGD(cfg, params)
    bta = cfg.bta_params()

    history = []
    for epoch in range(cfg.epochs + 1):
        order = rng.permutation(len(videos))
        sums = np.zeros(4)
        steps = 0
        for start in range(0, len(order), cfg.batch_videos):
            batch = sample_triplet_batch([videos[i] for i in order[start:start + cfg.batch_videos]], rng)
            report, grads = projected_loss(projector, batch, bank.embeddings, bta)
            if not np.isfinite(report.total):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch}, step {steps}: htm={report.htm} bc={report.bc} btc={report.btc}")
            sums += (report.total, report.htm, report.bc, report.btc)
            steps += 1
            if epoch > 0:
                opt.step(params, grads)
        row = dict(zip(("total", "htm", "bc", "btc"), (sums / steps).tolist()))
        row["epoch"] = epoch
        history.append(row)
        logger.debug("epoch %d total=%.5f htm=%.5f bc=%.5f btc=%.5f", epoch, *(row[k] for k in ("total", "htm", "bc", "btc")))
    return projector, history


def gradcheck_projector(projector: Projector, batch: TripletBatch, bank, params: BtaParams | None = None,
                        eps: float = 1e-6) -> float:
    """Finite-difference check of the loss gradient with respect to projector parameters."""
    params = params or BtaParams()
    bank = np.asarray(bank, dtype=float)

    def fn(vec):
        report, grads = projected_loss(projector.with_flat(vec), batch, bank, params)
        return report.total, np.concatenate([grads[k].ravel() for k in sorted(grads)])

    return finite_difference_check(fn, projector.flat(), eps)
