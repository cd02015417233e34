"""Bridge-text alignment objectives with hand-derived gradients.

All gradient code is written against the unnormalized inputs: where a loss
normalizes (head-tail matching, renormalized bridge centers) the normalization
Jacobian ``(I - u u^T) / |x|`` is applied on the way back.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bridge import TimeTriple

SLOTS = ("head", "mid", "tail")
DEFAULT_DELTA = 0.5
DEFAULT_K = 5


@dataclass
class BridgeTriplet:
    head: np.ndarray
    mid: np.ndarray
    tail: np.ndarray
    times: TimeTriple
    instance_id: int = 0
    category_id: int = 0

    def __post_init__(self):
        self.head, self.mid, self.tail = (np.asarray(v, dtype=float) for v in (self.head, self.mid, self.tail))
        if not (self.head.shape == self.mid.shape == self.tail.shape):
            raise ValueError("triplet embeddings must share one dimension")
        if not isinstance(self.times, TimeTriple):
            self.times = TimeTriple(*self.times)


@dataclass
class TripletBatch:
    """Flattened batch of triplets stored as arrays.

    ``embeddings[i, 0/1/2]`` are head/mid/tail of triplet ``i``; ``times[i]`` is
    ``(s, t, e)``.
    """

    embeddings: np.ndarray
    times: np.ndarray
    instance_ids: np.ndarray
    category_ids: np.ndarray

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=float)
        self.times = np.asarray(self.times, dtype=np.int64).reshape(-1, 3)
        self.instance_ids = np.asarray(self.instance_ids, dtype=np.int64)
        self.category_ids = np.asarray(self.category_ids, dtype=np.int64)
        n = len(self.embeddings)
        if self.embeddings.ndim != 3 or self.embeddings.shape[1] != 3:
            raise ValueError("embeddings must have shape (n, 3, d)")
        if not (len(self.times) == len(self.instance_ids) == len(self.category_ids) == n):
            raise ValueError("batch fields have inconsistent lengths")
        s, t, e = self.times.T
        if np.any(s >= t) or np.any(t >= e):
            raise ValueError("every triplet needs s < t < e")
        if len(np.unique(self.instance_ids)) != n:
            raise ValueError("instance ids must be unique within a batch")

    def __len__(self):
        return len(self.embeddings)

    @classmethod
    def from_triplets(cls, triplets: Sequence[BridgeTriplet]) -> "TripletBatch":
        return cls(
            np.stack([np.stack([tr.head, tr.mid, tr.tail]) for tr in triplets]),
            [(tr.times.s, tr.times.t, tr.times.e) for tr in triplets],
            [tr.instance_id for tr in triplets],
            [tr.category_id for tr in triplets],
        )

    def triplet(self, i: int) -> BridgeTriplet:
        h, m, t = self.embeddings[i]
        return BridgeTriplet(h, m, t, TimeTriple(*map(int, self.times[i])),
                             int(self.instance_ids[i]), int(self.category_ids[i]))

    def with_embeddings(self, embeddings) -> "TripletBatch":
        return TripletBatch(embeddings, self.times, self.instance_ids, self.category_ids)

    def permuted(self, order) -> "TripletBatch":
        order = np.asarray(order)
        return TripletBatch(self.embeddings[order], self.times[order],
                            self.instance_ids[order], self.category_ids[order])


@dataclass
class BtaParams:
    delta: float = DEFAULT_DELTA
    k: int = DEFAULT_K
    temperature: float = 1.0
    renormalize_center: bool = True


@dataclass
class LossReport:
    total: float
    htm: float
    bc: float
    btc: float
    grads: np.ndarray  # (n, 3, d), same layout as TripletBatch.embeddings
    negatives: np.ndarray = field(default=None, repr=False)

    def grad(self, index: int, slot: str) -> np.ndarray:
        return self.grads[index, SLOTS.index(slot)]


def smooth_relu(z):
    """Overflow-safe ``log(1 + exp(z))``."""
    z = np.asarray(z, dtype=float)
    out = np.where(z > 0, z + np.log1p(np.exp(-np.abs(z))), np.log1p(np.exp(np.minimum(z, 0.0))))
    return out if out.ndim else float(out)


def _sigmoid(z):
    z = np.asarray(z, dtype=float)
    ez = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))


def _logsumexp(x, axis=-1):
    m = np.max(x, axis=axis, keepdims=True)
    return (m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))).squeeze(axis)


def _normalize_rows(x):
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("cannot normalize a zero-norm embedding")
    return x / norms, norms


def _normalize_backward(u, norms, g):
    # d(x/|x|)^T g = (g - u (u.g)) / |x|
    return (g - u * np.sum(u * g, axis=-1, keepdims=True)) / norms


def head_tail_matching_loss(head, tail, delta: float = DEFAULT_DELTA):
    """Smoothed hinge on the cosine between head and tail.

    Returns ``(loss, (grad_head, grad_tail))`` with gradients taken with
    respect to the raw, pre-normalization inputs.
    """
    loss, gh, gt = _htm_rows(np.asarray(head, dtype=float)[None], np.asarray(tail, dtype=float)[None], delta)
    return float(loss[0]), (gh[0], gt[0])


def _htm_rows(heads, tails, delta):
    u, nu = _normalize_rows(heads)
    w, nw = _normalize_rows(tails)
    z = delta - np.sum(u * w, axis=1)
    loss = smooth_relu(z)
    dloss_ddot = -_sigmoid(z)[:, None]
    gh = _normalize_backward(u, nu, dloss_ddot * w)
    gt = _normalize_backward(w, nw, dloss_ddot * u)
    return np.atleast_1d(loss), gh, gt


def _bridge_terms(emb, times):
    """Per-row bridge distance and its partials w.r.t. (head, mid, tail)."""
    s, t, e = (times[:, i].astype(float) for i in range(3))
    beta = ((t - s) / (e - s))[:, None]
    var = ((t - s) * (e - t) / (e - s))[:, None]
    r = emb[:, 1] - (1.0 - beta) * emb[:, 0] - beta * emb[:, 2]
    d = -np.sum(r * r, axis=1) / (2.0 * var[:, 0])
    g_mid = -r / var
    partials = np.stack([-(1.0 - beta) * g_mid, g_mid, -beta * g_mid], axis=1)
    return d, partials


def _anchor_scores(emb, times):
    """``scores[a, j]`` = bridge distance of foreign middle ``j`` under anchor ``a``'s endpoints and times."""
    s, t, e = (times[:, i].astype(float) for i in range(3))
    beta = ((t - s) / (e - s))[:, None]
    var = (t - s) * (e - t) / (e - s)
    target = (1.0 - beta) * emb[:, 0] + beta * emb[:, 2]
    diff = emb[None, :, 1, :] - target[:, None, :]
    return -np.einsum("ajd,ajd->aj", diff, diff) / (2.0 * var[:, None])


def _topk_rows(scores, k):
    n = scores.shape[0]
    m = min(k, n - 1)
    if m <= 0:
        return np.empty((n, 0), dtype=np.intp)
    masked = scores.copy()
    np.fill_diagonal(masked, -np.inf)
    # stable sort on the negated scores: equal scores keep ascending index order
    order = np.argsort(-masked, axis=1, kind="stable")
    return order[:, :m]


def select_hard_negatives(anchor: int, batch: TripletBatch, k: int = DEFAULT_K) -> np.ndarray:
    if k < 1:
        raise ValueError("k must be at least 1")
    n = len(batch)
    if not 0 <= anchor < n:
        raise IndexError(f"anchor {anchor} out of range for batch of {n}")
    emb, times = batch.embeddings, batch.times
    s, t, e = (float(x) for x in times[anchor])
    beta = (t - s) / (e - s)
    var = (t - s) * (e - t) / (e - s)
    target = (1.0 - beta) * emb[anchor, 0] + beta * emb[anchor, 2]
    diff = emb[:, 1] - target
    scores = -np.sum(diff * diff, axis=1) / (2.0 * var)
    candidates = np.array([j for j in range(n) if j != anchor], dtype=np.intp)
    if len(candidates) == 0:
        return candidates
    order = np.argsort(-scores[candidates], kind="stable")
    return candidates[order[:k]]


def bridge_contrastive_loss(anchor: BridgeTriplet, negatives: Sequence[BridgeTriplet]):
    """Softmax contrast of the anchor's bridge fit against its negatives' own fits.

    Returns ``(loss, (grad_anchor, grad_negatives))`` where ``grad_anchor`` has
    shape ``(3, d)`` and ``grad_negatives`` has shape ``(M, 3, d)``.
    """
    triplets = [anchor, *negatives]
    emb = np.stack([np.stack([tr.head, tr.mid, tr.tail]) for tr in triplets])
    times = np.array([(tr.times.s, tr.times.t, tr.times.e) for tr in triplets])
    d, partials = _bridge_terms(emb, times)
    lse = _logsumexp(d)
    loss = float(lse - d[0])
    coef = np.exp(d - lse)
    coef[0] -= 1.0
    grads = coef[:, None, None] * partials
    return loss, (grads[0], grads[1:])


def bridge_text_contrastive_loss(head, tail, bank, positive: int, temperature: float = 1.0,
                                 renormalize: bool = True):
    """Cross-entropy of the bridge center's category scores. Bank is frozen."""
    bank = np.asarray(bank, dtype=float)
    loss, gh, gt, _ = _btc_rows(np.asarray(head, dtype=float)[None], np.asarray(tail, dtype=float)[None],
                                bank, np.array([positive]), temperature, renormalize)
    return float(loss[0]), (gh[0], gt[0])


def _btc_rows(heads, tails, bank, positives, temperature, renormalize):
    if bank.ndim != 2 or len(bank) == 0:
        raise ValueError("category bank must be a non-empty (C, d) array")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    positives = np.asarray(positives, dtype=np.intp)
    if np.any(positives < 0) or np.any(positives >= len(bank)):
        raise IndexError("positive category out of range")
    mean = 0.5 * (heads + tails)
    if renormalize:
        center, norms = _normalize_rows(mean)
    else:
        center = mean
    scores = center @ bank.T / temperature
    lse = _logsumexp(scores, axis=1)
    rows = np.arange(len(scores))
    loss = lse - scores[rows, positives]
    dscores = np.exp(scores - lse[:, None])
    dscores[rows, positives] -= 1.0
    g_center = dscores @ bank / temperature
    g_mean = _normalize_backward(center, norms, g_center) if renormalize else g_center
    return loss, 0.5 * g_mean, 0.5 * g_mean, scores


def bta_loss(batch: TripletBatch, bank, params: BtaParams | None = None) -> LossReport:
    """Batch-averaged sum of head-tail matching, bridge contrastive and bridge-text losses."""
    params = params or BtaParams()
    n = len(batch)
    if n == 0:
        raise ValueError("batch must be non-empty")
    if params.k < 1:
        raise ValueError("k must be at least 1")
    emb, times = batch.embeddings, batch.times
    bank = np.asarray(bank, dtype=float)
    grads = np.zeros_like(emb)

    htm, gh, gt = _htm_rows(emb[:, 0], emb[:, 2], params.delta)
    grads[:, 0] += gh
    grads[:, 2] += gt

    negatives = _topk_rows(_anchor_scores(emb, times), params.k)
    d, partials = _bridge_terms(emb, times)
    if negatives.shape[1]:
        group = np.concatenate([d[:, None], d[negatives]], axis=1)
        lse = _logsumexp(group, axis=1)
        bc = lse - d
        probs = np.exp(group - lse[:, None])
        coef = probs[:, 0] - 1.0
        # sequential scatter keeps the accumulation order fixed
        np.add.at(coef, negatives.ravel(), probs[:, 1:].ravel())
        grads += coef[:, None, None] * partials
    else:
        bc = np.zeros(n)

    btc, gh, gt, _ = _btc_rows(emb[:, 0], emb[:, 2], bank, batch.category_ids,
                               params.temperature, params.renormalize_center)
    grads[:, 0] += gh
    grads[:, 2] += gt

    grads /= n
    per_anchor = htm + bc + btc
    return LossReport(
        total=float(np.sum(per_anchor) / n),
        htm=float(np.mean(htm)),
        bc=float(np.mean(bc)),
        btc=float(np.mean(btc)),
        grads=grads,
        negatives=negatives,
    )


def finite_difference_check(fn: Callable, point, eps: float = 1e-6) -> float:
    """Max relative error between ``fn``'s analytic gradient and central differences.

    ``fn(x)`` must return ``(value, gradient)`` with ``gradient`` shaped like ``x``.
    Error per coordinate is ``|a - n| / max(1, |a|, |n|)``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.array(point, dtype=float)
    _, analytic = fn(x)
    analytic = np.asarray(analytic, dtype=float).reshape(x.shape)
    flat = x.reshape(-1)
    numeric = np.empty(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp, _ = fn(x)
        flat[i] = orig - eps
        fm, _ = fn(x)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite loss at perturbed coordinate {i}")
        numeric[i] = (fp - fm) / (2.0 * eps)
    a = analytic.reshape(-1)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - numeric) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(numeric)))))
