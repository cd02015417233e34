"""Query association across frames: exact assignment, adjacent-frame linking,
full-sequence tracking and sliding-window inference."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from . import kernels

logger = logging.getLogger(__name__)


@dataclass
class TrackSet:
    """``slots[k, f]`` is the slot occupied by persistent id ``k`` at frame ``f``.

    Persistent ids are the slot indices of the first frame.
    """

    slots: np.ndarray

    @property
    def n_ids(self) -> int:
        return self.slots.shape[0]

    @property
    def n_frames(self) -> int:
        return self.slots.shape[1]

    def __eq__(self, other):
        return isinstance(other, TrackSet) and np.array_equal(self.slots, other.slots)

    @classmethod
    def from_identities(cls, identities) -> "TrackSet":
        """Build the ground-truth TrackSet from per-frame ``slot -> instance`` maps."""
        ident = np.asarray(identities, dtype=np.intp)
        T, N = ident.shape
        where = np.empty_like(ident)  # where[f, instance] = slot
        rows = np.arange(T)[:, None]
        where[rows, ident] = np.arange(N)[None, :]
        return cls(where[:, ident[0]].T.copy())

    def to_json(self) -> str:
        return json.dumps({str(k): self.slots[k].tolist() for k in range(self.n_ids)})

    @classmethod
    def from_json(cls, text: str) -> "TrackSet":
        data = json.loads(text)
        keys = sorted(data, key=int)
        if [int(k) for k in keys] != list(range(len(keys))):
            raise ValueError("TrackSet ids must be 0..N-1")
        return cls(np.array([data[k] for k in keys], dtype=np.intp).reshape(len(keys), -1))


def hungarian(cost, tol: float | None = None) -> np.ndarray:
    """Minimum-cost permutation ``perm`` (row ``i`` -> column ``perm[i]``).

    Among optimal permutations the lexicographically smallest is returned.
    Costs within ``tol`` of the optimum on the reduced-cost scale are treated
    as ties; default ``1e-9 * max(1, max|cost|)``.
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    if tol is None:
        tol = 1e-9 * max(1.0, float(np.abs(cost).max(initial=0.0)))
    return np.asarray(kernels.backend.lexmin_assignment(cost, tol), dtype=np.intp)


def assignment_cost(cost, perm) -> float:
    cost = np.asarray(cost, dtype=float)
    return float(sum(cost[i, perm[i]] for i in range(len(perm))))


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    zero = norms[:, 0] == 0.0
    if zero.any():
        logger.info("zero-norm queries at slots %s; cosine treated as 0", np.flatnonzero(zero).tolist())
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)


def link_adjacent(prev, nxt) -> np.ndarray:
    """Match the queries of two adjacent frames by maximum total cosine.

    Returns ``source`` with ``source[j]`` = the previous-frame slot linked to
    next-frame slot ``j``. With ``nxt = prev[perm]`` this recovers ``perm``.
    """
    prev = np.asarray(prev, dtype=float)
    nxt = np.asarray(nxt, dtype=float)
    if prev.shape != nxt.shape or prev.ndim != 2:
        raise ValueError(f"frame shapes differ: {prev.shape} vs {nxt.shape}")
    cost = -(_unit_rows(nxt) @ _unit_rows(prev).T)
    return hungarian(cost)


def track_video(frames) -> TrackSet:
    """Chain adjacent-frame links so every trajectory keeps its frame-0 id."""
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 3 or frames.shape[0] < 1:
        raise ValueError("frames must have shape (T, N, d) with T >= 1")
    T, N, _ = frames.shape
    slot_to_id = np.arange(N)
    slots = np.empty((N, T), dtype=np.intp)
    slots[:, 0] = np.arange(N)
    for f in range(1, T):
        source = link_adjacent(frames[f - 1], frames[f])
        slot_to_id = slot_to_id[source]
        slots[slot_to_id, f] = np.arange(N)
    return TrackSet(slots)


def window_inference(frames, window: int):
    """Track with windows of width ``window`` overlapping by one frame.

    Returns ``(TrackSet, centers)`` where ``centers[k]`` is the mean of
    id ``k``'s first- and last-frame query.
    """
    if window < 2:
        raise ValueError("window must be at least 2")
    frames = np.asarray(frames, dtype=float)
    T, N, _ = frames.shape
    slots = np.empty((N, T), dtype=np.intp)
    slots[:, 0] = np.arange(N)
    start = 0
    while True:
        stop = min(start + window, T)
        local = track_video(frames[start:stop])
        if start > 0:
            # hand-off through the shared frame: window-local id -> slot in the overlap
            handoff = link_adjacent(frames[start], frames[start])
            local_of_slot = np.empty(N, dtype=np.intp)
            local_of_slot[local.slots[:, 0]] = np.arange(N)
            # persistent id k sits at slot slots[k, start] of the previous window
            next_slot = np.argsort(handoff)
            local_ids = local_of_slot[next_slot[slots[:, start]]]
        else:
            local_ids = np.arange(N)
        slots[:, start:stop] = local.slots[local_ids]
        if stop >= T:
            break
        start = stop - 1
    tracks = TrackSet(slots)
    ids = np.arange(N)
    centers = 0.5 * (frames[0, slots[ids, 0]] + frames[T - 1, slots[ids, T - 1]])
    return tracks, centers
