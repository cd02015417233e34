"""Closed-form Brownian motion / Brownian bridge math.

Times are integer frame indices lifted to reals. The bridge distance uses raw
index differences, so ``beta = (t - s) / (e - s)`` and
``sigma^2 = (t - s)(e - t) / (e - s)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TimeTriple:
    """Frame indices ``s < t < e`` of a (head, middle, tail) triplet."""

    s: int
    t: int
    e: int

    def __post_init__(self):
        if not (self.s < self.t < self.e):
            raise ValueError(f"need s < t < e, got ({self.s}, {self.t}, {self.e})")

    @property
    def beta(self) -> float:
        return (self.t - self.s) / (self.e - self.s)

    @property
    def variance(self) -> float:
        return (self.t - self.s) * (self.e - self.t) / (self.e - self.s)


@dataclass
class ProcessPath:
    times: np.ndarray
    states: np.ndarray  # (len(times), d)

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")


def _as_triple(times) -> TimeTriple:
    if isinstance(times, TimeTriple):
        return times
    return TimeTriple(*(int(x) for x in times))


def _check_same_dim(*vecs):
    dims = {np.shape(v) for v in vecs}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch: {sorted(dims)}")


def bridge_mean(z0, zT, t: float, T: float) -> np.ndarray:
    z0 = np.asarray(z0, dtype=float)
    zT = np.asarray(zT, dtype=float)
    _check_same_dim(z0, zT)
    if T <= 0:
        raise ValueError("T must be positive")
    if not 0 <= t <= T:
        raise ValueError(f"t={t} outside [0, {T}]")
    w = t / T
    return (1.0 - w) * z0 + w * zT


def bridge_variance(times) -> float:
    return _as_triple(times).variance


def bridge_distance(head, mid, tail, times) -> float:
    """Negative scaled squared deviation of ``mid`` from the bridge mean. Always <= 0."""
    head, mid, tail = (np.asarray(v, dtype=float) for v in (head, mid, tail))
    _check_same_dim(head, mid, tail)
    tt = _as_triple(times)
    beta = tt.beta
    r = mid - (1.0 - beta) * head - beta * tail
    return -float(r @ r) / (2.0 * tt.variance)


def bridge_center(head, tail, renormalize: bool = False) -> np.ndarray:
    head = np.asarray(head, dtype=float)
    tail = np.asarray(tail, dtype=float)
    _check_same_dim(head, tail)
    c = 0.5 * (head + tail)
    if renormalize:
        n = np.linalg.norm(c)
        if n == 0.0:
            raise ValueError("cannot renormalize a zero bridge center")
        c = c / n
    return c


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise ValueError("times must be a non-empty 1-D array")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    return times


def sample_brownian_motion(rng: np.random.Generator, times, d: int) -> ProcessPath:
    times = _check_times(times)
    if times[0] < 0:
        raise ValueError("times must start at or after 0")
    dt = np.diff(times, prepend=0.0)
    # W(0) = 0 exactly; the first draw has variance times[0]
    steps = rng.standard_normal((len(times), d)) * np.sqrt(dt)[:, None]
    return ProcessPath(times, np.cumsum(steps, axis=0))


def sample_brownian_bridge(rng: np.random.Generator, z0, zT, times, T: float) -> ProcessPath:
    """Sample a bridge pinned at ``z0`` (time 0) and ``zT`` (time ``T``).

    Draws a Wiener path on the requested times and applies the pinning
    transform ``B(t) = W(t) - (t/T) W(T)``, which yields the exact joint law
    with marginal variance ``t(T - t)/T``. Endpoints are returned exactly.
    """
    z0 = np.asarray(z0, dtype=float)
    zT = np.asarray(zT, dtype=float)
    _check_same_dim(z0, zT)
    times = _check_times(times)
    if T <= 0:
        raise ValueError("T must be positive")
    if times[0] < 0 or times[-1] > T:
        raise ValueError(f"times must lie in [0, {T}]")
    d = z0.shape[0]
    grid = times if times[-1] == T else np.append(times, T)
    w = sample_brownian_motion(rng, grid, d).states
    frac = (times / T)[:, None]
    noise = w[: len(times)] - frac * w[-1]
    states = (1.0 - frac) * z0 + frac * zT + noise
    # pin endpoints exactly, free of rounding in the interpolation
    states[times == 0.0] = z0
    states[times == T] = zT
    return ProcessPath(times, states)
