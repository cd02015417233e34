"""Randomized finite-difference audit of every hand-derived gradient."""

from __future__ import annotations

import time

import numpy as np

from .bridge import TimeTriple
from .objectives import (BridgeTriplet, BtaParams, TripletBatch, bridge_contrastive_loss,
                         bridge_text_contrastive_loss, bta_loss, finite_difference_check,
                         head_tail_matching_loss)
from .trainer import gradcheck_projector, init_projector

CHECKS = ("htm", "bc", "btc", "bta", "projector_linear", "projector_mlp")
LOSS_THRESHOLD = 1e-6
END_TO_END_THRESHOLD = 1e-5


def _unit(x):
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def _times(rng, T=9):
    return tuple(int(v) for v in np.sort(rng.choice(T, 3, replace=False)) + 1)


def random_batch(rng, n, d, n_categories):
    emb = _unit(rng.standard_normal((n, 3, d)))
    times = [_times(rng) for _ in range(n)]
    return TripletBatch(emb, times, np.arange(n), rng.integers(0, n_categories, n))


def _bank(rng, C, d):
    return _unit(rng.standard_normal((C, d)))


def _corrupted(fn, corrupt):
    if not corrupt:
        return fn

    def wrapped(x):
        value, grad = fn(x)
        return value, np.asarray(grad) * 1.01

    return wrapped


def check_htm(rng, eps, corrupt=False):
    d = int(rng.integers(2, 9))
    delta = float(rng.uniform(-1.0, 1.0))

    def fn(x):
        loss, (gh, gt) = head_tail_matching_loss(x[0], x[1], delta)
        return loss, np.stack([gh, gt])

    return finite_difference_check(_corrupted(fn, corrupt), _unit(rng.standard_normal((2, d))), eps)


def check_bc(rng, eps, corrupt=False):
    d = int(rng.integers(2, 9))
    m = int(rng.integers(0, 6))
    times = [TimeTriple(*_times(rng)) for _ in range(m + 1)]

    def fn(x):
        anchor = BridgeTriplet(*x[0], times[0])
        negs = [BridgeTriplet(*x[j], times[j]) for j in range(1, m + 1)]
        loss, (ga, gn) = bridge_contrastive_loss(anchor, negs)
        return loss, np.concatenate([ga[None], gn])

    return finite_difference_check(_corrupted(fn, corrupt), _unit(rng.standard_normal((m + 1, 3, d))), eps)


def check_btc(rng, eps, corrupt=False):
    d = int(rng.integers(2, 9))
    C = int(rng.integers(1, 7))
    bank = _bank(rng, C, d)
    pos = int(rng.integers(0, C))
    temp = float(rng.uniform(0.1, 2.0))
    renorm = bool(rng.integers(0, 2))

    def fn(x):
        loss, (gh, gt) = bridge_text_contrastive_loss(x[0], x[1], bank, pos, temp, renorm)
        return loss, np.stack([gh, gt])

    return finite_difference_check(_corrupted(fn, corrupt), _unit(rng.standard_normal((2, d))), eps)


def _random_params(rng):
    return BtaParams(delta=float(rng.uniform(0.1, 0.9)), k=int(rng.integers(1, 6)),
                     temperature=float(rng.uniform(0.1, 2.0)), renormalize_center=bool(rng.integers(0, 2)))


def check_bta(rng, eps, corrupt=False):
    d = int(rng.integers(2, 7))
    n = int(rng.integers(1, 9))
    C = int(rng.integers(1, 6))
    batch = random_batch(rng, n, d, C)
    bank = _bank(rng, C, d)
    params = _random_params(rng)

    def fn(x):
        report = bta_loss(batch.with_embeddings(x), bank, params)
        return report.total, report.grads

    return finite_difference_check(_corrupted(fn, corrupt), batch.embeddings, eps)


def _check_projector(rng, eps, kind, corrupt=False):
    d_in, d_out = int(rng.integers(3, 7)), int(rng.integers(2, 5))
    n, C = int(rng.integers(1, 6)), int(rng.integers(1, 5))
    raw = TripletBatch(rng.standard_normal((n, 3, d_in)), [_times(rng) for _ in range(n)],
                       np.arange(n), rng.integers(0, C, n))
    projector = init_projector(rng, d_in, d_out, kind, hidden=int(rng.integers(2, 6)))
    bank = _bank(rng, C, d_out)
    params = _random_params(rng)
    if not corrupt:
        return gradcheck_projector(projector, raw, bank, params, eps)
    from .trainer import projected_loss

    def fn(vec):
        report, grads = projected_loss(projector.with_flat(vec), raw, bank, params)
        return report.total, 1.01 * np.concatenate([grads[k].ravel() for k in sorted(grads)])

    return finite_difference_check(fn, projector.flat(), eps)


CHECK_FUNCS = {
    "htm": check_htm,
    "bc": check_bc,
    "btc": check_btc,
    "bta": check_bta,
    "projector_linear": lambda rng, eps, corrupt=False: _check_projector(rng, eps, "linear", corrupt),
    "projector_mlp": lambda rng, eps, corrupt=False: _check_projector(rng, eps, "mlp", corrupt),
}


def threshold(name: str) -> float:
    return END_TO_END_THRESHOLD if name.startswith("projector") else LOSS_THRESHOLD


def run_gradcheck(seed: int, trials: int, eps: float = 1e-6, corrupt: bool = False) -> dict:
    """Max relative error per check over ``trials`` random configurations each."""
    start = time.perf_counter()
    errors = {}
    if trials > 0:
        for i, name in enumerate(CHECKS):
            rng = np.random.default_rng([seed, i])
            errors[name] = max(CHECK_FUNCS[name](rng, eps, corrupt) for _ in range(trials))
    failed = [name for name, err in errors.items() if err > END_TO_END_THRESHOLD]
    return {
        "seed": seed,
        "trials": trials,
        "eps": eps,
        "max_relative_error": errors,
        "thresholds": {name: threshold(name) for name in errors},
        "exit_threshold": END_TO_END_THRESHOLD,
        "failed": failed,
        "passed": not failed,
        "seconds": time.perf_counter() - start,
    }
