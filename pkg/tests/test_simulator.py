import itertools

import numpy as np
import pytest

from bridgealign.bridge import bridge_distance
from bridgealign.metrics import bridge_deviation
from bridgealign.simulator import (InfeasibleBankError, SimConfig, SyntheticVideo, generate_category_bank,
                                   generate_context, generate_video, generate_video_set, isometry,
                                   sample_triplet_batch, valid_triples)


def check_bank(bank, cap):
    emb = bank.embeddings
    np.testing.assert_allclose(np.linalg.norm(emb, axis=1), 1.0, atol=1e-9)
    for i, j in itertools.combinations(range(len(emb)), 2):
        assert emb[i] @ emb[j] <= cap + 1e-12


def test_bank_single_category():
    bank = generate_category_bank(np.random.default_rng(0), 1, 5)
    assert bank.embeddings.shape == (1, 5)
    check_bank(bank, 0.3)


def test_bank_orthogonal_fallback():
    bank = generate_category_bank(np.random.default_rng(0), 2, 8, max_similarity=0.0)
    np.testing.assert_allclose(bank.embeddings @ bank.embeddings.T, np.eye(2), atol=1e-12)


def test_bank_twenty_in_32_dims():
    bank = generate_category_bank(np.random.default_rng(1), 20, 32, 0.3)
    assert len(bank) == 20 and len(set(bank.names)) == 20
    check_bank(bank, 0.3)


@pytest.mark.parametrize("seed", range(5))
def test_bank_invariants_hold_post_hoc(seed):
    cfg = SimConfig()
    check_bank(generate_category_bank(np.random.default_rng(seed), cfg.C, cfg.d_out, cfg.max_similarity),
               cfg.max_similarity)


def test_bank_infeasible():
    with pytest.raises(InfeasibleBankError):
        generate_category_bank(np.random.default_rng(0), 3, 2, max_similarity=0.0)
    with pytest.raises(InfeasibleBankError):
        generate_category_bank(np.random.default_rng(0), 50, 2, max_similarity=0.1, max_attempts=500)


def test_bank_determinism():
    a = generate_category_bank(np.random.default_rng(4), 6, 10)
    b = generate_category_bank(np.random.default_rng(4), 6, 10)
    assert a.embeddings.tobytes() == b.embeddings.tobytes()


def small_config(**kw):
    base = dict(C=4, instances_per_category=3, T=6, d_in=12, d_out=6, instances_per_video=5)
    base.update(kw)
    return SimConfig(**base)


def bank_for(cfg, seed=0):
    return generate_category_bank(np.random.default_rng(seed), cfg.C, cfg.d_out, cfg.max_similarity)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(C=0)
    with pytest.raises(ValueError):
        SimConfig(noise_sigma=-0.1)
    with pytest.raises(ValueError):
        SimConfig(d_in=4, d_out=8)


def test_unshuffled_identities_and_exact_endpoints():
    cfg = small_config(noise_sigma=0.0)
    bank = bank_for(cfg)
    video = generate_video(cfg, bank, np.random.default_rng(1))
    np.testing.assert_array_equal(video.gt_identities, np.tile(np.arange(video.n_instances), (cfg.T, 1)))
    U = isometry(cfg)
    np.testing.assert_allclose(video.frames, np.swapaxes(video.gt_clean, 0, 1) @ U.T, atol=1e-14)
    # endpoints sit at the configured angle from their category direction
    cos = np.einsum("nd,nd->n", video.gt_clean[:, 0], bank.embeddings[video.gt_categories])
    np.testing.assert_allclose(cos, np.cos(cfg.endpoint_spread), atol=1e-12)


def test_isometry_has_orthonormal_columns():
    U = isometry(SimConfig())
    np.testing.assert_allclose(U.T @ U, np.eye(16), atol=1e-12)


def test_zero_variance_bridge_is_exactly_linear():
    cfg = small_config(noise_sigma=0.0, bridge_sigma=0.0)
    video = generate_video(cfg, bank_for(cfg), np.random.default_rng(2))
    for traj in video.gt_clean:
        assert bridge_deviation(traj) == pytest.approx(0.0, abs=1e-24)
        for s, t, e in valid_triples(cfg.T):
            assert bridge_distance(traj[s - 1], traj[t - 1], traj[e - 1], (s, t, e)) == pytest.approx(0.0, abs=1e-20)


def test_bridge_middles_follow_the_bridge_law():
    # interior deviation from the chord has variance bridge_sigma^2 * t(T-t)/T per coordinate on the
    # stretched time axis
    cfg = small_config(C=1, instances_per_category=4000, T=5, noise_sigma=0.0, endpoint_spread=0.4)
    video = generate_video(cfg, bank_for(cfg), np.random.default_rng(3))
    clean = video.gt_clean
    horizon = cfg.bridge_sigma ** 2
    times = np.linspace(0, horizon, cfg.T)
    n = len(clean)
    for f in range(1, cfg.T - 1):
        w = times[f] / horizon
        resid = clean[:, f] - (1 - w) * clean[:, 0] - w * clean[:, -1]
        var = times[f] * (horizon - times[f]) / horizon
        assert np.all(np.abs(resid.mean(axis=0)) <= 3 * np.sqrt(var / n))
        assert np.all(np.abs(resid.var(axis=0, ddof=1) - var) <= 3 * var * np.sqrt(2 / (n - 1)))


def test_shuffle_is_recorded_bijection():
    cfg = small_config(shuffle=True, noise_sigma=0.0)
    video = generate_video(cfg, bank_for(cfg), np.random.default_rng(4))
    for f in range(cfg.T):
        assert sorted(video.gt_identities[f].tolist()) == list(range(video.n_instances))
    U = isometry(cfg)
    # undoing the recorded shuffles reproduces the clean layout exactly
    np.testing.assert_allclose(video.instance_frames(), video.gt_clean @ U.T, atol=1e-14)


def test_default_label_histogram_uniform():
    cfg = SimConfig()
    videos = generate_video_set(cfg, bank_for(cfg, 7), np.random.default_rng([cfg.seed, 2]))
    labels = np.concatenate([v.gt_categories for v in videos])
    assert np.array_equal(np.bincount(labels, minlength=cfg.C), np.full(cfg.C, cfg.instances_per_category))
    ids = np.concatenate([v.instance_ids for v in videos])
    assert np.array_equal(np.sort(ids), np.arange(cfg.C * cfg.instances_per_category))
    assert all(v.frames.shape == (cfg.T, cfg.instances_per_video, cfg.d_in) for v in videos)


def test_default_single_video_histogram_uniform():
    cfg = SimConfig()
    video = generate_video(cfg, bank_for(cfg, 7), np.random.default_rng(0))
    assert np.all(np.bincount(video.gt_categories) == cfg.instances_per_category)


def test_video_determinism():
    cfg = small_config(shuffle=True)
    bank = bank_for(cfg)
    a = generate_video_set(cfg, bank, np.random.default_rng(5))
    b = generate_video_set(cfg, bank, np.random.default_rng(5))
    for x, y in zip(a, b):
        assert x.frames.tobytes() == y.frames.tobytes()
        assert np.array_equal(x.gt_identities, y.gt_identities)


def test_context_examples():
    frames = np.array([[[0.3, -0.2, 0.9]]])
    video = SyntheticVideo(frames, np.zeros((1, 1), dtype=int), np.zeros(1, dtype=int), frames.copy())
    ctx = generate_context(np.random.default_rng(0), video, (1, 1, 1), noise=0.0)
    for s in ctx.scales:
        np.testing.assert_allclose(s[0, 0], frames[0, 0])
    cfg = small_config()
    video = generate_video(cfg, bank_for(cfg), np.random.default_rng(6))
    ctx = generate_context(np.random.default_rng(1), video, (7, 3, 2))
    assert [s.shape for s in ctx.scales] == [(cfg.T, k, cfg.d_in) for k in (7, 3, 2)]
    again = generate_context(np.random.default_rng(1), video, (7, 3, 2))
    assert all(x.tobytes() == y.tobytes() for x, y in zip(ctx.scales, again.scales))
    with pytest.raises(ValueError):
        generate_context(np.random.default_rng(1), video, (7, 0, 2))


def test_triplets_for_three_frames():
    cfg = small_config(T=3)
    videos = generate_video_set(cfg, bank_for(cfg), np.random.default_rng(7))
    rng = np.random.default_rng(8)
    for _ in range(20):
        batch = sample_triplet_batch(videos, rng)
        assert np.all(batch.times == [1, 2, 3])


def test_triplet_batch_contents():
    cfg = small_config(shuffle=True)
    videos = generate_video_set(cfg, bank_for(cfg), np.random.default_rng(9))
    batch = sample_triplet_batch(videos, np.random.default_rng(10))
    assert len(batch) == cfg.C * cfg.instances_per_category
    assert np.all((batch.times[:, 0] < batch.times[:, 1]) & (batch.times[:, 1] < batch.times[:, 2]))
    s, t, e = batch.times[0]
    inst = videos[0].instance_frames()
    np.testing.assert_array_equal(batch.embeddings[0], inst[0, [s - 1, t - 1, e - 1]])
    np.testing.assert_array_equal(batch.category_ids[:cfg.instances_per_video], videos[0].gt_categories)


def test_triplet_sampling_is_uniform_over_triples():
    cfg = small_config(C=1, instances_per_category=1, T=5, instances_per_video=1)
    video = generate_video(cfg, bank_for(cfg), np.random.default_rng(11), [0])
    rng = np.random.default_rng(12)
    n = 10_000
    triples = valid_triples(5)
    assert len(triples) == 10
    counts = dict.fromkeys(triples, 0)
    for _ in range(n):
        counts[tuple(int(x) for x in sample_triplet_batch([video], rng).times[0])] += 1
    p = 1 / len(triples)
    se = np.sqrt(n * p * (1 - p))
    assert all(abs(c - n * p) <= 3 * se for c in counts.values())


def test_triplets_need_three_frames():
    cfg = small_config(T=2)
    video = generate_video(cfg, bank_for(cfg), np.random.default_rng(13))
    with pytest.raises(ValueError):
        sample_triplet_batch([video], np.random.default_rng(0))
