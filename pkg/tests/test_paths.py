"""Brownian ensembles: distributional checks and exact reproducibility."""

import numpy as np
import pytest

from pathren.params import InvalidGrid, RngSpec, TimeGrid
from pathren.paths import (clamp_time, dump_ensemble, refine,
                           restore_ensemble, sample_ensemble,
                           sample_start_points)

import _oracles as O


def test_grid_validation():
    with pytest.raises(InvalidGrid):
        TimeGrid(t_horizon=1.0, n_steps=12, tau=1.0)   # not a power of two
    with pytest.raises(InvalidGrid):
        TimeGrid(t_horizon=1.0, n_steps=0, tau=1.0)
    with pytest.raises(InvalidGrid):
        TimeGrid(t_horizon=1.0, n_steps=8, tau=1.5)    # window beyond horizon
    with pytest.raises(InvalidGrid):
        TimeGrid(t_horizon=-1.0, n_steps=8, tau=0.5)
    g = TimeGrid(t_horizon=1.0, n_steps=8, tau=1.0)
    assert g.full_triangle and g.dt == pytest.approx(0.25)
    assert not TimeGrid(t_horizon=1.0, n_steps=8, tau=0.5).full_triangle


def test_seed_determinism_and_stream_independence():
    g = TimeGrid(t_horizon=0.5, n_steps=16, tau=0.5)
    a = sample_ensemble(g, 4, 2, RngSpec(seed=9))
    b = sample_ensemble(g, 4, 2, RngSpec(seed=9))
    np.testing.assert_array_equal(a.positions, b.positions)
    c = sample_ensemble(g, 4, 2, RngSpec(seed=9, stream_id=1))
    assert np.abs(a.positions[:, 1:] - c.positions[:, 1:]).min() > 0.0


def test_start_point_handling():
    g = TimeGrid(t_horizon=0.5, n_steps=4, tau=0.5)
    s = np.array([[1.0, 2.0, 3.0], [-1.0, 0.0, 0.5]])
    e = sample_ensemble(g, 3, 2, RngSpec(seed=1), start_points=s)
    np.testing.assert_array_equal(e.positions[:, 0], np.broadcast_to(s, (3, 2, 3)))
    with pytest.raises(InvalidGrid):
        sample_ensemble(g, 3, 2, RngSpec(seed=1), start_points=np.zeros((5, 3)))
    with pytest.raises(InvalidGrid):
        sample_ensemble(g, 0, 2, RngSpec(seed=1))


def test_increment_moments():
    # 1e4 paths, dt=0.01: per-coordinate increment variance within 5 SE
    g = TimeGrid(t_horizon=0.32, n_steps=64, tau=0.32)
    assert g.dt == pytest.approx(0.01)
    e = sample_ensemble(g, 10_000, 1, RngSpec(seed=5))
    inc = e.increments()[:, :, 0, 0].ravel()
    var = inc.var(ddof=1)
    se = var * np.sqrt(2.0 / (inc.size - 1))
    assert abs(var - 0.01) < 5.0 * se
    assert abs(inc.mean()) < 5.0 * np.sqrt(0.01 / inc.size)


def test_endpoint_variance_accumulates():
    g = TimeGrid(t_horizon=1.0, n_steps=32, tau=1.0)
    e = sample_ensemble(g, 8000, 1, RngSpec(seed=17))
    end = e.positions[:, -1, 0, :]
    var = end.var(axis=0, ddof=1)
    se = 2.0 * np.sqrt(2.0 / (8000 - 1))
    assert np.all(np.abs(var - 2.0) < 5.0 * se)   # total time span 2T = 2


def test_refine_keeps_coarse_nodes_exactly():
    g = TimeGrid(t_horizon=0.5, n_steps=8, tau=0.5)
    e = sample_ensemble(g, 5, 2, RngSpec(seed=2))
    r = refine(e, levels=2)
    assert r.grid.n_steps == 32
    np.testing.assert_array_equal(r.positions[:, ::4], e.positions)
    assert r.lineage == (("sample", 3), ("refine", 4), ("refine", 5))


def test_refine_midpoint_distribution():
    # conditional midpoint: N((a+b)/2, dt/4) per coordinate
    g = TimeGrid(t_horizon=0.5, n_steps=2, tau=0.5)
    e = sample_ensemble(g, 20_000, 1, RngSpec(seed=33))
    r = refine(e)
    mid = r.positions[:, 1, 0, :]
    cond_mean = 0.5 * (e.positions[:, 0, 0, :] + e.positions[:, 1, 0, :])
    resid = (mid - cond_mean).ravel()
    want = g.dt / 4.0
    var = resid.var(ddof=1)
    se = var * np.sqrt(2.0 / (resid.size - 1))
    assert abs(var - want) < 5.0 * se
    # refinement is reproducible
    r2 = refine(sample_ensemble(g, 20_000, 1, RngSpec(seed=33)))
    np.testing.assert_array_equal(r.positions, r2.positions)


def test_refinement_and_sampling_streams_differ():
    # a fine direct sample and a refined coarse sample share no noise
    g8 = TimeGrid(t_horizon=0.5, n_steps=8, tau=0.5)
    fine = sample_ensemble(TimeGrid(t_horizon=0.5, n_steps=16, tau=0.5),
                           2, 1, RngSpec(seed=4))
    refined = refine(sample_ensemble(g8, 2, 1, RngSpec(seed=4)))
    assert np.abs(fine.positions[:, 1:] - refined.positions[:, 1:]).min() > 0.0


def test_start_point_sampler_moments():
    s = sample_start_points(50_000, 2, np.zeros((2, 3)), 0.25, RngSpec(seed=8))
    assert s.shape == (50_000, 2, 3)
    assert abs(s.mean()) < 5.0 * np.sqrt(0.25 / (50_000 * 6))
    var = s.var(ddof=1)
    assert abs(var - 0.25) < 5.0 * var * np.sqrt(2.0 / (s.size - 1))
    # determinism and center shift
    s2 = sample_start_points(10, 2, np.ones((2, 3)), 0.25, RngSpec(seed=8))
    np.testing.assert_allclose(s2, s[:10] + 1.0)


def test_inverse_norm_monte_carlo_matches_constant():
    # E[1/|G|] for a standard 3-d Gaussian, used by the Kato checks
    s = sample_start_points(200_000, 1, np.zeros((1, 3)), 1.0, RngSpec(seed=21))
    inv = 1.0 / np.linalg.norm(s[:, 0, :], axis=1)
    se = inv.std(ddof=1) / np.sqrt(inv.size)
    assert abs(inv.mean() - O.E_INV_NORM_3D) < 4.0 * se


def test_dump_restore_roundtrip(tmp_path):
    g = TimeGrid(t_horizon=0.5, n_steps=8, tau=0.25)
    e = refine(sample_ensemble(g, 3, 2, RngSpec(seed=7, stream_id=2),
                               start_points=np.ones((2, 3))))
    f = tmp_path / "ens.npz"
    dump_ensemble(e, f)
    back = restore_ensemble(f)
    np.testing.assert_array_equal(back.positions, e.positions)
    np.testing.assert_array_equal(back.start_points, e.start_points)
    assert back.grid.n_steps == e.grid.n_steps
    assert back.grid.tau == e.grid.tau
    assert back.rng_spec == e.rng_spec
    assert back.lineage == e.lineage


def test_clamp_time():
    g = TimeGrid(t_horizon=1.0, n_steps=4, tau=1.0)
    np.testing.assert_allclose(clamp_time(g, np.array([-3.0, 0.2, 5.0])),
                               [-1.0, 0.2, 1.0])


def test_rng_spec_rejects_unknown_algorithm():
    with pytest.raises(ValueError):
        RngSpec(seed=1, algorithm_id="mt19937")
