"""Monte-Carlo elements: closed-form targets, statistics, error taxonomy."""

import numpy as np
import pytest

from pathren import estimator as E
from pathren.action import ActionConfig
from pathren.params import (BoundaryProfile, ModelParams, NonFiniteWeight,
                            NonPositiveEstimate, ProfileNotAdmissible,
                            ProposalMismatch, RngSpec, TimeGrid)
from pathren.paths import sample_ensemble

import _oracles as O


def packet(n_particles=1, width=1.0, center=0.0):
    c = np.full(3 * n_particles, float(center))
    return E.TestFunction(center=c, width=width)


def free_config(n_particles=1, eps=0.1, g=0.0):
    return ActionConfig(params=ModelParams(eps=eps, g=g, n_particles=n_particles))


# --------------------------------------------------------- test functions

def test_packet_unit_norm_numerically():
    f = packet(n_particles=2, width=0.7, center=0.3)
    # |f|^2 factorizes over the 6 coordinates; per-axis trapezoid is
    # superexponentially accurate on a truncated Gaussian.
    x = np.linspace(0.3 - 10 * 0.7, 0.3 + 10 * 0.7, 4001)
    axis = np.trapezoid((np.pi * 0.49) ** -0.5 * np.exp(-(x - 0.3) ** 2 / 0.49), x)
    assert abs(axis**6 - 1.0) < 1e-12
    # and log_value is consistent with that normalisation
    lv = f.log_value(np.full(6, 0.3))
    assert np.isclose(lv, -0.25 * 6 * np.log(np.pi * 0.49), rtol=1e-14)


def test_packet_shape_handling():
    f = packet(n_particles=2)
    flat = np.zeros(6)
    stacked = np.zeros((5, 2, 3))
    assert f.log_value(flat).shape == ()
    assert f.log_value(stacked).shape == (5,)
    with pytest.raises(ValueError):
        f.log_value(np.zeros(5))
    with pytest.raises(ValueError):
        E.TestFunction(center=np.zeros(4), width=1.0)
    with pytest.raises(ValueError):
        E.TestFunction(center=np.zeros(3), width=0.0)


def test_proposal_ratio_is_constant():
    f = packet(n_particles=2, width=0.8, center=-0.4)
    pts = np.random.default_rng(0).standard_normal((64, 2, 3))
    ratio = f.log_value(pts) - f.log_proposal(pts)
    expect = 0.25 * 6 * np.log(4.0 * np.pi * 0.64)
    assert np.allclose(ratio, expect, rtol=1e-13)


# --------------------------------------------------------------- potentials

def test_potential_values():
    pos = np.zeros((2, 3))
    well = E.Potential(kind="bounded-well", depth=2.0, width=1.5)
    assert np.isclose(well.evaluate(pos), -2.0)
    assert well.is_bounded and not well.is_singular

    harm = E.Potential(kind="harmonic", delta=0.25)
    p = np.array([[1.0, 2.0, 0.0], [0.0, 0.0, 3.0]])
    assert np.isclose(harm.evaluate(p), 0.25 * 14.0)
    assert not harm.is_bounded

    zero = E.Potential()
    assert zero.evaluate(np.zeros((4, 1, 3))).shape == (4,)
    assert np.all(zero.evaluate(np.zeros((4, 1, 3))) == 0.0)


def test_yukawa_pairwise_value_and_clip():
    yuk = E.Potential(kind="yukawa-pairwise", g=2.0, nu=0.5)
    d = 1.3
    p = np.array([[0.0, 0.0, 0.0], [d, 0.0, 0.0]])
    expect = -(4.0 / (4 * np.pi)) * np.exp(-0.5 * d) / d
    assert np.isclose(yuk.evaluate(p), expect, rtol=1e-14)
    assert yuk.is_singular
    coincident = np.zeros((2, 3))
    v = yuk.evaluate(coincident)
    assert np.isfinite(v) and np.isclose(v, -(4.0 / (4 * np.pi)) / 1e-10)


def test_pairwise_radial_orders_pairs():
    pot = E.Potential(kind="pairwise-radial", radial=lambda r: 1.0 / r,
                      radial_singular=True)
    p = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
    # ordered i != j doubles the i < j sum
    expect = 2.0 * (1 / 2.0 + 1 / 2.0 + 1 / (2.0 * np.sqrt(2.0)))
    assert np.isclose(pot.evaluate(p), expect, rtol=1e-13)
    assert pot.is_singular and not pot.is_bounded
    with pytest.raises(ValueError):
        E.Potential(kind="pairwise-radial")
    with pytest.raises(ValueError):
        E.Potential(kind="coulomb")


# --------------------------------------------------------- batch statistics

def test_batch_se_matches_classic_on_iid():
    x = np.random.default_rng(1).standard_normal(10000)
    se = E.batch_std_error(x)
    classic = x.std(ddof=1) / 100.0
    assert abs(se / classic - 1.0) < 0.25
    assert E.batch_std_error(np.array([1.0])) == np.inf


def test_moment_merge_is_order_free():
    x = np.random.default_rng(2).standard_normal(999)
    chunks = [x[:100], x[100:450], x[450:]]
    forward = E.moments_of(np.array([]))
    for c in chunks:
        forward = E.merge_moments(forward, E.moments_of(c))
    backward = E.moments_of(np.array([]))
    for c in reversed(chunks):
        backward = E.merge_moments(backward, E.moments_of(c))
    direct = E.moments_of(x)
    for merged in (forward, backward):
        assert merged[0] == 999
        assert np.isclose(merged[1], direct[1], rtol=1e-12, atol=1e-15)
        assert np.isclose(merged[2], direct[2], rtol=1e-12)
    se = E.std_error_from_moments(forward)
    assert np.isclose(se, x.std(ddof=1) / np.sqrt(999), rtol=1e-12)


# ----------------------------------------------------------- free elements

@pytest.mark.parametrize("n_particles,width", [(1, 1.0), (2, 0.8)])
def test_free_element_matches_closed_form(n_particles, width):
    f = packet(n_particles, width)
    grid = TimeGrid(1.0, 32, 1.0)
    est = E.semigroup_element(f, f, None, free_config(n_particles), grid,
                              10000, RngSpec(seed=21))
    exact = O.free_element_closed_form(2.0, width, n_particles)
    assert est.n_samples == 10000
    assert est.std_error > 0.0 and est.wall_time >= 0.0
    assert abs(est.mean - exact) < 3.0 * est.std_error


def test_element_seed_determinism():
    f = packet()
    grid = TimeGrid(0.5, 16, 0.5)
    pot = E.Potential(kind="bounded-well", depth=1.0, width=1.0)
    a = E.semigroup_element(f, f, pot, free_config(), grid, 500, RngSpec(seed=7))
    b = E.semigroup_element(f, f, pot, free_config(), grid, 500, RngSpec(seed=7))
    c = E.semigroup_element(f, f, pot, free_config(), grid, 500, RngSpec(seed=8))
    assert a.mean == b.mean and a.std_error == b.std_error
    assert a.mean != c.mean


def test_standard_error_scaling_with_sample_size():
    f = packet(width=0.9)
    grid = TimeGrid(0.5, 16, 0.5)
    pot = E.Potential(kind="bounded-well", depth=2.0, width=0.7)
    small = E.semigroup_element(f, f, pot, free_config(), grid, 800, RngSpec(seed=13))
    large = E.semigroup_element(f, f, pot, free_config(), grid, 3200, RngSpec(seed=13))
    ratio = small.std_error / large.std_error
    assert 2.0 * 0.7 < ratio < 2.0 * 1.3


def test_swap_of_test_functions_agrees_within_error():
    # the element is symmetric under exchanging the two slots even though
    # the proposal (and hence the path measure) follows the left one
    f = packet(width=1.0, center=0.0)
    h = packet(width=0.7, center=0.5)
    grid = TimeGrid(0.5, 16, 0.5)
    fh = E.semigroup_element(f, h, None, free_config(), grid, 6000, RngSpec(seed=29))
    hf = E.semigroup_element(h, f, None, free_config(), grid, 6000, RngSpec(seed=30))
    assert abs(fh.mean - hf.mean) < 3.0 * (fh.std_error + hf.std_error)


def test_deep_well_lowers_element_monotonically():
    f = packet()
    grid = TimeGrid(0.5, 16, 0.5)
    means = []
    for depth in (0.0, 0.5, 1.0):
        pot = E.Potential(kind="bounded-well", depth=depth, width=1.0)
        means.append(E.semigroup_element(f, f, pot, free_config(), grid, 800,
                                         RngSpec(seed=3)).mean)
    # attractive well: e^{-Int V} >= 1 grows with depth on common paths
    assert means[0] < means[1] < means[2]


def test_coupling_switches_off_continuously():
    f = packet()
    grid = TimeGrid(0.5, 16, 0.5)
    base = E.semigroup_element(f, f, None, free_config(g=0.0), grid, 512,
                               RngSpec(seed=41)).mean
    gaps = []
    for g in (0.5, 0.25, 0.125):
        est = E.semigroup_element(f, f, None, free_config(g=g), grid, 512,
                                  RngSpec(seed=41))
        gaps.append(abs(est.mean - base))
    assert gaps[0] > gaps[1] > gaps[2]
    # leading order is g^2: each halving shrinks the gap ~4x
    assert gaps[2] < 0.1 * gaps[0]
    assert gaps[2] < 0.05 * abs(base)


# ------------------------------------------------------------ energy proxy

def test_free_energy_proxy_tracks_closed_form():
    f = packet()
    grids = [TimeGrid(0.5, 16, 0.5), TimeGrid(2.0, 64, 2.0)]
    rows = E.ground_energy_proxy(f, None, free_config(), grids, 4000,
                                 RngSpec(seed=17))
    for (t, val, band), grid in zip(rows, grids):
        exact = -np.log(O.free_element_closed_form(2.0 * t, 1.0, 1)) / (2.0 * t)
        assert t == grid.t_horizon
        assert abs(val - exact) < 3.0 * band
    # proxy decays toward the true bottom of the free spectrum (zero)
    assert rows[1][1] < rows[0][1]


def test_harmonic_proxy_near_oscillator_ground_energy():
    delta = 0.25
    omega = np.sqrt(2.0 * delta)
    f = packet(width=np.sqrt(1.0 / omega))  # ground-state width
    pot = E.Potential(kind="harmonic", delta=delta)
    rows = E.ground_energy_proxy(f, pot, free_config(), [TimeGrid(2.0, 128, 2.0)],
                                 4000, RngSpec(seed=23))
    t, val, band = rows[0]
    assert abs(val - O.HARMONIC_E0_D025) < 0.05


# ------------------------------------------------------------- error paths

def test_proposal_mismatch_raises():
    f = E.TestFunction(center=np.zeros(3), width=1.0, kind="custom")
    h = packet()
    grid = TimeGrid(0.5, 16, 0.5)
    with pytest.raises(ProposalMismatch):
        E.semigroup_element(f, h, None, free_config(), grid, 8, RngSpec(seed=0))


def test_particle_count_mismatch_raises():
    grid = TimeGrid(0.5, 16, 0.5)
    with pytest.raises(ValueError):
        E.semigroup_element(packet(2), packet(2), None, free_config(1), grid,
                            8, RngSpec(seed=0))
    with pytest.raises(ValueError):
        E.semigroup_element(packet(1), packet(2), None, free_config(1), grid,
                            8, RngSpec(seed=0))


def test_overflowing_weight_reports_seed():
    f = packet()
    pot = E.Potential(kind="bounded-well", depth=1e6, width=5.0)
    grid = TimeGrid(0.5, 16, 0.5)
    with pytest.raises(NonFiniteWeight) as err:
        E.semigroup_element(f, f, pot, free_config(), grid, 16, RngSpec(seed=77))
    assert "seed=77" in str(err.value)


def test_vanishing_element_refuses_logarithm():
    f = packet(width=0.5)
    h = packet(width=0.5, center=60.0)  # overlap underflows to exactly 0
    grid = TimeGrid(0.5, 16, 0.5)
    est = E.semigroup_element(f, h, None, free_config(), grid, 32, RngSpec(seed=5))
    assert est.mean == 0.0
    # a strong repulsive core drives every weight to exact zero
    wall = E.Potential(kind="bounded-well", depth=-1e6, width=5.0)
    with pytest.raises(NonPositiveEstimate):
        E.ground_energy_proxy(f, wall, free_config(), [grid], 32, RngSpec(seed=5))


# ------------------------------------------------------- boundary pairing

P_XI = ModelParams(eps=0.0, lam=1.0, g=0.7, n_particles=1)
P_XI_G0 = ModelParams(eps=0.0, lam=1.0, g=0.0, n_particles=1)
XI_GRID = TimeGrid(1.0, 16, 1.0)


def xi_spec(alpha, beta):
    return E.XiSpec(BoundaryProfile(0.8), BoundaryProfile(1.2), alpha, beta)


def test_xi_field_terms_match_frozen_overlaps():
    path = np.zeros((XI_GRID.n_steps + 1, 1, 3))
    n1 = E.compute_xi(path, xi_spec(1.0, 0.0), P_XI_G0, XI_GRID)
    n2 = E.compute_xi(path, xi_spec(0.0, 1.0), P_XI_G0, XI_GRID)
    both = E.compute_xi(path, xi_spec(1.0, 1.0), P_XI_G0, XI_GRID)
    assert np.isclose(n1, O.XI_NORM_W08, rtol=1e-8)
    assert np.isclose(n2, O.XI_NORM_W12, rtol=1e-8)
    cross = 0.5 * (both - n1 - n2)
    assert np.isclose(cross, O.XI_CROSS_W08_W12_T1, rtol=1e-8)


def test_xi_zero_weights_vanish():
    path = np.random.default_rng(0).standard_normal((XI_GRID.n_steps + 1, 1, 3))
    assert E.compute_xi(path, xi_spec(0.0, 0.0), P_XI, XI_GRID) == 0.0


def test_xi_path_independent_without_coupling():
    rng = np.random.default_rng(4)
    p1 = rng.standard_normal((XI_GRID.n_steps + 1, 1, 3))
    p2 = rng.standard_normal((XI_GRID.n_steps + 1, 1, 3))
    spec = xi_spec(0.6, -0.2)
    assert E.compute_xi(p1, spec, P_XI_G0, XI_GRID) == \
        E.compute_xi(p2, spec, P_XI_G0, XI_GRID)


def test_xi_path_terms_within_uniform_bound():
    ens = sample_ensemble(XI_GRID, 8, 1, RngSpec(seed=5))
    spec = xi_spec(0.4, -0.3)
    field_only = E.compute_xi(ens.positions[0], spec, P_XI_G0, XI_GRID)
    g = P_XI.g
    bound = (2 * 0.4 * g * O.XI_PATH_BOUND_W08 + 2 * 0.3 * g * O.XI_PATH_BOUND_W12)
    for i in range(ens.n_paths):
        xi = E.compute_xi(ens.positions[i], spec, P_XI, XI_GRID)
        assert abs(xi - field_only) <= bound


def test_xi_rejects_bad_profiles_and_shapes():
    with pytest.raises(ProfileNotAdmissible):
        E.XiSpec(BoundaryProfile(-1.0), BoundaryProfile(1.0), 1.0, 0.0)
    with pytest.raises(ValueError):
        E.XiSpec(BoundaryProfile(0.8), BoundaryProfile(1.2), np.inf, 0.0)
    with pytest.raises(ValueError):
        E.compute_xi(np.zeros((4, 1, 3)), xi_spec(1.0, 0.0), P_XI, XI_GRID)
    with pytest.raises(ValueError):
        E.compute_xi(np.zeros((17, 3)), xi_spec(1.0, 0.0), P_XI, XI_GRID)


# ------------------------------------------------------- weak-coupling sweep

def test_weak_coupling_single_particle_reference_is_free():
    f = packet()
    grid = TimeGrid(0.5, 32, 0.5)
    rows = E.weak_coupling_compare(f, f, [1.0, 4.0, 16.0], 0.5, grid, 64,
                                   RngSpec(seed=9), g=1.0)
    free = E.semigroup_element(f, f, None, free_config(g=0.0), grid, 64,
                               RngSpec(seed=9))
    for row in rows:
        assert row["reference"] == free.mean  # same paths, no pair term
    gaps = [abs(r["gap"]) for r in rows]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] <= 3.0 * max(rows[2]["gap_se"], 1e-12) + 1e-4


def test_weak_coupling_zero_coupling_collapses_columns():
    f = packet()
    grid = TimeGrid(0.5, 16, 0.5)
    rows = E.weak_coupling_compare(f, f, [1.0, 8.0], 0.5, grid, 32,
                                   RngSpec(seed=2), g=0.0)
    for row in rows:
        assert row["element"] == row["reference"]
        assert row["gap"] == 0.0 and row["gap_se"] == 0.0


def test_weak_coupling_external_potential_shared():
    f = packet()
    grid = TimeGrid(0.5, 16, 0.5)
    pot = E.Potential(kind="bounded-well", depth=1.0, width=1.0)
    plain = E.weak_coupling_compare(f, f, [2.0], 0.5, grid, 32, RngSpec(seed=6),
                                    g=0.5)
    welled = E.weak_coupling_compare(f, f, [2.0], 0.5, grid, 32, RngSpec(seed=6),
                                     potential=pot, g=0.5)
    # the attractive well scales both columns up without flipping the gap sign
    assert welled[0]["element"] > plain[0]["element"]
    assert welled[0]["reference"] > plain[0]["reference"]
