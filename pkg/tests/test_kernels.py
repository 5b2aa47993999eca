"""Kernel evaluations against frozen references and internal identities."""

import numpy as np
import pytest

from pathren import kernels
from pathren.oracle3d import oracle_kernel_3d
from pathren.params import (BoundaryProfile, BudgetExceeded, ModelParams,
                            ProfileNotAdmissible, QuadratureSpec,
                            SingularPoint, scaled_params)

import _oracles as O


def P(eps, lam=1.0, **kw):
    return ModelParams(eps=eps, lam=lam, **kw)


# ----------------------------------------------------------- frozen spots

def test_w_frozen_spots():
    assert kernels.eval_W(P(0.0), 0.0, 1.0).value == pytest.approx(O.W_EX_T1, rel=1e-9)
    assert kernels.eval_W(P(0.5), 0.7, 0.3).value == pytest.approx(O.W_SPOT_A, rel=1e-9)
    assert kernels.eval_W(P(0.0), 0.9, 0.4).value == pytest.approx(O.W_SPOT_B, rel=1e-9)
    assert kernels.eval_W(P(0.1), 0.0, 0.25).value == pytest.approx(O.W_SPOT_C, rel=1e-9)


def test_phi_frozen_spots():
    assert kernels.eval_phi(P(0.5), 0.7, 0.3).value == pytest.approx(O.PHI_SPOT_A, rel=1e-9)
    assert kernels.eval_phi(P(0.0), 0.7, 0.3).value == pytest.approx(O.PHI_SPOT_B, rel=1e-9)
    assert kernels.eval_phi(P(0.1), 0.0, 0.25).value == pytest.approx(O.PHI_SPOT_C, rel=1e-9)
    # oscillatory tail with a sign flip
    assert kernels.eval_phi(P(0.0), 2.5, 0.0).value == pytest.approx(O.PHI_SPOT_D, rel=1e-8)


def test_phi_diag_frozen_values():
    for eps, want in [(1.0, O.PHI00_EPS_1), (0.5, O.PHI00_EPS_05),
                      (0.1, O.PHI00_EPS_01), (0.05, O.PHI00_EPS_005),
                      (0.01, O.PHI00_EPS_001), (0.001, O.PHI00_EPS_0001)]:
        assert kernels.phi_diag(P(eps)).value == pytest.approx(want, rel=1e-10), eps


def test_grad_phi_frozen_spot():
    v = kernels.eval_grad_phi(P(0.1), np.array([1.0, 0.0, 0.0]), 0.5)
    assert v.value[0] == pytest.approx(O.DPHI_DU_SPOT, rel=1e-8)
    assert v.value[1] == v.value[2] == 0.0


def test_scaled_family_frozen_spots():
    p = scaled_params(eps=0.0, kappa=2.0, nu=0.5)
    assert kernels.eval_phi_scaled(p, 0.8, 0.2).value == pytest.approx(
        O.PHI_SCALED_SPOT, rel=1e-9)
    p4 = scaled_params(eps=0.0, kappa=4.0, nu=0.5)
    assert kernels.eval_phi_scaled(p4, 1.0, 0.0).value == pytest.approx(
        O.PHI_SCALED_T0, rel=1e-9)
    p4e = scaled_params(eps=0.1, kappa=4.0, nu=0.5)
    assert kernels.eval_phi(p4e, 0.0, 0.0).value == pytest.approx(
        O.PHI00_SCALED_SPOT, rel=1e-9)


def test_rho_kernel_frozen_spots():
    rho = BoundaryProfile(width=0.8)
    p = P(0.0)
    assert kernels.eval_rho_kernel(rho, p, 0.5, 0.3).value == pytest.approx(
        O.RHO_SPOT_A, rel=1e-9)
    assert kernels.eval_rho_kernel(rho, p, 0.0, 0.3).value == pytest.approx(
        O.RHO_SPOT_B, rel=1e-9)


# ------------------------------------------------- identities and structure

def test_energy_identity_independent_routes():
    # E = -g^2 N phi(0,0), evaluated by two different integrator families
    for eps in (1.0, 0.1, 0.01):
        p = ModelParams(eps=eps, lam=1.0, g=1.3, n_particles=3)
        e = kernels.eval_E(p).value
        phi00 = kernels.phi_diag(p).value
        assert abs(e + p.g**2 * p.n_particles * phi00) / abs(e) < 1e-10


def test_heat_equation_residual():
    # (d_t + Lap/2) phi = -W away from the diagonal
    rng = np.random.default_rng(3)
    for eps in (0.5, 0.05):
        p = P(eps)
        for _ in range(5):
            u = rng.uniform(0.4, 1.6)
            t = rng.uniform(0.2, 0.8)
            x = np.array([u, 0.0, 0.0])
            dt_ = 1e-4
            d_t = (kernels.eval_phi(p, x, t + dt_).value
                   - kernels.eval_phi(p, x, t - dt_).value) / (2 * dt_)
            du = 1e-4
            # radial Laplacian: phi'' + (2/u) phi'
            f0 = kernels.eval_phi(p, x, t).value
            fp = kernels.eval_phi(p, np.array([u + du, 0, 0]), t).value
            fm = kernels.eval_phi(p, np.array([u - du, 0, 0]), t).value
            lap = (fp - 2 * f0 + fm) / du**2 \
                + (2.0 / u) * (fp - fm) / (2 * du)
            w = kernels.eval_W(p, x, t).value
            assert abs(d_t + 0.5 * lap + w) < 1e-3 * max(abs(w), 1.0), (eps, u, t)


def test_time_symmetry():
    p = P(0.2)
    a = kernels.eval_W(p, 0.6, 0.35).value
    b = kernels.eval_W(p, 0.6, -0.35).value
    assert a == b
    assert kernels.eval_phi(p, 0.4, 0.2).value == kernels.eval_phi(p, 0.4, -0.2).value


def test_grad_phi_matches_finite_differences():
    p = P(0.1)
    x = np.array([0.7, -0.3, 0.5])
    t = 0.4
    g = kernels.eval_grad_phi(p, x, t).value
    for c in range(3):
        dx = np.zeros(3)
        dx[c] = 1e-5
        fd = (kernels.eval_phi(p, x + dx, t).value
              - kernels.eval_phi(p, x - dx, t).value) / 2e-5
        assert g[c] == pytest.approx(fd, rel=2e-5, abs=1e-8)


def test_grad_phi_zero_at_origin():
    v = kernels.eval_grad_phi(P(0.3), np.zeros(3), 0.2)
    assert np.all(v.value == 0.0)


def test_closed_forms_match_panel_engine():
    rng = np.random.default_rng(11)
    u = rng.uniform(0.1, 2.0, size=6)
    for eps in (0.0, 0.35):
        t = 0.45
        w_cf = kernels.w_closed_form(u, t, eps, 1.0)
        w_pn = [kernels.eval_W(P(eps), ui, t).value for ui in u]
        np.testing.assert_allclose(w_cf, w_pn, rtol=1e-9)
    phi_cf = kernels.phi_closed_form_eps0(u, 0.3, 1.0)
    phi_pn = [kernels.eval_phi(P(0.0), ui, 0.3).value for ui in u]
    np.testing.assert_allclose(phi_cf, phi_pn, rtol=1e-9)


def test_dphi_du_closed_form_matches_gradient():
    u = np.array([0.5, 1.1, 2.2])
    t = 0.25
    d_cf = kernels.dphi_du_closed_form_eps0(u, t, 1.0)
    for ui, di in zip(u, d_cf):
        g = kernels.eval_grad_phi(P(0.0), np.array([ui, 0, 0]), t).value[0]
        assert di == pytest.approx(g, rel=1e-8)


def test_yukawa_large_kappa_limit():
    # at large kappa the scaled t=0 kernel approaches C_Y e^{-nu u}/u
    p = scaled_params(eps=0.0, kappa=64.0, nu=0.5)
    v = kernels.eval_phi_scaled(p, 1.0, 0.0).value
    assert v == pytest.approx(O.YUKAWA_LIMIT_AT_1, rel=2e-2)
    # and the deviation shrinks with kappa
    v16 = kernels.eval_phi_scaled(scaled_params(eps=0.0, kappa=16.0, nu=0.5),
                                  1.0, 0.0).value
    assert abs(v - O.YUKAWA_LIMIT_AT_1) < abs(v16 - O.YUKAWA_LIMIT_AT_1)


def test_log_divergence_slope():
    eps_list = np.array([0.1, 0.01, 0.001])
    vals = [kernels.phi_diag(P(e)).value for e in eps_list]
    slope = np.polyfit(np.log(1.0 / eps_list), vals, 1)[0]
    assert slope == pytest.approx(O.C_LOG_SWEEP3, rel=1e-9)


# ----------------------------------------------------------------- raising

def test_singular_points_raise():
    with pytest.raises(SingularPoint):
        kernels.phi_diag(P(0.0))
    with pytest.raises(SingularPoint):
        kernels.eval_E(P(0.0))
    with pytest.raises(SingularPoint):
        kernels.eval_phi(P(0.0), 0.0, 0.0)
    with pytest.raises(SingularPoint):
        kernels.eval_W(P(0.0), 0.0, 0.0)
    with pytest.raises(SingularPoint):
        kernels.w_closed_form(np.array([0.0]), 0.0, 0.0, 1.0)
    with pytest.raises(SingularPoint):
        kernels.dphi_du_closed_form_eps0(np.array([1e-8]), 0.5, 1.0)


def test_rho_kernel_rejects_bad_profile():
    with pytest.raises(ProfileNotAdmissible):
        kernels.eval_rho_kernel(BoundaryProfile(width=0.0), P(0.0), 0.5, 0.1)
    with pytest.raises(ValueError):
        kernels.eval_rho_kernel(BoundaryProfile(width=1.0), P(0.0), 0.5, -0.1)


def test_scaled_entry_points_reject_plain_params():
    with pytest.raises(ValueError):
        kernels.eval_phi_scaled(P(0.1), 0.5, 0.1)
    with pytest.raises(ValueError):
        kernels.eval_E_scaled(P(0.1))


# ------------------------------------------------------------- 3-d oracle

def test_oracle3d_agreement_spot():
    p = ModelParams(eps=0.5, lam=1.0)
    for which, fn in (("W", kernels.eval_W), ("phi", kernels.eval_phi)):
        radial = fn(p, 0.8, 0.3).value
        brute = oracle_kernel_3d(which, p, np.array([0.8, 0, 0]), 0.3)
        assert radial == pytest.approx(brute.value, rel=2e-3), which


def test_oracle3d_guards():
    p = ModelParams(eps=0.0, lam=1.0)
    with pytest.raises(SingularPoint):
        oracle_kernel_3d("W", p, np.array([0.5, 0, 0]), 0.1)
    with pytest.raises(BudgetExceeded):
        oracle_kernel_3d("W", ModelParams(eps=0.001, lam=1.0),
                         np.array([30.0, 0, 0]), 0.1, budget=10_000)
