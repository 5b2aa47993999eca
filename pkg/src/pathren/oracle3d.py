"""Brute-force 3-d product quadrature used as an oracle for the radial kernels.

Deliberately independent of the panel engine: composite Gauss-Legendre in the
radial direction times Gauss-Legendre in the polar cosine, with the full 3-d
integrand assembled from scratch.  Only absolutely convergent cases (eps > 0)
are admissible.  Accuracy is estimated by comparing two resolutions.
"""

import numpy as np

from .params import BudgetExceeded, KernelValue, ModelParams, SingularPoint


def _integrand_3d(which, params, profile, s_offset):
    """Full |k|-dependent weight F(r) of the 3-d integral, assembled directly."""
    eps = params.eps
    k2 = params.kappa**2
    nu = params.nu if params.dispersion == "massive" else 0.0

    def omega(r):
        return np.sqrt(r * r + nu * nu)

    if which == "W":
        def f(r, t):
            om = omega(r)
            return k2 * np.exp(-eps * r * r - k2 * om * abs(t)) / (2.0 * om)
    elif which == "phi":
        def f(r, t):
            om = omega(r)
            return (np.exp(-eps * r * r - k2 * om * abs(t)) / (2.0 * om)
                    * k2 / (k2 * om + 0.5 * r * r))
    elif which == "rho":
        if profile is None:
            raise ValueError("which='rho' needs a profile")
        profile.check_admissible()

        def f(r, t):
            om = omega(r)
            return (profile.hat(r) * np.exp(-0.5 * eps * r * r - s_offset * om)
                    / np.sqrt(om))
    else:
        raise ValueError(f"unknown oracle integrand {which!r}")
    return f


def _run_grid(f, t, u, lam, r_hi, n_r, pref):
    gl_r, gw_r = np.polynomial.legendre.leggauss(24)
    edges = np.linspace(lam, r_hi, n_r + 1)
    total = 0.0
    n_evals = 0
    for a, b in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        r = mid + half * gl_r
        w = half * gw_r
        # polar integral of e^{-i r u mu} over mu in [-1, 1]: real part only
        n_mu = 24 + int(1.3 * b * u)
        gl_m, gw_m = np.polynomial.legendre.leggauss(n_mu)
        ang = np.cos(np.outer(r, gl_m) * u) @ gw_m
        total += (w * r * r * f(r, t) * ang).sum()
        n_evals += r.size * n_mu
    return 2.0 * np.pi * pref * total, n_evals


def oracle_kernel_3d(which, params: ModelParams, x, t, budget=4_000_000,
                     profile=None, s_offset=0.0):
    """Direct 3-d evaluation of W, phi or the boundary-profile kernel.

    Parameters
    ----------
    which : str
        'W', 'phi' or 'rho'.
    budget : int
        Cap on total integrand evaluations; BudgetExceeded beyond it.
    """
    if params.eps <= 0:
        raise SingularPoint("3-d oracle requires eps > 0 (absolute convergence)")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = float(np.linalg.norm(x))
    f = _integrand_3d(which, params, profile, s_offset)
    eff_eps = 0.5 * params.eps + 0.5 * profile.width**2 if which == "rho" else params.eps
    lam = params.lam
    r_hi = lam + 9.0 / np.sqrt(eff_eps)
    pref = params.fourier_prefactor

    n_r = max(32, int(1.2 * u * (r_hi - lam) / (2.0 * np.pi)) + 8)
    projected = int(n_r * (5.0 / 3.0) * 24 * (24 + 1.3 * r_hi * u))
    if projected > budget:
        raise BudgetExceeded(f"oracle needs ~{projected} evaluations (budget {budget})")
    coarse, _ = _run_grid(f, t, u, lam, r_hi, max(24, (2 * n_r) // 3), pref)
    fine, _ = _run_grid(f, t, u, lam, r_hi, n_r, pref)
    return KernelValue(fine, abs(fine - coarse), r_hi)
