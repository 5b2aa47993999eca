"""Pair-interaction kernels in momentum space and their radial evaluation.

All kernels are rotation invariant, so each 3-d Fourier integral reduces to a
radial one:

    Int d^3k F(|k|) e^{-i k.x}  =  (4 pi / |x|) Int r F(r) sin(r |x|) dr.

The functions here assemble the radial weight r^2 F(r) for each kernel and
hand it to the panel engine.  Closed forms (complex scaled complementary
error function, complex exponential integral) cover the massless family and
serve as the independent fast route for the lookup tables.
"""

import numpy as np
from scipy import integrate, special

from .params import KernelValue, ModelParams, QuadratureSpec, SingularPoint
from .quadrature import (adaptive_integral, geometric_edges,
                         oscillatory_integral, truncation_radius)

# beyond this truncation radius an |x|=0 evaluation is treated as divergent
_DIVERGENT_SPAN = 1.0e6
# below this oscillation count the plain adaptive route beats the half-period one
_OSC_SWITCH = 24.0 * np.pi


def _norm_of(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return float(abs(x))
    if x.shape == (3,):
        return float(np.linalg.norm(x))
    raise ValueError("x must be a scalar radius or a 3-vector")


def _omega(params, r):
    if params.dispersion == "massive":
        return np.sqrt(r * r + params.nu**2)
    return r


def _time_rate(params, t):
    """Exponential decay rate in r of the time factor e^{-kappa^2 omega |t|}."""
    return params.kappa**2 * abs(t)


def _w_weight(params, t):
    """r^2 * (W integrand) as a function of r; finite on [0, inf)."""
    eps, k2, ta = params.eps, params.kappa**2, abs(t)
    if params.dispersion == "massless":
        return lambda r: 0.5 * k2 * r * np.exp(-eps * r * r - k2 * r * ta)
    nu = params.nu

    def f(r):
        om = np.sqrt(r * r + nu * nu)
        return 0.5 * k2 * (r * r / om) * np.exp(-eps * r * r - k2 * om * ta)

    return f


def _phi_weight(params, t):
    """r^2 * (phi integrand): the W weight with the inverse-stiffness factor.

    The stiffness fraction k2/(k2 om + r^2/2) cancels one k2 against W's
    prefactor, leaving a single k2 overall.
    """
    eps, k2, ta = params.eps, params.kappa**2, abs(t)
    if params.dispersion == "massless":
        return lambda r: k2 * np.exp(-eps * r * r - k2 * r * ta) / (2.0 * k2 + r)
    nu = params.nu

    def f(r):
        om = np.sqrt(r * r + nu * nu)
        return (k2 * r * r * np.exp(-eps * r * r - k2 * om * ta)
                / (2.0 * om * (k2 * om + 0.5 * r * r)))

    return f


def _trig_integral(env, lam, u, spec, kind, r_max):
    """Route env(r)*trig(ru) on [lam, r_max-or-infinity] to the right engine."""
    span = r_max - lam
    if span <= _DIVERGENT_SPAN and u * span <= _OSC_SWITCH:
        trig = np.sin if kind == "sin" else np.cos
        f = lambda r: env(r) * trig(u * r)
        h_cap = 0.45 * np.pi / u if u > 0 else np.inf
        edges = geometric_edges(lam, r_max, span / 64.0, 1.7, h_cap=h_cap)
        val, err = adaptive_integral(f, edges, spec)
        return val, err, r_max
    r_decay = r_max if span <= _DIVERGENT_SPAN else None
    return oscillatory_integral(env, lam, u, spec, kind=kind, r_decay=r_decay)


def _fourier_radial(f_r2, params, u, rate, spec):
    """4*pi*pref/u * Int (f_r2/r) sin(ru) dr, with the even-series |x|->0 route."""
    lam = params.lam
    pref = params.fourier_prefactor
    r_max = truncation_radius(lam, params.eps, rate)
    span = r_max - lam
    if u < spec.small_x_threshold:
        if span > _DIVERGENT_SPAN:
            raise SingularPoint(
                "kernel not absolutely integrable at x=0 for these parameters")
        f = lambda r: f_r2(r) * np.sinc(r * u / np.pi)
        edges = geometric_edges(lam, r_max, span / 64.0, 1.7)
        val, err = adaptive_integral(f, edges, spec)
        return KernelValue(4.0 * np.pi * pref * val, 4.0 * np.pi * pref * err, r_max)

    tiny = 1e-300
    env = lambda r: f_r2(np.maximum(r, tiny)) / np.maximum(r, tiny)
    val, err, r_used = _trig_integral(env, lam, u, spec, "sin", r_max)
    c = 4.0 * np.pi * pref / u
    return KernelValue(c * val, abs(c) * err, r_used)


# --- public kernel operations ----------------------------------------------


def eval_W(params: ModelParams, x, t, quad: QuadratureSpec = None):
    """Time-sliced pair kernel W(x, t)."""
    spec = quad or QuadratureSpec()
    u = _norm_of(x)
    return _fourier_radial(_w_weight(params, t), params, u, _time_rate(params, t), spec)


def eval_phi(params: ModelParams, x, t, quad: QuadratureSpec = None):
    """Smoothed pair potential phi(x, t) (W with the inverse-stiffness factor)."""
    spec = quad or QuadratureSpec()
    u = _norm_of(x)
    return _fourier_radial(_phi_weight(params, t), params, u, _time_rate(params, t), spec)


def eval_phi_scaled(params: ModelParams, x, t, quad: QuadratureSpec = None):
    """phi for the stiff-field (massive, scaled) family; same radial code path."""
    if params.dispersion != "massive" or params.fourier_norm != "inv2pi3":
        raise ValueError("eval_phi_scaled expects massive dispersion and (2 pi)^-3 norm")
    return eval_phi(params, x, t, quad)


def eval_grad_phi(params: ModelParams, x, t, quad: QuadratureSpec = None):
    """Spatial gradient of phi at (x, t); returns a KernelValue with 3-vector value."""
    spec = quad or QuadratureSpec()
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise ValueError("eval_grad_phi needs a 3-vector position")
    u = float(np.linalg.norm(x))
    rate = _time_rate(params, t)
    lam = params.lam
    r_max = truncation_radius(lam, params.eps, rate)
    span = r_max - lam
    if u < spec.small_x_threshold:
        if span > _DIVERGENT_SPAN:
            raise SingularPoint("gradient undefined at the kernel singularity")
        return KernelValue(np.zeros(3), 0.0, r_max)  # odd integrand: exact zero

    f_r2 = _phi_weight(params, t)
    pref = params.fourier_prefactor
    if span <= _DIVERGENT_SPAN and u * span <= 0.5:
        # smooth route: d(phi)/du = 4 pi pref u Int f_r2(r) r^2 G(ru) dr
        def g_fac(y):
            small = np.abs(y) < 0.02
            ys = np.where(small, 0.0, y)
            direct = (ys * np.cos(ys) - np.sin(ys)) / np.where(small, 1.0, ys**3)
            series = -1.0 / 3.0 + y * y / 30.0 - y**4 / 840.0
            return np.where(small, series, direct)

        f = lambda r: f_r2(r) * r * r * g_fac(u * r)
        edges = geometric_edges(lam, r_max, span / 64.0, 1.7)
        val, err = adaptive_integral(f, edges, spec)
        dphi_du = 4.0 * np.pi * pref * u * val
        dphi_err = 4.0 * np.pi * pref * u * err
        r_used = r_max
    else:
        tiny = 1e-300
        env_a = f_r2
        env_b = lambda r: f_r2(np.maximum(r, tiny)) / np.maximum(r, tiny)
        a_val, a_err, r_a = _trig_integral(env_a, lam, u, spec, "cos", r_max)
        b_val, b_err, r_b = _trig_integral(env_b, lam, u, spec, "sin", r_max)
        c = 4.0 * np.pi * pref / (u * u)
        dphi_du = c * (u * a_val - b_val)
        dphi_err = abs(c) * (u * a_err + b_err)
        r_used = max(r_a, r_b)
    return KernelValue(x / u * dphi_du, dphi_err, r_used)


def _self_energy_weight(params):
    """Radial integrand of the diagonal energy integral (t=0, x=0)."""
    eps, k2 = params.eps, params.kappa**2
    pref = 4.0 * np.pi * params.fourier_prefactor
    if params.dispersion == "massless":
        return lambda r: pref * k2 * np.exp(-eps * r * r) / (2.0 * k2 + r)
    nu = params.nu

    def f(r):
        om = np.sqrt(r * r + nu * nu)
        return (pref * k2 * r * r * np.exp(-eps * r * r)
                / (2.0 * om * (k2 * om + 0.5 * r * r)))

    return f


def eval_E(params: ModelParams, quad: QuadratureSpec = None):
    """Diagonal (self-interaction) energy constant.

    Deliberately evaluated with a different integrator family than eval_phi
    so the identity E = -g^2 N phi(0, 0) is a genuine cross-check.
    """
    if params.eps <= 0:
        raise SingularPoint("diagonal energy diverges without the regulator")
    lam = params.lam
    r_hi = truncation_radius(lam, params.eps, 0.0)
    f = _self_energy_weight(params)
    val, abserr = integrate.quad(f, lam, r_hi, epsabs=1e-13, epsrel=1e-11, limit=400)
    scale = params.g**2 * params.n_particles
    return KernelValue(-scale * val, scale * abserr, r_hi)


def eval_E_scaled(params: ModelParams, quad: QuadratureSpec = None):
    """Diagonal energy for the stiff-field family."""
    if params.dispersion != "massive" or params.fourier_norm != "inv2pi3":
        raise ValueError("eval_E_scaled expects massive dispersion and (2 pi)^-3 norm")
    return eval_E(params, quad)


def phi_diag(params: ModelParams, quad: QuadratureSpec = None):
    """phi(0, 0): the per-unit-time diagonal counterterm density (eps > 0)."""
    if params.eps <= 0:
        raise SingularPoint("phi(0,0) diverges without the regulator")
    return eval_phi(params, 0.0, 0.0, quad)


def eval_rho_kernel(rho, params: ModelParams, x, s_offset, quad: QuadratureSpec = None):
    """Boundary-profile kernel: Int (rho_hat/sqrt(omega)) e^{-eps k^2/2} e^{-s omega} e^{-ikx} d^3k.

    The regulator enters with half strength here because the profile couples
    linearly to the field rather than through a pair contraction.
    """
    spec = quad or QuadratureSpec()
    rho.check_admissible()
    u = _norm_of(x)
    if s_offset < 0:
        raise ValueError("s_offset must be >= 0")
    eps_half = 0.5 * params.eps

    def f_r2(r):
        om = _omega(params, r)
        root = np.sqrt(np.maximum(om, 1e-300))
        return r * r * rho.hat(r) * np.exp(-eps_half * r * r - s_offset * om) / root

    lam = params.lam
    eff_eps = eps_half + 0.5 * rho.width**2
    r_max = truncation_radius(lam, eff_eps, s_offset)
    pref = params.fourier_prefactor
    if u < spec.small_x_threshold:
        f = lambda r: f_r2(r) * np.sinc(r * u / np.pi)
        edges = geometric_edges(lam, r_max, (r_max - lam) / 64.0, 1.7)
        val, err = adaptive_integral(f, edges, spec)
        return KernelValue(4.0 * np.pi * pref * val, 4.0 * np.pi * pref * err, r_max)
    tiny = 1e-300
    env = lambda r: f_r2(np.maximum(r, tiny)) / np.maximum(r, tiny)
    val, err, r_used = _trig_integral(env, lam, u, spec, "sin", r_max)
    c = 4.0 * np.pi * pref / u
    return KernelValue(c * val, abs(c) * err, r_used)


# --- closed forms for the massless family -----------------------------------
# These are the independent fast route used by the lookup tables and by the
# cross-checking tests.  Plain Fourier normalisation, kappa = 1.


def _erfcx_complex(w):
    return special.wofz(1j * w)


def w_closed_form(u, t, eps=0.0, lam=1.0):
    """W(|x|, t) for the massless family, any eps >= 0; vectorized in u."""
    u = np.asarray(u, dtype=float)
    ta = abs(t)
    z = ta - 1j * u
    small = u < 1e-6
    if eps == 0.0:
        if ta == 0.0 and np.any(small):
            raise SingularPoint("W(0, 0) diverges at eps = 0")
        with np.errstate(invalid="ignore", divide="ignore"):
            tail = np.exp(-lam * z) / np.where(small, 1.0, z)
            main = 2.0 * np.pi * np.imag(tail) / np.where(small, 1.0, u)
        limit = 2.0 * np.pi * np.exp(-lam * ta) * (lam * ta + 1.0) / max(ta, 1e-300)**2
        out = np.where(small, limit, main)
    else:
        rt = np.sqrt(eps)
        fz = 0.5 * np.sqrt(np.pi / eps) * np.exp(-eps * lam * lam - lam * z) \
            * _erfcx_complex(rt * lam + z / (2.0 * rt))
        with np.errstate(invalid="ignore", divide="ignore"):
            main = 2.0 * np.pi * np.imag(fz) / np.where(small, 1.0, u)
        f_real = 0.5 * np.sqrt(np.pi / eps) * np.exp(-eps * lam * lam - lam * ta) \
            * float(np.real(_erfcx_complex(rt * lam + ta / (2.0 * rt))))
        limit = (np.pi / eps) * (np.exp(-eps * lam * lam - lam * ta) - ta * f_real)
        out = np.where(small, limit, main)
    return float(out) if out.ndim == 0 else out


def _phi_aux(z, lam):
    """f(z) = E1(lam z) - e^{2z} E1((lam+2) z); phi = (2 pi/u) Im f(|t|-iu)."""
    return special.exp1(lam * z) - np.exp(2.0 * z) * special.exp1((lam + 2.0) * z)


def phi_closed_form_eps0(u, t, lam=1.0):
    """phi(|x|, t) at eps = 0; vectorized in u."""
    u = np.asarray(u, dtype=float)
    ta = abs(t)
    small = u < 1e-6
    if ta == 0.0 and np.any(small):
        raise SingularPoint("phi(0, 0) diverges at eps = 0")
    z = ta - 1j * np.where(small, 1.0, u)
    main = 2.0 * np.pi * np.imag(_phi_aux(z, lam)) / np.where(small, 1.0, u)
    if ta > 0.0:
        limit = 4.0 * np.pi * float(np.real(np.exp(2.0 * ta)
                                            * special.exp1((lam + 2.0) * ta)))
        out = np.where(small, limit, main)
    else:
        out = main
    return float(out) if out.ndim == 0 else out


def dphi_du_closed_form_eps0(u, t, lam=1.0):
    """Radial derivative of phi at eps = 0 for resolved u; vectorized in u."""
    u = np.asarray(u, dtype=float)
    if np.any(u < 1e-6):
        raise SingularPoint("use the series route below u = 1e-6")
    ta = abs(t)
    z = ta - 1j * u
    f = _phi_aux(z, lam)
    fp = -2.0 * np.exp(2.0 * z) * special.exp1((lam + 2.0) * z)
    out = -(2.0 * np.pi / u**2) * (np.imag(f) + u * np.real(fp))
    return float(out) if out.ndim == 0 else out
