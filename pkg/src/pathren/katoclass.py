"""Kato-class checks for radial potentials: analytic criterion, MC definition
check, exponential-moment bounds, and the multi-particle pairwise lift.

The analytic criterion certifies lim_{r->0} sup_x Int_{|x-y|<r} g(x-y)|V(y)| dy
= 0 with g the Green-type kernel (|x|^{2-d} in d=3). For the radial families
handled here the sup is attained at x = 0, so the diagnostic reduces to a 1D
radial integral. Certification is scale-free: the small-ball integral must be
insensitive to the inner cutoff (otherwise the integral itself diverges),
strictly decreasing, and vanish with a definite power of r.

The Monte-Carlo side checks the definition directly: E^x Int_0^t |V(W_s)| ds
along sampled Brownian paths, maximised over a deterministic start set that
always contains the singular point. MC can support a pass but never certify a
fail; fail verdicts come only from the analytic criterion.
"""

from dataclasses import dataclass, replace

import numpy as np

from .estimator import Potential, batch_std_error
from .params import (PreflightFailed, QuadratureSpec, RngSpec, TimeGrid)
from .paths import sample_ensemble
from .quadrature import adaptive_integral, geometric_edges

_RADIUS_CLIP = 1e-10
_SINGULAR_NODE = 1e-9    # node radii below this are exact-start singularities
_CONTRACTION_MAX = 0.9   # inner-cutoff increments must shrink by this factor
_MIN_VANISH_POWER = 0.05


# --- potential family ---------------------------------------------------------


@dataclass
class RadialPotentialSpec:
    """Radial potential: power form V(x) = |x|^{-s} or a bounded radial form.

    ``form`` is 'power' (fields: s >= 0) or 'bounded' (fields: func with
    |func| <= bound). Dimension d defaults to 3.
    """

    s: float = 0.0
    d: int = 3
    form: str = "power"
    func: callable = None
    bound: float = None

    def __post_init__(self):
        if self.form not in ("power", "bounded"):
            raise ValueError(f"unknown potential form {self.form!r}")
        if self.form == "power" and self.s < 0:
            raise ValueError("power exponent s must be >= 0")
        if self.d not in (1, 2, 3):
            raise ValueError("dimension d must be 1, 2 or 3")
        if self.form == "bounded":
            if self.func is None or self.bound is None:
                raise ValueError("bounded form needs func and bound")
            if not self.bound >= 0:
                raise ValueError("bound must be >= 0")

    def value(self, r, clip=True):
        """V at radius r (array-safe).

        ``clip`` floors the radius at 1e-10 (the path-evaluation guard);
        the analytic criterion must evaluate unclipped to see divergences.
        """
        r = np.asarray(r, dtype=float)
        if self.form == "bounded":
            return self.func(r)
        if self.s == 0.0:
            return np.ones_like(r)
        if clip:
            r = np.maximum(r, _RADIUS_CLIP)
        return r ** (-self.s)

    def abs_value(self, r, clip=True):
        return np.abs(self.value(r, clip))

    @property
    def label(self):
        if self.form == "power":
            return f"|x|^-{self.s:g} (d={self.d})"
        return f"bounded<={self.bound:g} (d={self.d})"


def _green_kernel(d, r):
    if d == 3:
        return 1.0 / r
    if d == 2:
        return -np.log(r)   # radii < 1 in the diagnostic sweep
    return np.ones_like(np.asarray(r, dtype=float))


_SPHERE_AREA = {1: 2.0, 2: 2.0 * np.pi, 3: 4.0 * np.pi}


# --- analytic criterion ---------------------------------------------------------


@dataclass
class KatoReport:
    """Verdict plus the diagnostic small-ball curve that produced it."""

    passed: bool
    radii: np.ndarray
    diagnostic: np.ndarray
    small_r_slope: float
    cutoff_stable: bool
    reason: str

    @property
    def verdict(self):
        return "pass" if self.passed else "fail"


def _ball_integral(spec, r, cut, qspec):
    """S_{d-1} * Int_cut^r g(rho) |V(rho)| rho^{d-1} drho."""

    def f(rho):
        return (_green_kernel(spec.d, rho) * spec.abs_value(rho, clip=False)
                * rho ** (spec.d - 1))

    edges = geometric_edges(cut, r, h0=cut, factor=2.0)
    val, _ = adaptive_integral(f, edges, qspec)
    return _SPHERE_AREA[spec.d] * val


def _ball_integral_extrapolated(spec, r, qspec):
    """Ball integral with the inner cutoff removed by geometric extrapolation.

    Pushes the cutoff down through 1e-9 r, 1e-12 r, 1e-15 r: a convergent
    integral adds geometrically shrinking mass (exactly geometric for power
    potentials, so the tail sum is exact there); non-contracting increments
    mean the integral diverges at the origin. Returns (value, converged).
    """
    i1, i2, i3 = (_ball_integral(spec, r, c * r, qspec)
                  for c in (1e-9, 1e-12, 1e-15))
    if not (np.isfinite(i1) and np.isfinite(i2) and np.isfinite(i3)):
        return np.nan, False
    d1, d2 = i2 - i1, i3 - i2
    scale = max(abs(i3), 1e-300)
    if abs(d2) < 1e-9 * scale:
        return i3, True   # increments at noise level: already converged
    if d2 >= _CONTRACTION_MAX * d1:
        return i3, False  # log-like or growing mass near the origin
    ratio = d2 / d1
    return i3 + d2 * ratio / (1.0 - ratio), True


def kato_criterion(spec: RadialPotentialSpec, quad: QuadratureSpec = None):
    """Small-ball diagnostic and pass/fail verdict.

    pass requires, over radii 1 down to 1e-5: (a) the ball integral exists
    (inner-cutoff increments contract geometrically), (b) the curve
    decreases, and (c) it vanishes with a power of r of at least 0.05 over
    the smallest decade.
    """
    qspec = quad or QuadratureSpec()
    radii = np.logspace(0.0, -5.0, 11)
    vals = np.empty_like(radii)
    stable = True
    for i, r in enumerate(radii):
        vals[i], converged = _ball_integral_extrapolated(spec, r, qspec)
        stable = stable and converged
    if not stable:
        return KatoReport(False, radii, vals, np.nan, False,
                          "ball integral diverges at the inner cutoff")
    if vals[-1] <= 0.0:
        return KatoReport(True, radii, vals, np.inf, True,
                          "diagnostic identically zero near the origin")
    lr = np.log(radii[-3:])
    lv = np.log(vals[-3:])
    slope = np.polyfit(lr, lv, 1)[0]  # power of r over the last decade
    decreasing = np.all(np.diff(vals) < 1e-12 * vals[0])
    if not decreasing:
        return KatoReport(False, radii, vals, slope, True,
                          "diagnostic is not decreasing as r -> 0")
    if slope < _MIN_VANISH_POWER:
        return KatoReport(False, radii, vals, slope, True,
                          f"diagnostic vanishes too slowly (power {slope:.3f})")
    return KatoReport(True, radii, vals, slope, True,
                      f"diagnostic vanishes like r^{slope:.3f}")


# --- Monte-Carlo definition check ------------------------------------------------


def _start_set(n_starts):
    """Deterministic starts: the singular point plus radii up to 2 on a diagonal."""
    if n_starts < 1:
        raise ValueError("need at least one start point")
    starts = np.zeros((n_starts, 3))
    if n_starts > 1:
        radii = np.linspace(0.0, 2.0, n_starts)[1:]
        starts[1:] = np.outer(radii, np.ones(3) / np.sqrt(3.0))
    return starts


def _one_sided_radii(t_max, n_steps, n_paths, start, rng_spec):
    """Node radii of n_paths Brownian paths on [0, t_max] from ``start``."""
    grid = TimeGrid(0.5 * t_max, n_steps, 0.5 * t_max)
    ens = sample_ensemble(grid, n_paths, 1, rng_spec,
                          start_points=np.asarray(start, dtype=float).reshape(1, 3))
    return np.linalg.norm(ens.positions[:, :, 0, :], axis=-1)  # (n_paths, n_nodes)


def _abs_path_integrals(spec, radii, dt):
    """Cumulative trapezoid of |V| along each path; exact-start nodes dropped."""
    v = spec.abs_value(radii)
    v = np.where(radii < _SINGULAR_NODE, 0.0, v)
    cells = 0.5 * dt * (v[:, 1:] + v[:, :-1])
    out = np.zeros_like(v)
    np.cumsum(cells, axis=1, out=out[:, 1:])
    return out


def kato_mc(spec: RadialPotentialSpec, t_list, n_paths, n_starts,
            rng_spec: RngSpec, n_steps=256):
    """Definition check: t -> max over starts of mean Int_0^t |V(W_s)| ds.

    Rows are (t, value, std_error) with t snapped to grid nodes and the SE
    taken at the maximising start. Supports a pass (curve decreasing to 0 as
    t -> 0) but cannot certify a fail.
    """
    t_list = [float(t) for t in t_list]
    t_max = max(t_list)
    if min(t_list) <= 0.0:
        raise ValueError("t values must be positive")
    dt = t_max / n_steps
    starts = _start_set(n_starts)
    node_of = {t: int(round(t / dt)) for t in t_list}

    per_start = []  # (means, ses) arrays over t_list
    for k, x0 in enumerate(starts):
        stream = replace(rng_spec, stream_id=rng_spec.stream_id + k)
        radii = _one_sided_radii(t_max, n_steps, n_paths, x0, stream)
        cum = _abs_path_integrals(spec, radii, dt)
        means = np.array([cum[:, node_of[t]].mean() for t in t_list])
        ses = np.array([batch_std_error(cum[:, node_of[t]]) for t in t_list])
        per_start.append((means, ses))

    rows = []
    for i, t in enumerate(t_list):
        k_best = int(np.argmax([m[i] for m, _ in per_start]))
        rows.append((node_of[t] * dt, float(per_start[k_best][0][i]),
                     float(per_start[k_best][1][i])))
    return rows


def exp_bound_mc(spec: RadialPotentialSpec, beta_list, tau, n_paths,
                 rng_spec: RngSpec, n_steps=256, n_starts=4):
    """Exponential-moment table: beta -> sup over starts of mean e^{beta Int |V|}.

    Requires the analytic criterion to pass (PreflightFailed otherwise).
    Rows are dicts with beta, value, std_error and the radius of the
    maximising start (a diagnostic: the sup should sit at the singularity).
    """
    report = kato_criterion(spec)
    if not report.passed:
        raise PreflightFailed(
            f"exponential bounds need a Kato-class potential; {spec.label} "
            f"failed the criterion ({report.reason})")
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    dt = tau / n_steps
    starts = _start_set(n_starts)

    samples = []  # per start: (n_paths,) integral at tau
    for k, x0 in enumerate(starts):
        stream = replace(rng_spec, stream_id=rng_spec.stream_id + k)
        radii = _one_sided_radii(tau, n_steps, n_paths, x0, stream)
        samples.append(_abs_path_integrals(spec, radii, dt)[:, -1])

    rows = []
    for beta in beta_list:
        beta = float(beta)
        if beta == 0.0:
            rows.append({"beta": 0.0, "value": 1.0, "std_error": 0.0,
                         "argmax_radius": 0.0})
            continue
        means, ses = [], []
        for s_int in samples:
            w = np.exp(beta * s_int)
            means.append(float(w.mean()))
            ses.append(batch_std_error(w))
        k_best = int(np.argmax(means))
        rows.append({"beta": beta, "value": means[k_best],
                     "std_error": float(ses[k_best]),
                     "argmax_radius": float(np.linalg.norm(starts[k_best]))})
    return rows


# --- multi-particle lift ----------------------------------------------------------


def lift_pairwise(spec: RadialPotentialSpec, n_particles):
    """Pairwise sum over ordered pairs, sum_{i != j} V(x^i - x^j), as a Potential.

    The single-particle lift is the zero potential (empty sum). The spec must
    pass the analytic criterion in d = 3.
    """
    if spec.d != 3:
        raise PreflightFailed("pairwise lift is defined for d = 3 potentials")
    report = kato_criterion(spec)
    if not report.passed:
        raise PreflightFailed(
            f"pairwise lift needs a Kato-class potential; {spec.label} "
            f"failed the criterion ({report.reason})")
    if n_particles < 1:
        raise ValueError("n_particles must be >= 1")
    if n_particles == 1:
        return Potential(kind="zero", provenance=f"pairwise lift of {spec.label}")
    singular = spec.form == "power" and spec.s > 0
    return Potential(kind="pairwise-radial", radial=spec.value,
                     radial_singular=singular,
                     provenance=f"pairwise lift of {spec.label}")
