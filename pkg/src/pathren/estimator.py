"""Monte-Carlo matrix elements of the path-weighted semigroup.

The central object is the matrix element (f, e^{-2T H} h) written as a
Brownian expectation:  start points are drawn from the density |f|^2-like
proposal N(center, width^2 I), each path carries the weight

    [f(B_{-T}) / proposal(B_{-T})] * h(B_T)
    * exp(-Int V(B_s) ds) * exp((g^2/2) * S_ren),

where S_ren is the renormalised pair action from :mod:`pathren.action`.
With the Gaussian-packet test functions used here the f/proposal ratio is an
exact constant, so the left slot contributes no variance.

Also provided: a ground-state energy proxy -(1/2T) log(element), the boundary
pairing functional xi for entrance/exit profiles, and a weak-coupling sweep
comparing the stiff-field family against its pair-potential limit on common
paths.
"""

import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .action import ActionConfig, action_renormalized
from .params import (
    BoundaryProfile,
    ModelParams,
    NonFiniteWeight,
    NonPositiveEstimate,
    PathEnsemble,
    ProposalMismatch,
    QuadratureSpec,
    RngSpec,
    TimeGrid,
    scaled_params,
)
from .paths import sample_ensemble, sample_start_points
from .quadrature import adaptive_integral, geometric_edges

_YUKAWA_CLIP = 1e-10
_POTENTIAL_KINDS = ("zero", "bounded-well", "harmonic", "yukawa-pairwise",
                    "pairwise-radial")


# --- test functions and potentials ------------------------------------------


@dataclass
class TestFunction:
    """Unit-norm Gaussian packet on R^{3N}.

    f(x) = (pi width^2)^{-3N/4} exp(-|x - center|^2 / (2 width^2)); the
    normalisation makes the L2 norm exactly 1. ``center`` is flat (3N,).
    """

    center: np.ndarray
    width: float
    kind: str = "gaussian-packet"

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).ravel()
        if self.center.size == 0 or self.center.size % 3 != 0:
            raise ValueError("center needs 3 coordinates per particle")
        if not (self.width > 0.0) or not np.isfinite(self.width):
            raise ValueError("width must be positive and finite")

    @property
    def n_particles(self):
        return self.center.size // 3

    def _flat(self, x):
        x = np.asarray(x, dtype=float)
        dim = self.center.size
        if x.ndim >= 2 and x.shape[-2:] == (dim // 3, 3):
            x = x.reshape(x.shape[:-2] + (dim,))
        if x.shape[-1] != dim:
            raise ValueError(f"position has dimension {x.shape[-1]}, expected {dim}")
        return x

    def log_value(self, x):
        """log f at points shaped (..., 3N) or (..., N, 3)."""
        x = self._flat(x)
        dim = self.center.size
        d2 = ((x - self.center) ** 2).sum(axis=-1)
        return -0.25 * dim * np.log(np.pi * self.width**2) - d2 / (2.0 * self.width**2)

    def value(self, x):
        return np.exp(self.log_value(x))

    def log_proposal(self, x):
        """log density of the matching start-point proposal N(center, width^2 I)."""
        x = self._flat(x)
        dim = self.center.size
        d2 = ((x - self.center) ** 2).sum(axis=-1)
        return -0.5 * dim * np.log(2.0 * np.pi * self.width**2) - d2 / (2.0 * self.width**2)


@dataclass
class Potential:
    """External or pair potential, evaluated on (..., n_particles, 3) points.

    Kinds: 'zero'; 'bounded-well' -depth e^{-|x|^2/(2 width^2)} (bounded,
    continuous); 'harmonic' delta |x|^2 (unbounded); 'yukawa-pairwise'
    -(g^2/4pi) sum_{i<j} e^{-nu d_ij}/d_ij with distances clipped at 1e-10
    (singular); 'pairwise-radial' sum_{i != j} radial(|x_i - x_j|) for a
    user-supplied radial function (used by the pairwise lift).
    """

    kind: str = "zero"
    depth: float = 0.0
    width: float = 1.0
    delta: float = 0.0
    g: float = 0.0
    nu: float = 0.0
    radial: callable = None
    radial_singular: bool = False
    provenance: str = ""

    def __post_init__(self):
        if self.kind not in _POTENTIAL_KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "bounded-well" and not self.width > 0.0:
            raise ValueError("well width must be positive")
        if self.kind == "pairwise-radial" and self.radial is None:
            raise ValueError("pairwise-radial needs a radial callable")

    @property
    def is_bounded(self):
        if self.kind == "pairwise-radial":
            return not self.radial_singular
        return self.kind in ("zero", "bounded-well")

    @property
    def is_singular(self):
        if self.kind == "pairwise-radial":
            return self.radial_singular
        return self.kind == "yukawa-pairwise"

    def evaluate(self, positions):
        """Potential values; collapses the trailing (n_particles, 3) axes."""
        pos = np.asarray(positions, dtype=float)
        if pos.ndim < 2 or pos.shape[-1] != 3:
            raise ValueError("positions must end with axes (n_particles, 3)")
        lead = pos.shape[:-2]
        if self.kind == "zero":
            return np.zeros(lead)
        if self.kind == "bounded-well":
            d2 = (pos**2).sum(axis=(-1, -2))
            return -self.depth * np.exp(-d2 / (2.0 * self.width**2))
        if self.kind == "harmonic":
            return self.delta * (pos**2).sum(axis=(-1, -2))
        n = pos.shape[-2]
        out = np.zeros(lead)
        if self.kind == "yukawa-pairwise":
            amp = self.g**2 / (4.0 * np.pi)
            for i in range(n):
                for j in range(i + 1, n):
                    d = np.linalg.norm(pos[..., i, :] - pos[..., j, :], axis=-1)
                    d = np.maximum(d, _YUKAWA_CLIP)
                    out -= amp * np.exp(-self.nu * d) / d
            return out
        # pairwise-radial, ordered pairs i != j
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                d = np.linalg.norm(pos[..., i, :] - pos[..., j, :], axis=-1)
                out += self.radial(np.maximum(d, _YUKAWA_CLIP))
        return out


@dataclass
class McEstimate:
    """One Monte-Carlo scalar with batch-means standard error and provenance."""

    mean: float
    std_error: float
    n_samples: int
    rng_spec: RngSpec
    wall_time: float


@dataclass
class XiSpec:
    """Entrance/exit boundary data: two radial profiles with real weights."""

    rho1: BoundaryProfile
    rho2: BoundaryProfile
    alpha: float
    beta: float

    def __post_init__(self):
        self.rho1.check_admissible()
        self.rho2.check_admissible()
        for name in ("alpha", "beta"):
            c = getattr(self, name)
            if not np.isfinite(c) or isinstance(c, complex):
                raise ValueError(f"{name} must be a finite real number")


# --- batch statistics --------------------------------------------------------


def batch_std_error(values, min_batches=30):
    """Standard error of the mean by batch means.

    Uses ~sqrt(n) batches, at least ``min_batches`` when the sample allows;
    for tiny samples (n < min_batches) every point is its own batch and the
    estimate reduces to the classic SE.
    """
    values = np.asarray(values, dtype=float).ravel()
    n = values.size
    if n < 2:
        return np.inf
    nb = min(n, max(min_batches, int(np.sqrt(n))))
    means = np.array([b.mean() for b in np.array_split(values, nb)])
    return float(means.std(ddof=1) / np.sqrt(nb))


def moments_of(values):
    """Streaming-moment triple (count, mean, sum of squared deviations)."""
    values = np.asarray(values, dtype=float).ravel()
    n = values.size
    if n == 0:
        return (0, 0.0, 0.0)
    mean = float(values.mean())
    return (n, mean, float(((values - mean) ** 2).sum()))


def merge_moments(a, b):
    """Combine two moment triples; associative up to rounding."""
    na, ma, sa = a
    nb, mb, sb = b
    if na == 0:
        return b
    if nb == 0:
        return a
    n = na + nb
    d = mb - ma
    mean = ma + d * nb / n
    return (n, mean, sa + sb + d * d * na * nb / n)


def std_error_from_moments(m):
    n, _, s = m
    if n < 2:
        return np.inf
    return float(np.sqrt(s / (n - 1) / n))


# --- weight assembly ---------------------------------------------------------


def potential_path_integral(potential, ensemble: PathEnsemble):
    """Trapezoid integral of V along each path, shape (n_paths,)."""
    if potential is None or potential.kind == "zero":
        return np.zeros(ensemble.n_paths)
    vals = potential.evaluate(ensemble.positions)  # (n_paths, n_nodes)
    w = np.ones(vals.shape[1])
    w[0] = w[-1] = 0.5
    return ensemble.grid.dt * (vals @ w)


def _log_weights(f, h, potential, config, ensemble):
    x0 = ensemble.positions[:, 0]
    x_end = ensemble.positions[:, -1]
    lw = f.log_value(x0) - f.log_proposal(x0) + h.log_value(x_end)
    lw -= potential_path_integral(potential, ensemble)
    if config is not None and config.params.g != 0.0:
        br = action_renormalized(ensemble, config)
        lw += 0.5 * config.params.g**2 * br.s_ren
    return lw


def _weights_or_raise(lw, rng_spec):
    with np.errstate(over="ignore"):  # overflow becomes a typed error below
        w = np.exp(lw)
    bad = ~np.isfinite(w)
    if bad.any():
        idx = np.flatnonzero(bad)[:8].tolist()
        raise NonFiniteWeight(
            f"non-finite weight on path(s) {idx} "
            f"(seed={rng_spec.seed}, stream={rng_spec.stream_id})")
    return w


def _draw_ensemble(f, n_particles, grid, n_paths, rng_spec):
    if f.kind != "gaussian-packet":
        raise ProposalMismatch(
            "start points are proposed from the left test function; "
            f"need a gaussian-packet, got {f.kind!r}")
    if f.n_particles != n_particles:
        raise ValueError(
            f"test function has {f.n_particles} particles, model has {n_particles}")
    starts = sample_start_points(
        n_paths, n_particles, f.center.reshape(n_particles, 3),
        f.width**2, rng_spec)
    return sample_ensemble(grid, n_paths, n_particles, rng_spec,
                           start_points=starts)


# --- matrix elements ---------------------------------------------------------


def semigroup_element(f: TestFunction, h: TestFunction, potential, config,
                      grid: TimeGrid, n_paths, rng_spec: RngSpec):
    """Monte-Carlo estimate of the weighted matrix element (f, ... h).

    ``config`` is the :class:`~pathren.action.ActionConfig` for the pair
    action; its coupling g = 0 turns the pair weight off entirely. The
    estimate averages n_paths independent path weights; the standard error
    comes from batch means.
    """
    t0 = time.perf_counter()
    params = config.params
    if h.n_particles != params.n_particles:
        raise ValueError(
            f"right test function has {h.n_particles} particles, "
            f"model has {params.n_particles}")
    ens = _draw_ensemble(f, params.n_particles, grid, n_paths, rng_spec)
    w = _weights_or_raise(_log_weights(f, h, potential, config, ens), rng_spec)
    return McEstimate(float(w.mean()), batch_std_error(w), n_paths, rng_spec,
                      time.perf_counter() - t0)


def ground_energy_proxy(f: TestFunction, potential, config, grids, n_paths,
                        rng_spec: RngSpec):
    """Energy proxy -(1/2T) log(f, ... f) for each grid in ``grids``.

    Returns a list of (T, value, band) with band the first-order error
    propagated from the element's standard error. Raises
    NonPositiveEstimate when the element cannot be log'd.
    """
    out = []
    for grid in grids:
        est = semigroup_element(f, f, potential, config, grid, n_paths, rng_spec)
        if not est.mean > 0.0:
            raise NonPositiveEstimate(
                f"element estimate {est.mean:.3e} at T={grid.t_horizon} "
                "has no logarithm; increase n_paths or shrink T")
        two_t = 2.0 * grid.t_horizon
        out.append((grid.t_horizon, -np.log(est.mean) / two_t,
                    est.std_error / (est.mean * two_t)))
    return out


# --- boundary pairing functional ---------------------------------------------


def _field_overlap(rho_a, rho_b, params: ModelParams, s, quad=None):
    """pref * 4 pi * Int_0^inf (r^2/omega) rho_a rho_b e^{-s omega} dr.

    Field-side overlap of two boundary profiles; no infrared cutoff and no
    regulator enter here (both belong to the path-side kernel).
    """
    spec = quad or QuadratureSpec()
    scale = np.sqrt(2.0 / (rho_a.width**2 + rho_b.width**2))

    def f(r):
        om = kernels._omega(params, r)
        geo = np.divide(r * r, om, out=np.zeros_like(np.asarray(r, dtype=float)),
                        where=om > 0)
        return geo * rho_a.hat(r) * rho_b.hat(r) * np.exp(-s * om)

    edges = geometric_edges(0.0, 9.0 * scale, h0=0.25 * scale, factor=1.5)
    val, _ = adaptive_integral(f, edges, spec)
    return params.fourier_prefactor * 4.0 * np.pi * val


def compute_xi(path, xi_spec: XiSpec, params: ModelParams, grid: TimeGrid,
               quad=None):
    """Boundary pairing functional xi for one path.

    ``path`` has shape (n_nodes, n_particles, 3) on ``grid``. The value is

        alpha^2 |rho1|_w^2 + beta^2 |rho2|_w^2
        + 2 alpha beta (rho1, e^{-2T omega} rho2)_w
        + 2 alpha g sum_j Int ds K_{rho1}(B_s^j, T - s)
        + 2 beta  g sum_j Int ds K_{rho2}(B_s^j, s + T),

    with (.,.)_w the 1/omega-weighted field overlap (cutoff-free) and K the
    profile kernel of :func:`pathren.kernels.eval_rho_kernel` (which carries
    the infrared cutoff and half-strength regulator). Time integrals are
    trapezoid sums on the grid.
    """
    pos = np.asarray(path, dtype=float)
    if pos.ndim != 3 or pos.shape[-1] != 3:
        raise ValueError("path must have shape (n_nodes, n_particles, 3)")
    if pos.shape[0] != grid.n_steps + 1:
        raise ValueError("path node count does not match the grid")
    a, b = xi_spec.alpha, xi_spec.beta
    t_hor = grid.t_horizon

    xi = 0.0
    if a != 0.0 and not xi_spec.rho1.is_zero:
        xi += a * a * _field_overlap(xi_spec.rho1, xi_spec.rho1, params, 0.0, quad)
    if b != 0.0 and not xi_spec.rho2.is_zero:
        xi += b * b * _field_overlap(xi_spec.rho2, xi_spec.rho2, params, 0.0, quad)
    if a != 0.0 and b != 0.0 and not (xi_spec.rho1.is_zero or xi_spec.rho2.is_zero):
        xi += 2.0 * a * b * _field_overlap(xi_spec.rho1, xi_spec.rho2, params,
                                           2.0 * t_hor, quad)

    g = params.g
    if g == 0.0:
        return float(xi)
    radii = np.linalg.norm(pos, axis=-1)  # (n_nodes, n_particles)
    tw = np.full(radii.shape[0], grid.dt)
    tw[0] *= 0.5
    tw[-1] *= 0.5
    for coeff, rho, offset_of in (
            (a, xi_spec.rho1, lambda t: t_hor - t),
            (b, xi_spec.rho2, lambda t: t + t_hor)):
        if coeff == 0.0 or rho.is_zero:
            continue
        acc = 0.0
        for m, t_m in enumerate(grid.times):
            s_off = max(offset_of(t_m), 0.0)
            for j in range(radii.shape[1]):
                acc += tw[m] * kernels.eval_rho_kernel(
                    rho, params, radii[m, j], s_off, quad).value
        xi += 2.0 * coeff * g * acc
    return float(xi)


# --- weak-coupling comparison --------------------------------------------------


def weak_coupling_compare(f: TestFunction, h: TestFunction, kappa_list, nu,
                          grid: TimeGrid, n_paths, rng_spec: RngSpec,
                          potential=None, g=1.0, lam=0.0, eps=0.0):
    """Stiff-field family vs its pair-potential limit, on common paths.

    For each kappa the element is computed with the scaled massive-field
    renormalised action; the reference element replaces the field weight by
    the attractive pairwise Yukawa potential -(g^2/4pi) sum_{i<j}
    e^{-nu d}/d. All rows share one ensemble (and any external
    ``potential``), so the per-path gap is a paired statistic. The infrared
    cutoff ``lam`` defaults to 0 (removed).

    Returns a list of row dicts with keys kappa, element, element_se,
    reference, reference_se, gap, gap_se, n_paths.
    """
    n = f.n_particles
    if h.n_particles != n:
        raise ValueError("f and h must have the same particle count")
    ens = _draw_ensemble(f, n, grid, n_paths, rng_spec)
    x0 = ens.positions[:, 0]
    x_end = ens.positions[:, -1]
    base_lw = f.log_value(x0) - f.log_proposal(x0) + h.log_value(x_end)
    base_lw -= potential_path_integral(potential, ens)

    yukawa = Potential(kind="yukawa-pairwise", g=g, nu=nu)
    w_ref = _weights_or_raise(
        base_lw - potential_path_integral(yukawa, ens), rng_spec)

    rows = []
    for kappa in kappa_list:
        if g == 0.0:
            w_k = _weights_or_raise(base_lw, rng_spec)
        else:
            cfg = ActionConfig(params=scaled_params(
                eps=eps, g=g, n_particles=n, nu=nu, kappa=float(kappa), lam=lam))
            br = action_renormalized(ens, cfg)
            w_k = _weights_or_raise(base_lw + 0.5 * g**2 * br.s_ren, rng_spec)
        gap = w_k - w_ref
        rows.append({
            "kappa": float(kappa),
            "element": float(w_k.mean()),
            "element_se": batch_std_error(w_k),
            "reference": float(w_ref.mean()),
            "reference_se": batch_std_error(w_ref),
            "gap": float(gap.mean()),
            "gap_se": batch_std_error(gap),
            "n_paths": n_paths,
        })
    return rows
