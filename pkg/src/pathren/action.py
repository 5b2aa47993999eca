"""Pair-interaction action functionals on discretised path ensembles.

The central object is the double time integral of the pair kernel W over
[-T, T]^2, split by a window of width tau around the time diagonal:

    s_total = s_dd + s_od,
    s_dd = 2 sum_{i,j} Int ds Int_s^{min(s+tau, T)} W(B_t^i - B_s^j, t-s) dt,

with s_od the complementary (far) part.  Two routes produce the renormalised
action:

* route "naive" sums W directly (finite only while the point regulator eps
  is on) and subtracts the diagonal counterterm 4 N T phi(0,0);
* route "decomposed" rewrites the near-window integral as

      s_dd = diag_counterterm + X + Y + Z

  where X collects equal-time cross pairs, Y integrates the gradient drift
  against the path increments, and Z collects the window-edge terms.  Then
  s_ren = s_od + X + Y + Z stays finite down to eps = 0, where the
  counterterm itself diverges.  The identity holds pathwise up to an
  O(dt^{1/2}) discretisation residual.

At tau = T the window is the full triangle {s < t < T}: s_od vanishes
identically and s_dd = s_total.  For tau < T the literal clamp
u(s) = min(s + tau, T) applies everywhere, consistently across s_dd, Y, Z
and s_od — the decomposition only balances when all terms share the window.

Pinned discretisation conventions: all time quadratures are trapezoidal;
the drift integral inside Y uses the strict left endpoint (the s = t node is
excluded, its half cell absorbed as a rectangle into the adjacent node); the
s = T node of Z replaces the singular same-particle lag-0 value by the
neighbouring node's value, uniformly in eps.  Pair sums run over ordered
(i, j) including i = j, except X which excludes the diagonal — the i = j
equal-time part is exactly the subtracted counterterm.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .params import InvalidGrid, ModelParams, QuadratureSpec, RouteForbidden
from .paths import PathEnsemble
from .tables import KernelTable

_NAIVE_EPS_FLOOR = 1e-4


@dataclass
class ActionConfig:
    """Route and kernel-evaluation backend for action computations.

    The window width tau lives on the ensemble's TimeGrid; the route choice
    here decides whether the near-diagonal part is summed directly ("naive",
    needs eps >= 1e-4) or through the rewritten finite form ("decomposed").
    backend picks lag-row lookup tables (fast, default) or per-point adaptive
    quadrature ("exact", for cross-validation).
    """
    params: ModelParams
    route: str = "decomposed"
    quad: QuadratureSpec = None
    backend: str = "table"
    n_u: int = 2048

    def __post_init__(self):
        if self.route not in ("naive", "decomposed"):
            raise ValueError("route must be 'naive' or 'decomposed'")
        if self.backend not in ("table", "exact"):
            raise ValueError("backend must be 'table' or 'exact'")
        if self.route == "naive" and self.params.eps <= 0.0:
            raise RouteForbidden("naive route needs the point regulator on")


@dataclass
class ActionBreakdown:
    """Per-path action pieces; vector fields have shape (n_paths,)."""
    s_total: np.ndarray = None
    s_dd: np.ndarray = None
    s_od: np.ndarray = None
    x_term: np.ndarray = None
    y_term: np.ndarray = None
    z_term: np.ndarray = None
    s_ren: np.ndarray = None
    diag_counterterm: float = None
    ito_residual: np.ndarray = None
    route: str = ""


@dataclass
class DriftProcess:
    """Gradient drift at the left node of each increment cell."""
    times: np.ndarray             # (n_steps,)
    values: np.ndarray            # (n_paths, n_steps, n_particles, 3)


class ExactProvider:
    """Per-point adaptive kernel evaluation with exact memoisation."""

    def __init__(self, params: ModelParams, dt, spec: QuadratureSpec = None):
        self.params = params
        self.dt = float(dt)
        self.spec = spec or QuadratureSpec()
        self._memo = {}

    def ensure(self, kind, lags):
        pass

    def _one(self, kind, u, lag):
        key = (kind, round(u, 13), lag)
        if key in self._memo:
            return self._memo[key]
        t = lag * self.dt
        x = np.array([u, 0.0, 0.0])
        if kind == "w":
            val = kernels.eval_W(self.params, x, t, self.spec).value
        elif kind == "phi":
            val = kernels.eval_phi(self.params, x, t, self.spec).value
        elif kind == "h":
            uu = max(u, 1e-6)   # h is even and flat at the origin
            xx = np.array([uu, 0.0, 0.0])
            val = kernels.eval_grad_phi(self.params, xx, t, self.spec).value[0] / uu
        else:
            raise ValueError(kind)
        self._memo[key] = val
        return val

    def _vec(self, kind, u, lag):
        flat = np.asarray(u, dtype=float).ravel()
        out = np.fromiter((self._one(kind, v, lag) for v in flat),
                          dtype=float, count=flat.size)
        return out.reshape(np.shape(u))

    def w(self, u, lag):
        return self._vec("w", u, lag)

    def phi(self, u, lag):
        return self._vec("phi", u, lag)

    def h(self, u, lag):
        return self._vec("h", u, lag)


def _provider(ensemble: PathEnsemble, cfg: ActionConfig):
    if cfg.backend == "exact":
        return ExactProvider(cfg.params, ensemble.grid.dt, cfg.quad)
    radius = float(np.sqrt((ensemble.positions**2).sum(axis=-1)).max())
    u_max = 2.0 * radius + 0.5
    return KernelTable(cfg.params, ensemble.grid.dt, u_max, cfg.n_u, cfg.quad)


def _effective_lag_cap(grid):
    """Window width in steps: n_steps at tau = T (full triangle), else tau/dt."""
    if grid.full_triangle:
        return grid.n_steps
    ratio = grid.tau / grid.dt
    cap = int(round(ratio))
    if cap < 1 or abs(ratio - cap) > 1e-9:
        raise InvalidGrid("window width tau must be a whole number of steps")
    return cap


def _pair_distances(a, b):
    d = a[:, :, :, None, :] - b[:, :, None, :, :]
    return np.sqrt(np.einsum("pmijc,pmijc->pmij", d, d)), d


def _diag_window_w(P, prov, L_eff, dt):
    """Near-window double integral of W (trapezoid x trapezoid)."""
    M = P.shape[1] - 1
    alpha = np.ones(M + 1)
    alpha[0] = alpha[M] = 0.5
    prov.ensure("w", range(0, L_eff + 1))
    out = np.zeros(P.shape[0])
    for l in range(0, L_eff + 1):
        if l == 0:
            n_m = M                       # m = M has an empty window
            wv = 0.5 * alpha[:M].copy()
        else:
            n_m = M - l + 1
            wv = alpha[:n_m].copy()
            if l == L_eff:
                wv *= 0.5
            else:
                wv[-1] *= 0.5
        u, _ = _pair_distances(P[:, l:l + n_m], P[:, :n_m])
        out += np.einsum("m,pmij->p", wv, prov.w(u, l))
    return 2.0 * dt * dt * out


def _far_window_w(P, prov, L_eff, dt):
    """Beyond-window double integral of W; zero in full-triangle mode."""
    M = P.shape[1] - 1
    if L_eff >= M:
        return np.zeros(P.shape[0])
    alpha_od = np.ones(M - L_eff + 1)
    alpha_od[0] = alpha_od[-1] = 0.5
    prov.ensure("w", range(L_eff, M + 1))
    out = np.zeros(P.shape[0])
    for l in range(L_eff, M + 1):
        n_m = M - l + 1
        g = alpha_od[:n_m].copy()
        if l == L_eff:
            g *= 0.5
            g[-1] = 0.0                   # degenerate single-node window
        else:
            g[-1] *= 0.5
        u, _ = _pair_distances(P[:, l:l + n_m], P[:, :n_m])
        out += np.einsum("m,pmij->p", g, prov.w(u, l))
    return 2.0 * dt * dt * out


def _equal_time_x(P, prov, dt):
    """X: equal-time cross-pair phi, trapezoid over the whole horizon."""
    n_paths, n_nodes, n, _ = P.shape
    if n < 2:
        return np.zeros(n_paths)
    M = n_nodes - 1
    alpha = np.ones(M + 1)
    alpha[0] = alpha[M] = 0.5
    prov.ensure("phi", [0])
    u, _ = _pair_distances(P, P)
    idx = np.arange(n)
    u[:, :, idx, idx] = 1.0       # placeholder on the i = j diagonal, masked below
    vals = prov.phi(u, 0)
    mask = 1.0 - np.eye(n)
    return 2.0 * dt * np.einsum("m,pmij,ij->p", alpha, vals, mask)


def _y_weights(l, m_vec, L_eff):
    k = np.minimum(m_vec, L_eff)
    if l == 1:
        return np.where(k == 1, 1.0, 1.5)
    return np.where(k == l, 0.5, 1.0)


def _drift_y(P, prov, L_eff, dt, want_drift=False):
    """Y: gradient drift integrated against path increments (left point)."""
    n_paths, n_nodes, n, _ = P.shape
    M = n_nodes - 1
    prov.ensure("h", range(1, min(L_eff, M - 1) + 1))
    out = np.zeros(n_paths)
    drift = np.zeros((n_paths, M, n, 3)) if want_drift else None
    for l in range(1, min(L_eff, M - 1) + 1):
        m_vec = np.arange(l, M)
        wv = _y_weights(l, m_vec, L_eff)
        u, d = _pair_distances(P[:, l:M], P[:, :M - l])
        hv = prov.h(u, l)
        db = P[:, l + 1:M + 1] - P[:, l:M]
        out += np.einsum("m,pmij,pmijc,pmic->p", wv, hv, d, db)
        if want_drift:
            drift[:, l:M] += 2.0 * dt * np.einsum(
                "m,pmij,pmijc->pmic", wv, hv, d)
    out *= 2.0 * dt
    if want_drift:
        return out, drift
    return out


def _edge_z(P, prov, L_eff, dt):
    """Z: window-edge phi along the path, trapezoid in s."""
    n_paths, n_nodes, n, _ = P.shape
    M = n_nodes - 1
    alpha = np.ones(M + 1)
    alpha[0] = alpha[M] = 0.5
    lag_of_m = np.minimum(L_eff, M - np.arange(M + 1))
    prov.ensure("phi", np.unique(lag_of_m))
    acc = np.zeros(n_paths)
    for lag in np.unique(lag_of_m[:-1]):
        ms = np.nonzero(lag_of_m[:-1] == lag)[0]
        u, _ = _pair_distances(P[:, ms + lag], P[:, ms])
        acc += np.einsum("m,pmij->p", alpha[ms], prov.phi(u, lag))
    # s = T node: lag 0 with the diagonal patched from the m = M-1 node
    u_last, _ = _pair_distances(P[:, M:M + 1], P[:, M:M + 1])
    idx = np.arange(n)
    u_last[:, :, idx, idx] = 1.0  # placeholder; the diagonal is overwritten
    v_last = prov.phi(u_last, 0)[:, 0]
    step = np.sqrt(((P[:, M] - P[:, M - 1]) ** 2).sum(axis=-1))
    diag = prov.phi(step, 1)
    v_last[:, idx, idx] = diag
    acc += alpha[M] * v_last.sum(axis=(1, 2))
    return -2.0 * dt * acc


def counterterm(params: ModelParams, grid, spec: QuadratureSpec = None):
    """Diagonal subtraction constant 4 N T phi(0,0); +inf at eps = 0."""
    if params.eps <= 0.0:
        return np.inf
    phi00 = kernels.phi_diag(params, spec).value
    return 4.0 * params.n_particles * grid.t_horizon * phi00


def _check_naive(cfg):
    if cfg.params.eps < _NAIVE_EPS_FLOOR:
        raise RouteForbidden(
            "direct diagonal quadrature is informational only below eps = %g; "
            "use the decomposed route" % _NAIVE_EPS_FLOOR)


def action_naive(ensemble: PathEnsemble, cfg: ActionConfig):
    """s_total: double integral of W over the full square, per path."""
    _check_naive(cfg)
    prov = _provider(ensemble, cfg)
    grid = ensemble.grid
    L_eff = _effective_lag_cap(grid)
    P = ensemble.positions
    return (_diag_window_w(P, prov, L_eff, grid.dt)
            + _far_window_w(P, prov, L_eff, grid.dt))


def action_split(ensemble: PathEnsemble, cfg: ActionConfig):
    """(s_dd, s_od) per path.

    The far part is defined down to eps = 0; the near part needs the
    regulator, so s_dd comes back None when eps is below the naive floor.
    """
    prov = _provider(ensemble, cfg)
    grid = ensemble.grid
    L_eff = _effective_lag_cap(grid)
    P = ensemble.positions
    s_od = _far_window_w(P, prov, L_eff, grid.dt)
    if cfg.params.eps < _NAIVE_EPS_FLOOR:
        return None, s_od
    s_dd = _diag_window_w(P, prov, L_eff, grid.dt)
    return s_dd, s_od


def term_X(ensemble: PathEnsemble, cfg: ActionConfig):
    """Equal-time cross-pair term; zero for a single particle."""
    prov = _provider(ensemble, cfg)
    return _equal_time_x(ensemble.positions, prov, ensemble.grid.dt)


def term_Y(ensemble: PathEnsemble, cfg: ActionConfig):
    """Stochastic-integral term (strict left-point rule)."""
    prov = _provider(ensemble, cfg)
    L_eff = _effective_lag_cap(ensemble.grid)
    return _drift_y(ensemble.positions, prov, L_eff, ensemble.grid.dt)


def term_Z(ensemble: PathEnsemble, cfg: ActionConfig):
    """Window-edge term."""
    prov = _provider(ensemble, cfg)
    L_eff = _effective_lag_cap(ensemble.grid)
    return _edge_z(ensemble.positions, prov, L_eff, ensemble.grid.dt)


def drift_process(ensemble: PathEnsemble, cfg: ActionConfig):
    """The Y integrand as a process on the left grid nodes."""
    prov = _provider(ensemble, cfg)
    L_eff = _effective_lag_cap(ensemble.grid)
    _, drift = _drift_y(ensemble.positions, prov, L_eff, ensemble.grid.dt,
                        want_drift=True)
    return DriftProcess(times=ensemble.grid.times[:-1], values=drift)


def action_renormalized(ensemble: PathEnsemble, cfg: ActionConfig):
    """Full breakdown on the configured route.

    naive: s_ren = s_total - counterterm (regulator required).
    decomposed: s_ren = s_od + X + Y + Z, defined down to eps = 0 — where the
    window must be the full triangle (tau = T), the only form whose limit the
    renormalised action is defined through.
    """
    prov = _provider(ensemble, cfg)
    grid = ensemble.grid
    L_eff = _effective_lag_cap(grid)
    P = ensemble.positions
    dt = grid.dt
    ct = counterterm(cfg.params, grid, cfg.quad)
    if cfg.route == "naive":
        _check_naive(cfg)
        s_dd = _diag_window_w(P, prov, L_eff, dt)
        s_od = _far_window_w(P, prov, L_eff, dt)
        s_total = s_dd + s_od
        return ActionBreakdown(s_total=s_total, s_dd=s_dd, s_od=s_od,
                               s_ren=s_total - ct, diag_counterterm=ct,
                               route="naive")
    if cfg.params.eps <= 0.0 and not grid.full_triangle:
        raise RouteForbidden(
            "eps = 0 requires the full-triangle window (tau = T)")
    s_od = _far_window_w(P, prov, L_eff, dt)
    x = _equal_time_x(P, prov, dt)
    y = _drift_y(P, prov, L_eff, dt)
    z = _edge_z(P, prov, L_eff, dt)
    s_ren = s_od + x + y + z
    s_total = s_ren + ct if np.isfinite(ct) else np.full_like(s_ren, np.inf)
    return ActionBreakdown(s_total=s_total, s_od=s_od, x_term=x, y_term=y,
                           z_term=z, s_ren=s_ren, diag_counterterm=ct,
                           route="decomposed")


def ito_residual(ensemble: PathEnsemble, cfg: ActionConfig, return_parts=False):
    """Pathwise defect s_dd - (counterterm + X + Y + Z); O(dt^{1/2}) RMS.

    With return_parts=True also returns the breakdown holding both sides'
    pieces, so refinement studies get RMS(s_dd) without recomputation.
    """
    _check_naive(cfg)
    prov = _provider(ensemble, cfg)
    grid = ensemble.grid
    L_eff = _effective_lag_cap(grid)
    P = ensemble.positions
    dt = grid.dt
    s_dd = _diag_window_w(P, prov, L_eff, dt)
    x = _equal_time_x(P, prov, dt)
    y = _drift_y(P, prov, L_eff, dt)
    z = _edge_z(P, prov, L_eff, dt)
    ct = counterterm(cfg.params, grid, cfg.quad)
    resid = s_dd - (ct + x + y + z)
    if return_parts:
        parts = ActionBreakdown(s_dd=s_dd, x_term=x, y_term=y, z_term=z,
                                diag_counterterm=ct, ito_residual=resid,
                                route="naive")
        return resid, parts
    return resid
