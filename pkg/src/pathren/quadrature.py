"""Adaptive panel quadrature for radial momentum integrals.

Two routes cover every kernel evaluation:

* a worklist of nested Clenshaw-Curtis panels (33 points with the embedded
  17-point rule as error estimate) for integrands that decay within a known
  truncation radius, and
* a half-period panel route for oscillatory tails sin(r u) / cos(r u), with
  iterated-averaging acceleration of the alternating panel series when the
  envelope decays too slowly to truncate.

Both report an error estimate and the radius actually covered.
"""

import heapq

import numpy as np

from .params import QuadratureFailure, QuadratureSpec


def _cc_rule(n):
    """Clenshaw-Curtis nodes/weights on [-1, 1] with n+1 points (n even)."""
    j = np.arange(n + 1)
    theta = j * np.pi / n
    m = np.arange(n // 2 + 1)
    coef = 2.0 / (1.0 - 4.0 * m**2)
    coef[0] *= 0.5
    coef[-1] *= 0.5
    w = (2.0 / n) * np.cos(2.0 * np.outer(theta, m)) @ coef
    w[0] *= 0.5
    w[-1] *= 0.5
    return np.cos(theta), w


_X33, _W33 = _cc_rule(32)
_X17, _W17 = _cc_rule(16)


def panel_eval(f, a, b):
    """One nested CC pass over [a, b]: returns (integral, error estimate)."""
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    fv = f(mid + half * _X33)
    coarse = half * (_W17 @ fv[::2])
    fine = half * (_W33 @ fv)
    return fine, abs(fine - coarse)


def geometric_edges(a, b, h0, factor=1.7, h_cap=np.inf):
    """Panel edges from a to b starting at width h0, growing geometrically."""
    edges = [a]
    h = min(h0, h_cap)
    x = a
    while x < b:
        x = min(x + h, b)
        edges.append(x)
        h = min(h * factor, h_cap)
    return np.array(edges)


def adaptive_integral(f, edges, spec: QuadratureSpec):
    """Worklist panel integration over fixed outer edges.

    Bisects the worst panel until the summed nested-rule error estimate
    meets rel_tol (with abs_floor as an absolute escape hatch).
    """
    heap = []
    total = 0.0
    total_err = 0.0
    n_panels = 0
    for a, b in zip(edges[:-1], edges[1:]):
        val, err = panel_eval(f, a, b)
        heapq.heappush(heap, (-err, a, b, val))
        total += val
        total_err += err
        n_panels += 1
    while total_err > max(spec.rel_tol * abs(total), spec.abs_floor):
        neg_err, a, b, val = heapq.heappop(heap)
        if n_panels >= spec.panel_budget:
            raise QuadratureFailure(
                f"panel budget {spec.panel_budget} exhausted at error {total_err:.3e}")
        if (b - a) < 1e-14 * max(1.0, abs(b)):
            heapq.heappush(heap, (0.0, a, b, val))  # cannot refine further
            total_err += neg_err  # remove its error from the pool
            continue
        mid = 0.5 * (a + b)
        v1, e1 = panel_eval(f, a, mid)
        v2, e2 = panel_eval(f, mid, b)
        total += v1 + v2 - val
        total_err += e1 + e2 + neg_err
        heapq.heappush(heap, (-e1, a, mid, v1))
        heapq.heappush(heap, (-e2, mid, b, v2))
        n_panels += 1
    return total, total_err


def _averaged_limit(partial):
    """Limit of a partial-sum sequence by iterated pairwise averaging."""
    arr = np.asarray(partial, dtype=float)
    last = [arr[-1]]
    while arr.size > 1:
        arr = 0.5 * (arr[:-1] + arr[1:])
        last.append(arr[-1])
    est = last[-1]
    err = abs(last[-1] - last[-2]) if len(last) > 1 else abs(est)
    return est, err


def oscillatory_integral(env, a, u, spec: QuadratureSpec, kind="sin",
                         r_decay=None):
    """Integral of env(r) * sin(r u) (or cos) from a to infinity.

    Panels are aligned to the zeros of the trigonometric factor so the panel
    series alternates; the tail is summed directly while it decays and
    accelerated by iterated averaging otherwise.  ``r_decay`` is an optional
    radius beyond which the envelope is known to be negligible.
    """
    if u <= 0:
        raise ValueError("oscillatory route needs u > 0")
    trig = np.sin if kind == "sin" else np.cos
    f = lambda r: env(r) * trig(u * r)
    h = np.pi / u * spec.oscillation_panel

    if r_decay is not None and (r_decay - a) < 8.0 * h:
        # envelope dies within a few half-periods: plain adaptive panels
        edges = geometric_edges(a, r_decay, (r_decay - a) / 16.0, 1.5, h_cap=h)
        val, err = adaptive_integral(f, edges, spec)
        return val, err, edges[-1]

    # first zero of the trig factor at or beyond a
    shift = 0.0 if kind == "sin" else 0.5
    m0 = int(np.ceil(a * u / np.pi - shift))
    r0 = (m0 + shift) * np.pi / u
    head, head_err = (0.0, 0.0) if r0 <= a else panel_eval(f, a, r0)

    terms = []
    errs = head_err
    x = r0
    total = head
    n_direct = 0
    max_panels = spec.panel_budget
    # direct summation while terms decay fast
    while True:
        val, err = panel_eval(f, x, x + h)
        terms.append(val)
        errs += err
        total += val
        x += h
        n_direct += 1
        scale = max(abs(total), spec.abs_floor)
        if n_direct >= 4 and all(abs(t) < 0.05 * max(spec.rel_tol * scale, spec.abs_floor)
                                 for t in terms[-2:]):
            return total, errs, x
        if r_decay is not None and x >= r_decay and n_direct >= 4:
            return total, errs, x
        if n_direct >= 16:
            break
        if n_direct >= max_panels:
            raise QuadratureFailure("oscillatory head did not converge in budget")

    # slow envelope: accelerate the alternating tail
    n_accel = 32
    while True:
        partial = [total]
        for _ in range(n_accel):
            val, err = panel_eval(f, x, x + h)
            errs += err
            partial.append(partial[-1] + val)
            x += h
        est, accel_err = _averaged_limit(np.array(partial[1:]))
        if accel_err <= max(spec.rel_tol * abs(est), spec.abs_floor) or \
                (x - r0) / h >= max_panels:
            if accel_err > max(100 * spec.rel_tol * abs(est), 1e6 * spec.abs_floor):
                raise QuadratureFailure(
                    f"oscillatory tail acceleration stalled at error {accel_err:.3e}")
            return est, errs + accel_err, x
        total = partial[-1]
        n_accel *= 2
        if n_accel > 512:
            raise QuadratureFailure("oscillatory tail needs too many panels")


def truncation_radius(lam, eps, decay_rate):
    """Radius beyond which e^{-eps r^2 - rate*r} integrands are negligible."""
    d = 1e-6
    return lam + min(40.0 / max(abs(decay_rate), d), 8.0 / np.sqrt(max(eps, d * d)))
