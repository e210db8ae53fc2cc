"""Parametric curves, geodesic and forced-trajectory integration, congruences.

Integrated curves use the classical fixed-step fourth-order scheme with
dense output by cubic Hermite interpolation between accepted nodes, so a
``Curve`` evaluates in O(1) after integration and interpolation error
matches the integrator order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import expressions as ex
from .errors import CurveTruncationError, DomainError, ShootingError
from .geometry import ConnectionManifold


@dataclass(frozen=True, eq=False)
class Curve:
    """Parametric path with exact point and tangent evaluation."""

    point_at: Callable[[float], np.ndarray]
    tangent_at: Callable[[float], np.ndarray]
    interval: tuple
    kind: str = "analytic"
    name: str = "curve"


def parametric_curve(point, interval, tangent=None, name="curve", fd_step=1e-6):
    """Wrap a point function into a Curve; tangent defaults to a central difference."""
    point_arr = lambda t: np.asarray(point(t), dtype=float)  # noqa: E731
    if tangent is None:
        tangent_fn = lambda t: (point_arr(t + fd_step) - point_arr(t - fd_step)) / (  # noqa: E731
            2.0 * fd_step
        )
    else:
        tangent_fn = lambda t: np.asarray(tangent(t), dtype=float)  # noqa: E731
    return Curve(point_arr, tangent_fn, (float(interval[0]), float(interval[1])), "analytic", name)


def constant_curve(point, interval=(0.0, 1.0), name="point"):
    """Degenerate curve that stays at one point; transports along it are trivial."""
    p = np.asarray(point, dtype=float).copy()
    z = np.zeros_like(p)
    return Curve(lambda t: p, lambda t: z, (float(interval[0]), float(interval[1])), "analytic", name)


def curve_from_expressions(components, interval, var="t", name="curve"):
    """Analytic curve from coordinate expressions in one parameter variable."""
    trees = [ex.parse_expression(str(c), [var]) for c in components]
    dtrees = [ex.differentiate(t, var) for t in trees]
    pfn = ex.compile_array(trees, [var])
    tfn = ex.compile_array(dtrees, [var])
    return Curve(
        lambda t: np.array(pfn(t), dtype=float),
        lambda t: np.array(tfn(t), dtype=float),
        (float(interval[0]), float(interval[1])),
        "analytic",
        name,
    )


def curve_tangent_residual(curve: Curve, t: float, h: float = 1e-6) -> float:
    """Disagreement between the stored tangent and a central difference of the points."""
    fd = (curve.point_at(t + h) - curve.point_at(t - h)) / (2.0 * h)
    return float(np.max(np.abs(fd - curve.tangent_at(t))))


def _rk4_dense(rhs, y0, t0, t1, max_step):
    """Fixed-step RK4 over [t0, t1]; returns node times, states and slopes."""
    if t1 == t0:
        f0 = rhs(t0, y0)
        return np.array([t0]), np.array([y0]), np.array([f0])
    n_steps = max(1, int(math.ceil(abs(t1 - t0) / max_step - 1e-12)))
    h = (t1 - t0) / n_steps
    ts = t0 + h * np.arange(n_steps + 1)
    ts[-1] = t1
    ys = np.empty((n_steps + 1, len(y0)))
    fs = np.empty_like(ys)
    y = np.asarray(y0, dtype=float)
    ys[0] = y
    f = np.asarray(rhs(t0, y), dtype=float)
    fs[0] = f
    for k in range(n_steps):
        t = ts[k]
        k1 = f
        k2 = np.asarray(rhs(t + 0.5 * h, y + 0.5 * h * k1), dtype=float)
        k3 = np.asarray(rhs(t + 0.5 * h, y + 0.5 * h * k2), dtype=float)
        k4 = np.asarray(rhs(t + h, y + h * k3), dtype=float)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        f = np.asarray(rhs(ts[k + 1], y), dtype=float)
        ys[k + 1] = y
        fs[k + 1] = f
    return ts, ys, fs


def _hermite(tau, y0, d0, y1, d1, h):
    t2 = tau * tau
    t3 = t2 * tau
    return (
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + tau) * h * d0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * d1
    )


def _dense_curve(ts, xs, vs, accs, interval, name):
    nseg = len(ts) - 1
    if nseg == 0:
        return constant_curve(xs[0], interval, name)
    span = abs(interval[1] - interval[0])
    slack = 1e-9 * max(1.0, span)
    lo, hi = min(interval), max(interval)

    def locate(t):
        if t < lo - slack or t > hi + slack:
            raise ValueError(f"{name}: parameter {t} outside interval {interval}")
        k = int(np.searchsorted(ts, t, side="right")) - 1
        k = min(max(k, 0), nseg - 1)
        h = ts[k + 1] - ts[k]
        return k, (t - ts[k]) / h, h

    def point_at(t):
        k, tau, h = locate(t)
        return _hermite(tau, xs[k], vs[k], xs[k + 1], vs[k + 1], h)

    def tangent_at(t):
        k, tau, h = locate(t)
        return _hermite(tau, vs[k], accs[k], vs[k + 1], accs[k + 1], h)

    return Curve(point_at, tangent_at, (float(interval[0]), float(interval[1])), "integrated", name)


def _integrate_second_order(m, x0, v0, interval, acceleration, step, name, initial_parameter=None):
    n = m.dim
    x0 = m.require_inside(x0)
    v0 = np.asarray(v0, dtype=float)
    a, b = float(interval[0]), float(interval[1])
    t0 = a if initial_parameter is None else float(initial_parameter)
    if not (min(a, b) - 1e-12 <= t0 <= max(a, b) + 1e-12):
        raise ValueError(f"{name}: initial parameter {t0} outside interval {interval}")

    def rhs(t, y):
        x = y[:n]
        v = y[n:]
        return np.concatenate([v, acceleration(t, x, v)])

    cursor = {"t": t0}

    def guarded_rhs(t, y):
        cursor["t"] = t
        return rhs(t, y)

    y0 = np.concatenate([x0, v0])
    try:
        pieces = []
        if t0 > a:
            ts_b, ys_b, fs_b = _rk4_dense(guarded_rhs, y0, t0, a, step)
            pieces.append((ts_b[::-1], ys_b[::-1], fs_b[::-1]))
        if t0 < b or not pieces:
            ts_f, ys_f, fs_f = _rk4_dense(guarded_rhs, y0, t0, b, step)
            if pieces:
                ts_f, ys_f, fs_f = ts_f[1:], ys_f[1:], fs_f[1:]
            pieces.append((ts_f, ys_f, fs_f))
    except DomainError as err:
        raise CurveTruncationError(
            f"{name}: trajectory left the chart domain: {err}", cursor["t"]
        ) from err
    ts = np.concatenate([p[0] for p in pieces])
    ys = np.concatenate([p[1] for p in pieces])
    fs = np.concatenate([p[2] for p in pieces])
    return _dense_curve(ts, ys[:, :n], ys[:, n:], fs[:, n:], interval, name)


def integrate_geodesic(
    m: ConnectionManifold,
    x0,
    U0,
    interval,
    f: Optional[Callable[[float], float]] = None,
    step: float = 1e-3,
    name: str = "geodesic",
    initial_parameter: Optional[float] = None,
) -> Curve:
    """Integrate ``x'' + gamma(x)(x', x') = f(u) x'`` from initial data.

    With ``f`` omitted the parameter is affine.  Initial data is taken at
    ``initial_parameter`` (default: the interval start); the trajectory is
    integrated both ways when that lies inside the interval.  Leaving the
    chart raises a truncation error carrying the exit parameter.
    """
    if step <= 0:
        raise ValueError("step must be positive")

    def acceleration(t, x, v):
        g = m.gamma_at(x)
        acc = -np.einsum("ijk,j,k->i", g, v, v)
        if f is not None:
            acc = acc + f(t) * v
        return acc

    return _integrate_second_order(
        m, x0, U0, interval, acceleration, step, name, initial_parameter
    )


def integrate_forced(
    m: ConnectionManifold,
    x0,
    U0,
    F: Callable[[float, np.ndarray, np.ndarray], np.ndarray],
    interval,
    step: float = 1e-3,
    name: str = "trajectory",
    initial_parameter: Optional[float] = None,
) -> Curve:
    """Integrate ``x'' + gamma(x)(x', x') = F(s, x, x')``."""
    if step <= 0:
        raise ValueError("step must be positive")

    def acceleration(t, x, v):
        g = m.gamma_at(x)
        return -np.einsum("ijk,j,k->i", g, v, v) + np.asarray(F(t, x, v), dtype=float)

    return _integrate_second_order(
        m, x0, U0, interval, acceleration, step, name, initial_parameter
    )


@dataclass(frozen=True, eq=False)
class Congruence:
    """Two-parameter family of paths ``y(u, v)`` with its coordinate partials.

    ``U`` and ``V`` are the partial derivatives along the u- and v-lines;
    ``g`` optionally records the scaling function of the v-parameterization
    for use by deviation-equation evaluators.
    """

    y: Callable[[float, float], np.ndarray]
    u_interval: tuple
    v_interval: tuple
    U: Callable[[float, float], np.ndarray]
    V: Callable[[float, float], np.ndarray]
    g: Optional[Callable] = None


def analytic_congruence(y, u_interval, v_interval, U=None, V=None, h_u=1e-6, h_v=1e-6, g=None):
    """Congruence from a closed-form family; missing partials use central differences."""
    y_arr = lambda u, v: np.asarray(y(u, v), dtype=float)  # noqa: E731
    if U is None:
        U = lambda u, v: (y_arr(u + h_u, v) - y_arr(u - h_u, v)) / (2.0 * h_u)  # noqa: E731
    if V is None:
        V = lambda u, v: (y_arr(u, v + h_v) - y_arr(u, v - h_v)) / (2.0 * h_v)  # noqa: E731
    return Congruence(y_arr, tuple(u_interval), tuple(v_interval), U, V, g)


def mixed_partial_residual(c: Congruence, u: float, v: float, h: float = 1e-4) -> float:
    """Disagreement between d/du of V and d/dv of U at ``(u, v)``."""
    duv = (np.asarray(c.V(u + h, v)) - np.asarray(c.V(u - h, v))) / (2.0 * h)
    dvu = (np.asarray(c.U(u, v + h)) - np.asarray(c.U(u, v - h))) / (2.0 * h)
    return float(np.max(np.abs(duv - dvu)))


def geodesic_congruence(
    m: ConnectionManifold,
    seed_points: Curve,
    seed_velocities: Callable[[float], np.ndarray],
    u_interval,
    f=None,
    g=None,
    step: float = 1e-3,
    h_v: float = 1e-4,
) -> Congruence:
    """Family of u-geodesics launched from a seed curve parameterized by v.

    Member through ``v`` starts at ``seed_points(v)`` with velocity
    ``seed_velocities(v)`` and solves the (possibly non-affine, via ``f``)
    geodesic equation in u.  ``V`` comes from central differences across
    members with spacing ``h_v``.
    """
    cache = {}

    def member(v):
        key = round(float(v), 12)
        if key not in cache:
            try:
                cache[key] = integrate_geodesic(
                    m,
                    seed_points.point_at(v),
                    seed_velocities(v),
                    u_interval,
                    f=f,
                    step=step,
                    name=f"member@{v:g}",
                )
            except CurveTruncationError as err:
                raise CurveTruncationError(
                    f"congruence member at v={v:g} truncated", err.exit_parameter
                ) from err
        return cache[key]

    return Congruence(
        y=lambda u, v: member(v).point_at(u),
        u_interval=tuple(u_interval),
        v_interval=tuple(seed_points.interval),
        U=lambda u, v: member(v).tangent_at(u),
        V=lambda u, v: (member(v + h_v).point_at(u) - member(v - h_v).point_at(u)) / (2.0 * h_v),
        g=g,
    )


def connect_geodesic(
    m: ConnectionManifold,
    p,
    q,
    interval=(0.0, 1.0),
    step: float = 1e-2,
    tol: float = 1e-9,
    max_iter: int = 50,
    pad: float = 0.0,
) -> Curve:
    """Geodesic from ``p`` to ``q`` over ``interval`` by damped Newton shooting.

    Newton iterates on the initial velocity with a finite-difference
    sensitivity matrix; backtracking halves the update until the endpoint
    residual decreases.  Coincident endpoints yield a constant curve.
    ``pad`` extends the returned curve's parameter range beyond both
    interval ends (the meeting parameters stay at the interval ends), so
    finite-difference stencils at the ends have room.
    """
    p = m.require_inside(p)
    q = m.require_inside(q)
    span = interval[1] - interval[0]
    if span <= 0:
        raise ValueError("interval must be increasing")
    padded = (interval[0] - pad, interval[1] + pad)
    if np.max(np.abs(q - p)) < tol:
        return constant_curve(p, padded, name="connector")

    def endpoint(U):
        try:
            c = integrate_geodesic(m, p, U, interval, step=step, name="connector")
        except CurveTruncationError as err:
            raise ShootingError(f"shooting trajectory truncated: {err}") from err
        return c.point_at(interval[1]), c

    def finish(U):
        if pad == 0.0:
            return None
        try:
            return integrate_geodesic(
                m, p, U, padded, step=step, name="connector", initial_parameter=interval[0]
            )
        except CurveTruncationError as err:
            raise ShootingError(f"padded connector truncated: {err}") from err

    U = (q - p) / span
    end, curve = endpoint(U)
    r = end - q
    for _ in range(max_iter):
        rnorm = np.max(np.abs(r))
        if rnorm < tol:
            return finish(U) or curve
        scale = max(1.0, float(np.max(np.abs(U))))
        delta = 1e-7 * scale
        jac = np.empty((m.dim, m.dim))
        for j in range(m.dim):
            bumped = U.copy()
            bumped[j] += delta
            end_j, _ = endpoint(bumped)
            jac[:, j] = (end_j - end) / delta
        try:
            dU = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError as err:
            raise ShootingError("singular shooting sensitivity matrix") from err
        lam = 1.0
        while True:
            trial_U = U + lam * dU
            trial_end, trial_curve = endpoint(trial_U)
            trial_r = trial_end - q
            if np.max(np.abs(trial_r)) < rnorm or lam < 1.0 / 1024.0:
                break
            lam *= 0.5
        if np.max(np.abs(trial_r)) >= rnorm:
            raise ShootingError("shooting stalled; endpoints may be conjugate")
        U, end, curve, r = trial_U, trial_end, trial_curve, trial_r
    if np.max(np.abs(r)) < tol:
        return finish(U) or curve
    raise ShootingError(f"shooting did not reach tolerance {tol:g} in {max_iter} iterations")
