"""Independent brute-force references the rest of the package is tested against.

Each oracle is built only from machinery below the operation it validates:
loop holonomy uses transports only, the two-geodesic separation uses curve
integration only, and the finite-difference second deviation rate uses the
deviation vector but none of the equation evaluators.  Every oracle returns
its value together with self-convergence evidence.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .curves import Curve, integrate_geodesic, parametric_curve
from .errors import DomainError, GeometryError
from .geometry import ConnectionManifold
from .transport import parallel_transport_law, transport_matrix


@dataclass(frozen=True)
class RefinementReport:
    """Errors observed over a refinement sweep and the fitted convergence order."""

    parameter_values: tuple
    errors: tuple
    fitted_order: float

    def to_dict(self):
        return {
            "parameter_values": list(self.parameter_values),
            "errors": list(self.errors),
            "fitted_order": self.fitted_order,
        }

    def to_json(self):
        return json.dumps(self.to_dict())


@dataclass(frozen=True, eq=False)
class OracleEstimate:
    """Oracle value with its self-convergence bound and refinement evidence."""

    value: np.ndarray
    bound: float
    report: RefinementReport


def fit_order(parameter_values, errors) -> RefinementReport:
    """Least-squares slope of log(error) against log(parameter)."""
    params = [float(p) for p in parameter_values]
    errs = [float(e) for e in errors]
    if len(params) < 3 or len(params) != len(errs):
        raise ValueError("need at least three matching parameter/error pairs")
    if any(e <= 0.0 for e in errs):
        raise ValueError("errors must be positive for order fitting")
    if any(p <= 0.0 for p in params):
        raise ValueError("parameters must be positive for order fitting")
    lp = np.log(params)
    le = np.log(errs)
    slope = np.polyfit(lp, le, 1)[0]
    return RefinementReport(tuple(params), tuple(errs), float(slope))


def measure_order(f, steps) -> RefinementReport:
    """Evaluate ``f`` on a decreasing step list and fit the convergence order."""
    steps = [float(s) for s in steps]
    if len(steps) < 3:
        raise ValueError("need at least three steps")
    if any(b >= a for a, b in zip(steps, steps[1:])):
        raise ValueError("steps must be strictly decreasing")
    errors = [float(f(s)) for s in steps]
    return fit_order(steps, errors)


_ERROR_FLOOR = 1e-16


def _floored(values):
    return [max(float(v), _ERROR_FLOOR) for v in values]


def holonomy_curvature(
    m: ConnectionManifold, x, plane, eps: float, leg_steps: int = 50
) -> OracleEstimate:
    """Curvature matrix estimate from transport around a small coordinate rectangle.

    Transports around the rectangle of side ``eps`` spanned by the two
    coordinate directions in ``plane`` and returns ``(I - H_loop)/eps^2``,
    which converges to ``R[:, :, k, l]`` as the loop shrinks.
    """
    x = m.require_inside(x)
    k, l = plane
    n = m.dim
    ek = np.zeros(n)
    ek[k] = 1.0
    el = np.zeros(n)
    el[l] = 1.0

    def loop_transport(side):
        corners = [x, x + side * ek, x + side * ek + side * el, x + side * el]
        for c in corners:
            if not m.domain(c):
                raise DomainError(
                    f"{m.name}: holonomy loop corner {c.tolist()} outside chart"
                )
        law = parallel_transport_law(m, step=side / leg_steps)
        directions = [ek, el, -ek, -el]
        H = np.eye(n)
        for corner, d in zip(corners, directions):
            leg = parametric_curve(
                lambda t, corner=corner, d=d: corner + t * d,
                (0.0, side),
                tangent=lambda t, d=d: d,
                name="loop-leg",
            )
            H = transport_matrix(law, leg, 0.0, side).H @ H
        return H

    def estimate(side):
        return (np.eye(n) - loop_transport(side)) / (side * side)

    est = [estimate(eps), estimate(eps / 2.0), estimate(eps / 4.0)]
    extrap = 2.0 * est[2] - est[1]
    errors = _floored(float(np.max(np.abs(e - extrap))) for e in est)
    report = fit_order([eps, eps / 2.0, eps / 4.0], errors)
    bound = float(np.max(np.abs(est[1] - est[2]))) + 1e-12
    return OracleEstimate(est[0], bound, report)


def two_geodesic_separation(
    m: ConnectionManifold,
    base: Curve,
    offset_v0,
    offset_dv0,
    u: float,
    delta: float,
    step: float = 1e-3,
) -> OracleEstimate:
    """Finite-difference separation field of a perturbed geodesic at parameter ``u``.

    Launches neighbors with initial point and velocity offset by
    ``delta * (offset_v0, offset_dv0)``, forms ``(neighbor - base)/delta``
    and removes the leading offset error by extrapolating over ``delta``
    and ``delta/2``.  The returned bound is the change seen on one further
    halving.
    """
    a = base.interval[0]
    if not (min(base.interval) <= u <= max(base.interval)):
        raise ValueError("evaluation parameter outside the base interval")
    x0 = np.asarray(base.point_at(a), dtype=float)
    u0 = np.asarray(base.tangent_at(a), dtype=float)
    v_off = np.asarray(offset_v0, dtype=float)
    dv_off = np.asarray(offset_dv0, dtype=float)
    base_end = np.asarray(base.point_at(u), dtype=float)

    def separation(d):
        neighbor = integrate_geodesic(
            m, x0 + d * v_off, u0 + d * dv_off, (a, u), step=step, name="neighbor"
        )
        return (np.asarray(neighbor.point_at(u), dtype=float) - base_end) / d

    s1 = separation(delta)
    s2 = separation(delta / 2.0)
    s4 = separation(delta / 4.0)
    first = 2.0 * s2 - s1
    second = 2.0 * s4 - s2
    errors = _floored(float(np.max(np.abs(s - second))) for s in (s1, s2, s4))
    report = fit_order([delta, delta / 2.0, delta / 4.0], errors)
    bound = float(np.max(np.abs(first - second))) + 1e-12
    return OracleEstimate(first, bound, report)


def fd_second_deviation(
    scn,
    law,
    s: float,
    h_s: float,
    quad_panels: int | None = None,
) -> OracleEstimate:
    """Second covariant rate of the deviation vector along the observer.

    Five-point central stencils on the deviation components with the
    connection corrections of the observer path; evidence comes from
    repeating at doubled and quadrupled spacing.
    """
    from .deviation import deviation_vector, memoize_scalar

    m = scn.manifold
    dev = memoize_scalar(
        lambda sp: deviation_vector(law, scn, sp, quad_panels, check=False).components
    )

    def a_at(sp):
        g = m.gamma_at(scn.x.point_at(sp))
        return np.einsum("ikj,k->ij", g, np.asarray(scn.x.tangent_at(sp), dtype=float))

    def second(h):
        vm2, vm1, v0, vp1, vp2 = (dev(s + k * h) for k in (-2, -1, 0, 1, 2))
        hpp = (-vm2 + 16.0 * vm1 - 30.0 * v0 + 16.0 * vp1 - vp2) / (12.0 * h * h)
        hp = (vm2 - 8.0 * vm1 + 8.0 * vp1 - vp2) / (12.0 * h)
        a0 = a_at(s)
        da = (a_at(s + h) - a_at(s - h)) / (2.0 * h)
        return hpp + da @ v0 + 2.0 * (a0 @ hp) + a0 @ (a0 @ v0)

    vals = [second(4.0 * h_s), second(2.0 * h_s), second(h_s)]
    extrap = vals[2] + (vals[2] - vals[1]) / 3.0
    errors = _floored(float(np.max(np.abs(v - extrap))) for v in vals)
    report = fit_order([4.0 * h_s, 2.0 * h_s, h_s], errors)
    bound = float(np.max(np.abs(vals[2] - vals[1]))) / 3.0 + 1e-12
    return OracleEstimate(vals[2], bound, report)
