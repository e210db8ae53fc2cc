"""Displacement vectors along a path.

The displacement of ``c(t)`` relative to ``c(s)`` is the integral over
``[s, t]`` of the curve's tangent carried back to ``c(s)``:

    d(s, t) = integral_s^t  H(s, u) c'(u) du,

a curved-chart generalization of the coordinate difference of endpoints.
Quadrature is composite Simpson; the running transport ``H(s, u)`` is grown
incrementally node to node, so the whole integral costs one transport solve
over the interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curves import Curve
from .errors import GeometryError
from .geometry import TangentVector
from .transport import TransportLaw, transport_matrix


@dataclass(frozen=True, eq=False)
class DisplacementVector:
    """Displacement of the target parameter relative to the anchor, based at the anchor."""

    anchor_s: float
    target_t: float
    vector: TangentVector


@dataclass(frozen=True)
class RecoveryReport:
    """Outcome of numerically inverting the displacement map.

    ``monotone`` is False when the scalar functional used for inversion is
    not strictly monotone on the sampled grid (the map cannot be inverted
    by bisection there); ``max_error`` is then reported over the recoverable
    samples only.
    """

    max_error: float
    monotone: bool


def default_panels(interval_length: float, step: float) -> int:
    """Simpson panel count matched to the transport step (node spacing ~ step)."""
    return max(1, int(math.ceil(abs(interval_length) / step / 2.0 - 1e-12)))


def _simpson_nodes_weights(s: float, t: float, panels: int):
    nodes = np.linspace(s, t, 2 * panels + 1)
    delta = (t - s) / (2 * panels)
    weights = np.ones(2 * panels + 1)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    weights *= delta / 3.0
    return nodes, weights


def displacement_vector(
    law: TransportLaw, curve: Curve, s: float, t: float, quad_panels: int | None = None
) -> DisplacementVector:
    """Displacement vector of ``curve(t)`` relative to ``curve(s)``.

    ``quad_panels`` is the Simpson panel count (two subintervals each);
    omitted, it is matched to the law's integrator step.  Antisymmetric in
    ``(s, t)`` by the orientation of the integral.
    """
    base = np.asarray(curve.point_at(s), dtype=float)
    if t == s:
        return DisplacementVector(s, t, TangentVector(base, np.zeros_like(base)))
    if quad_panels is None:
        quad_panels = default_panels(t - s, law.integrator_step)
    if quad_panels < 1:
        raise ValueError("need at least one quadrature panel")
    nodes, weights = _simpson_nodes_weights(s, t, quad_panels)
    total = np.zeros_like(base)
    H = np.eye(len(base))
    for k, u in enumerate(nodes):
        if k > 0:
            # H(s, u_k) = H(s, u_{k-1}) . H(u_{k-1}, u_k)
            H = H @ transport_matrix(law, curve, nodes[k], nodes[k - 1]).H
        total = total + weights[k] * (H @ curve.tangent_at(u))
    return DisplacementVector(s, t, TangentVector(base, total))


def composition_residual(
    law: TransportLaw,
    curve: Curve,
    r: float,
    s: float,
    t: float,
    quad_panels: int | None = None,
) -> float:
    """Defect of the displacement composition rule through an intermediate parameter.

    Measures ``|d(r, s) - d(r, t) - H(r, t) d(t, s)|`` in the max norm; zero
    for exact transports and quadrature.
    """
    d_rs = displacement_vector(law, curve, r, s, quad_panels).vector.components
    d_rt = displacement_vector(law, curve, r, t, quad_panels).vector.components
    d_ts = displacement_vector(law, curve, t, s, quad_panels).vector.components
    H_rt = transport_matrix(law, curve, t, r).H
    return float(np.max(np.abs(d_rs - d_rt - H_rt @ d_ts)))


def infinitesimal_displacement(curve: Curve, s: float, t: float) -> TangentVector:
    """First-order displacement ``(t - s) c'(s)``, exact on tangent-transporting paths."""
    return TangentVector(curve.point_at(s), (t - s) * curve.tangent_at(s))


def coordinate_recovery_check(
    law: TransportLaw,
    curve: Curve,
    s: float,
    samples: int = 9,
    quad_panels: int | None = None,
    bisect_tol: float = 1e-8,
) -> RecoveryReport:
    """Numerically invert the displacement map and report the worst parameter error.

    Projects displacements onto the anchor tangent direction and recovers
    each sampled parameter by bisection on that scalar.  A non-monotone
    functional flags the result instead of raising: the displacement map is
    then not injective on the sampled range.
    """
    lo, hi = curve.interval
    tangent = curve.tangent_at(s)
    norm = np.linalg.norm(tangent)
    if norm == 0.0:
        raise GeometryError("anchor tangent vanishes; no direction to project on")
    w = tangent / norm

    def functional(t):
        d = displacement_vector(law, curve, s, t, quad_panels).vector.components
        return float(d @ w)

    grid = np.linspace(lo, hi, max(samples, 3))
    values = np.array([functional(t) for t in grid])
    diffs = np.diff(values)
    monotone = bool(np.all(diffs > 0) or np.all(diffs < 0))
    if not monotone:
        return RecoveryReport(max_error=float("nan"), monotone=False)

    sign = 1.0 if values[-1] > values[0] else -1.0
    worst = 0.0
    for target_t in np.linspace(lo, hi, samples)[1:-1]:
        target = functional(target_t)
        a, b = lo, hi
        fa = values[0]
        for _ in range(200):
            mid = 0.5 * (a + b)
            if b - a < bisect_tol:
                break
            fm = functional(mid)
            if sign * (fm - target) < 0.0:
                a, fa = mid, fm
            else:
                b = mid
        worst = max(worst, abs(0.5 * (a + b) - target_t))
    return RecoveryReport(max_error=worst, monotone=True)
