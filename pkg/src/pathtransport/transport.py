"""Linear transports along paths.

Two transport laws ship: ``parallel`` integrates the connection's transport
equation ``dH/dt = -A(t) H`` with ``A^i_j = gamma^i_{kj}(c(t)) c'(t)^k``,
and ``euclidean`` keeps components unchanged.  Matrices map fiber
components at the source parameter to components at the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .curves import Curve
from .errors import BasePointMismatchError, DomainError, GeometryError
from .geometry import ConnectionManifold, TangentVector


@dataclass(frozen=True, eq=False)
class TransportMatrix:
    """Matrix of a linear transport from parameter ``s`` to ``t`` along one curve."""

    H: np.ndarray
    curve_id: str
    s: float
    t: float


@dataclass(frozen=True, eq=False)
class TransportLaw:
    """Recipe for computing transports: ``parallel`` (needs a manifold) or ``euclidean``."""

    kind: str
    manifold: Optional[ConnectionManifold] = None
    integrator_step: float = 1e-3

    def __post_init__(self):
        if self.kind not in ("parallel", "euclidean"):
            raise ValueError(f"unknown transport kind {self.kind!r}")
        if self.kind == "parallel" and self.manifold is None:
            raise ValueError("parallel transport needs a manifold")
        if self.integrator_step <= 0:
            raise ValueError("integrator step must be positive")


def parallel_transport_law(m: ConnectionManifold, step: float = 1e-3) -> TransportLaw:
    return TransportLaw("parallel", m, step)


def euclidean_transport_law(step: float = 1e-3) -> TransportLaw:
    return TransportLaw("euclidean", None, step)


def _check_params(curve: Curve, *params):
    lo, hi = min(curve.interval), max(curve.interval)
    slack = 1e-9 * max(1.0, hi - lo)
    for p in params:
        if p < lo - slack or p > hi + slack:
            raise ValueError(
                f"parameter {p} outside curve interval [{lo}, {hi}] of {curve.name!r}"
            )


def transport_matrix(law: TransportLaw, curve: Curve, s: float, t: float) -> TransportMatrix:
    """Matrix of the transport from ``s`` to ``t`` along ``curve``.

    Equal parameters return the identity without any integration.
    """
    _check_params(curve, s, t)
    dim = len(np.asarray(curve.point_at(s), dtype=float))
    if s == t or law.kind == "euclidean":
        return TransportMatrix(np.eye(dim), curve.name, s, t)

    m = law.manifold
    n_steps = max(1, int(math.ceil(abs(t - s) / law.integrator_step - 1e-12)))
    h = (t - s) / n_steps

    def slope(u, H):
        g = m.gamma_at(curve.point_at(u))
        a = np.einsum("ikj,k->ij", g, curve.tangent_at(u))
        return -a @ H

    H = np.eye(dim)
    u = s
    try:
        for k in range(n_steps):
            k1 = slope(u, H)
            k2 = slope(u + 0.5 * h, H + 0.5 * h * k1)
            k3 = slope(u + 0.5 * h, H + 0.5 * h * k2)
            k4 = slope(u + h, H + h * k3)
            H = H + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            u = s + (k + 1) * h
    except DomainError as err:
        raise DomainError(
            f"curve {curve.name!r} left the chart domain near parameter {u:g}: {err}"
        ) from err
    if abs(np.linalg.det(H)) < 1e-12:
        raise GeometryError("transport matrix is numerically singular")
    return TransportMatrix(H, curve.name, s, t)


def transport_vector(
    law: TransportLaw, curve: Curve, s: float, t: float, u: TangentVector
) -> TangentVector:
    """Carry a tangent vector based at ``curve(s)`` to ``curve(t)``."""
    base = np.asarray(curve.point_at(s), dtype=float)
    if np.max(np.abs(u.base_point - base)) > 1e-9:
        raise BasePointMismatchError(
            f"vector based at {u.base_point.tolist()} but curve point is {base.tolist()}"
        )
    H = transport_matrix(law, curve, s, t).H
    return TangentVector(curve.point_at(t), H @ u.components)


def compose_check(law: TransportLaw, curve: Curve, s: float, t: float, r: float) -> float:
    """Max-norm defect of the two-leg composition against the direct transport."""
    H_ts = transport_matrix(law, curve, s, t).H
    H_rt = transport_matrix(law, curve, t, r).H
    H_rs = transport_matrix(law, curve, s, r).H
    return float(np.max(np.abs(H_rt @ H_ts - H_rs)))


def i_path_residual(law: TransportLaw, curve: Curve, sample_count: int = 9) -> float:
    """How far a curve's tangent is from being carried into itself.

    Samples parameter pairs on a uniform grid and returns the worst
    disagreement between the transported and actual tangent; zero (up to
    integrator tolerance) exactly when the curve transports its own tangent.
    """
    if sample_count < 2:
        raise ValueError("need at least two samples")
    lo, hi = curve.interval
    params = np.linspace(lo, hi, sample_count)
    pairs = [(params[0], p) for p in params[1:]]
    pairs += [(params[k], params[k + 1]) for k in range(len(params) - 1)]
    worst = 0.0
    for a, b in pairs:
        H = transport_matrix(law, curve, a, b).H
        moved = H @ curve.tangent_at(a)
        worst = max(worst, float(np.max(np.abs(moved - curve.tangent_at(b)))))
    return worst
