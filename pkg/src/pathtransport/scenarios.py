"""Constructors for deviation scenarios.

Three families ship: connector geodesics found by two-point shooting
(the generic case), congruence sections (v-lines joining two u-lines of a
two-parameter family), and force-driven families where the particles are
integrated trajectories and the connectors are their constant-parameter
sections.  All builders keep the connector meeting parameters independent
of the evolution parameter, so boundary-motion terms of the second-rate
calculus vanish by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .curves import (
    Congruence,
    Curve,
    connect_geodesic,
    constant_curve,
    integrate_forced,
    parametric_curve,
)
from .deviation import DeviationScenario, memoize_scalar
from .geometry import ConnectionManifold


def _identity(s: float) -> float:
    return s


def geodesic_scenario(
    m: ConnectionManifold,
    x1: Curve,
    x2: Curve,
    x: Optional[Curve] = None,
    tau1: Callable[[float], float] = _identity,
    tau2: Callable[[float], float] = _identity,
    s_interval=None,
    connector_interval=(0.0, 1.0),
    eta_interval=(0.0, 1.0),
    shooting_step: float = 1e-2,
    shooting_tol: float = 1e-9,
    connector_pad: float = 0.05,
) -> DeviationScenario:
    """Scenario whose connectors are two-point geodesics of the connection.

    ``gamma_s`` joins ``x1(tau1(s))`` to ``x2(tau2(s))`` over
    ``connector_interval``; ``eta_s`` joins ``x1(tau1(s))`` to the observer
    ``x(s)`` (``x`` defaults to ``x1``, making ``eta_s`` a point curve).
    Connectors are cached per evolution parameter and carry
    ``connector_pad`` of extra parameter range for endpoint stencils.
    """
    observer = x if x is not None else x1
    if s_interval is None:
        s_interval = observer.interval

    def build_gamma(s):
        p = x1.point_at(tau1(s))
        q = x2.point_at(tau2(s))
        return connect_geodesic(
            m, p, q, connector_interval,
            step=shooting_step, tol=shooting_tol, pad=connector_pad,
        )

    def build_eta(s):
        p = x1.point_at(tau1(s))
        q = observer.point_at(s)
        if np.max(np.abs(np.asarray(q) - np.asarray(p))) < shooting_tol:
            return constant_curve(p, eta_interval, name="observer-connector")
        return connect_geodesic(
            m, p, q, eta_interval,
            step=shooting_step, tol=shooting_tol, pad=connector_pad,
        )

    return DeviationScenario(
        manifold=m,
        x1=x1,
        x2=x2,
        x=observer,
        tau1=tau1,
        tau2=tau2,
        connector_gamma=memoize_scalar(build_gamma),
        connector_eta=memoize_scalar(build_eta),
        r_prime=lambda s: connector_interval[0],
        r_dprime=lambda s: connector_interval[1],
        t_prime=lambda s: eta_interval[0],
        t_dprime=lambda s: eta_interval[1],
        s_interval=tuple(s_interval),
    )


def congruence_scenario(
    m: ConnectionManifold,
    congruence: Congruence,
    v1: float,
    v2: float,
    s_interval=None,
) -> DeviationScenario:
    """Scenario on a two-parameter family: u-lines observed, v-lines connecting.

    ``x1`` and ``x2`` are the u-lines at ``v1`` and ``v2``; the observer is
    ``x1`` itself, so the observer connector is a point curve and the
    deviation vector is the connector displacement.
    """
    if s_interval is None:
        s_interval = congruence.u_interval
    lo, hi = min(v1, v2), max(v1, v2)

    def u_line(v):
        return parametric_curve(
            lambda u: congruence.y(u, v),
            congruence.u_interval,
            tangent=lambda u: congruence.U(u, v),
            name=f"u-line@{v:g}",
        )

    x1 = u_line(v1)
    x2 = u_line(v2)

    def build_gamma(s):
        return parametric_curve(
            lambda v: congruence.y(s, v),
            (lo, hi),
            tangent=lambda v: congruence.V(s, v),
            name=f"v-line@{s:g}",
        )

    def build_eta(s):
        return constant_curve(congruence.y(s, v1), (0.0, 1.0), name="observer-connector")

    return DeviationScenario(
        manifold=m,
        x1=x1,
        x2=x2,
        x=x1,
        tau1=_identity,
        tau2=_identity,
        connector_gamma=memoize_scalar(build_gamma),
        connector_eta=memoize_scalar(build_eta),
        r_prime=lambda s: v1,
        r_dprime=lambda s: v2,
        t_prime=lambda s: 0.0,
        t_dprime=lambda s: 1.0,
        s_interval=tuple(s_interval),
        s_path=memoize_scalar(
            lambda r: parametric_curve(
                lambda s: congruence.y(s, r),
                s_interval,
                tangent=lambda s: congruence.U(s, r),
                name=f"u-line@{r:g}",
            )
        ),
    )


@dataclass(frozen=True, eq=False)
class ForcedFamily:
    """Family of forced trajectories indexed by a connector parameter.

    For each ``r``, the particle path starts at ``chi(r)`` with velocity
    ``phi(r)`` and feels the force ``family_force(s, r, point)``.  Sections
    at constant evolution parameter serve as connector curves; particle
    paths are integrated once per ``r`` and cached.
    """

    manifold: ConnectionManifold
    chi: Curve
    phi: Callable[[float], np.ndarray]
    family_force: Callable[[float, float, np.ndarray], np.ndarray]
    s_interval: tuple
    step: float = 1e-3
    section_tangent_step: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "_member", memoize_scalar(self._integrate))

    def _integrate(self, r):
        force = lambda s, x, v: np.asarray(  # noqa: E731
            self.family_force(s, r, x), dtype=float
        )
        return integrate_forced(
            self.manifold,
            self.chi.point_at(r),
            self.phi(r),
            force,
            self.s_interval,
            step=self.step,
            name=f"particle@{r:g}",
        )

    def particle(self, r: float) -> Curve:
        return self._member(r)

    def section(self, s: float) -> Curve:
        """Constant-``s`` section ``r -> particle_r(s)``; tangent by differencing in r."""
        dr = self.section_tangent_step

        def point(r):
            return self._member(r).point_at(s)

        def tangent(r):
            return (
                self._member(r + dr).point_at(s) - self._member(r - dr).point_at(s)
            ) / (2.0 * dr)

        return Curve(point, tangent, self.chi.interval, "analytic", f"section@{s:g}")


def forced_family_scenario(
    m: ConnectionManifold,
    family: ForcedFamily,
    r_prime: float,
    r_dprime: float,
    observer: Optional[Curve] = None,
    eta_interval=(0.0, 1.0),
    shooting_step: float = 1e-2,
    shooting_tol: float = 1e-9,
) -> DeviationScenario:
    """Scenario whose particles are two members of a forced family.

    The observer defaults to the first particle.  A distinct observer is
    joined to it by shot geodesic connectors.
    """
    x1 = family.particle(r_prime)
    x2 = family.particle(r_dprime)
    x = observer if observer is not None else x1

    def build_eta(s):
        p = x1.point_at(s)
        q = x.point_at(s)
        if np.max(np.abs(np.asarray(q) - np.asarray(p))) < shooting_tol:
            return constant_curve(p, eta_interval, name="observer-connector")
        return connect_geodesic(
            m, p, q, eta_interval, step=shooting_step, tol=shooting_tol
        )

    return DeviationScenario(
        manifold=m,
        x1=x1,
        x2=x2,
        x=x,
        tau1=_identity,
        tau2=_identity,
        connector_gamma=memoize_scalar(family.section),
        connector_eta=memoize_scalar(build_eta),
        r_prime=lambda s: r_prime,
        r_dprime=lambda s: r_dprime,
        t_prime=lambda s: eta_interval[0],
        t_dprime=lambda s: eta_interval[1],
        s_interval=tuple(family.s_interval),
        s_path=family.particle,
    )
