"""Deviation vectors between paths and the equations they satisfy.

A deviation scenario bundles two observed paths ``x1``, ``x2``, an observer
path ``x``, parameter synchronizations ``tau1``, ``tau2`` and two connector
families: ``gamma_s`` joining ``x1(tau1(s))`` to ``x2(tau2(s))`` and
``eta_s`` joining ``x1(tau1(s))`` to ``x(s)``.  The deviation vector at
``x(s)`` is the displacement along ``gamma_s`` carried to the observer
along ``eta_s``.

The module also evaluates the right-hand sides of the second-order
equations this vector obeys: the pointwise field identity relating
``nabla^2_U xi`` to curvature, torsion and commutator terms; the ordinary
and scaled (non-affine) congruence deviation equations; and the
equation-of-motion form whose dominant term is a transported difference of
the forces driving the observed particles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .curves import Curve, parametric_curve
from .displacement import (
    _simpson_nodes_weights,
    default_panels,
    displacement_vector,
)
from .errors import DegenerateScalingError, GeometryError, ScenarioConsistencyError
from .geometry import (
    ConnectionManifold,
    TangentVector,
    VectorField,
    commutator,
    covariant_derivative,
    curvature_tensor,
    torsion_derivative,
    torsion_tensor,
)
from .multipoint import (
    MultiPointTensor,
    multipoint_covariant_derivative,
    multipoint_second_derivative,
)
from .transport import TransportLaw, transport_matrix


def memoize_scalar(fn, digits: int = 12):
    """Cache a float -> object function on rounded keys; safe for stencil reuse."""
    cache = {}

    def wrapped(x):
        key = round(float(x), digits)
        if key not in cache:
            cache[key] = fn(x)
        return cache[key]

    return wrapped


@dataclass(frozen=True, eq=False)
class DeviationScenario:
    """Paths, synchronizations and connector families of one deviation setup.

    ``r_prime``/``r_dprime`` give the connector parameters at which
    ``gamma_s`` meets ``x1`` and ``x2``; ``t_prime``/``t_dprime`` the
    parameters at which ``eta_s`` meets ``x1`` and ``x``.  ``s_path``, when
    present, returns the path ``s -> gamma_s(r)`` through a fixed connector
    parameter with exact tangents (families built by integration provide
    it; otherwise finite differences across connectors are used).
    """

    manifold: ConnectionManifold
    x1: Curve
    x2: Curve
    x: Curve
    tau1: Callable[[float], float]
    tau2: Callable[[float], float]
    connector_gamma: Callable[[float], Curve]
    connector_eta: Callable[[float], Curve]
    r_prime: Callable[[float], float]
    r_dprime: Callable[[float], float]
    t_prime: Callable[[float], float]
    t_dprime: Callable[[float], float]
    s_interval: tuple
    s_path: Optional[Callable[[float], Curve]] = None


def validate_scenario(scn: DeviationScenario, s: float, tol: float = 1e-8):
    """Check the four endpoint identities at ``s``; raise naming the first failure."""
    gam = scn.connector_gamma(s)
    eta = scn.connector_eta(s)
    p1 = np.asarray(scn.x1.point_at(scn.tau1(s)), dtype=float)
    p2 = np.asarray(scn.x2.point_at(scn.tau2(s)), dtype=float)
    px = np.asarray(scn.x.point_at(s), dtype=float)
    checks = [
        ("gamma_s(r') = x1(tau1(s))", gam.point_at(scn.r_prime(s)), p1),
        ("gamma_s(r'') = x2(tau2(s))", gam.point_at(scn.r_dprime(s)), p2),
        ("eta_s(t') = x1(tau1(s))", eta.point_at(scn.t_prime(s)), p1),
        ("eta_s(t'') = x(s)", eta.point_at(scn.t_dprime(s)), px),
    ]
    for label, got, want in checks:
        err = float(np.max(np.abs(np.asarray(got, dtype=float) - want)))
        if err > tol:
            raise ScenarioConsistencyError(
                f"scenario identity {label!r} fails at s={s:g} (defect {err:.3e})"
            )


def deviation_vector(
    law: TransportLaw,
    scn: DeviationScenario,
    s: float,
    quad_panels: int | None = None,
    check: bool = True,
) -> TangentVector:
    """Deviation of ``x2`` with respect to ``x1`` as seen from ``x(s)``.

    Displacement along ``gamma_s`` between the two meeting parameters,
    transported to the observer along ``eta_s``.
    """
    if check:
        validate_scenario(scn, s)
    gam = scn.connector_gamma(s)
    disp = displacement_vector(law, gam, scn.r_prime(s), scn.r_dprime(s), quad_panels)
    eta = scn.connector_eta(s)
    H = transport_matrix(law, eta, scn.t_prime(s), scn.t_dprime(s)).H
    return TangentVector(scn.x.point_at(s), H @ disp.vector.components)


def deviation_vector_matrix_form(
    law: TransportLaw,
    scn: DeviationScenario,
    s: float,
    quad_panels: int | None = None,
    check: bool = True,
) -> TangentVector:
    """Same vector through explicit two-point transport factors.

    Builds the observer-side transport and the per-node pullback matrices
    as anchored tensors, integrates the pulled-back tangent with Simpson
    weights and contracts; exists to cross-check the factored computation.
    """
    if check:
        validate_scenario(scn, s)
    gam = scn.connector_gamma(s)
    r0, r1 = scn.r_prime(s), scn.r_dprime(s)
    eta = scn.connector_eta(s)
    t0, t1 = scn.t_prime(s), scn.t_dprime(s)

    observer_side = MultiPointTensor(
        (1, 1),
        ((scn.x, s), (scn.x1, scn.tau1(s))),
        transport_matrix(law, eta, t0, t1).H,
    )
    if r1 == r0:
        integral = np.zeros(scn.manifold.dim)
    else:
        if quad_panels is None:
            quad_panels = default_panels(r1 - r0, law.integrator_step)
        nodes, weights = _simpson_nodes_weights(r0, r1, quad_panels)
        integral = np.zeros(scn.manifold.dim)
        for u, w in zip(nodes, weights):
            pullback = MultiPointTensor(
                (1, 1),
                ((gam, r0), (gam, u)),
                transport_matrix(law, gam, u, r0).H,
            )
            integral = integral + w * (pullback.components @ gam.tangent_at(u))
    return TangentVector(scn.x.point_at(s), observer_side.components @ integral)


def infinitesimal_deviation(scn: DeviationScenario, s: float) -> TangentVector:
    """First-order deviation ``(r'' - r') gamma_s'(r')`` based at ``gamma_s(r')``."""
    gam = scn.connector_gamma(s)
    r0, r1 = scn.r_prime(s), scn.r_dprime(s)
    return TangentVector(gam.point_at(r0), (r1 - r0) * gam.tangent_at(r0))


# ---------------------------------------------------------------------------
# covariant rates along a path


def covariant_rate_along(m, point_fn, tangent_fn, vec_fn, t, h):
    """First covariant derivative of ``vec_fn(t)`` along the path, O(h^2)."""
    v = np.asarray(vec_fn(t), dtype=float)
    dv = (np.asarray(vec_fn(t + h), dtype=float) - np.asarray(vec_fn(t - h), dtype=float)) / (
        2.0 * h
    )
    g = m.gamma_at(point_fn(t))
    a = np.einsum("ikj,k->ij", g, np.asarray(tangent_fn(t), dtype=float))
    return dv + a @ v


def second_covariant_rate_along(m, point_fn, tangent_fn, vec_fn, t, h):
    """Second covariant derivative of ``vec_fn(t)`` along the path, O(h^2)."""
    v0 = np.asarray(vec_fn(t), dtype=float)
    vp = np.asarray(vec_fn(t + h), dtype=float)
    vm = np.asarray(vec_fn(t - h), dtype=float)
    second = (vp - 2.0 * v0 + vm) / (h * h)
    first = (vp - vm) / (2.0 * h)

    def a_at(tt):
        g = m.gamma_at(point_fn(tt))
        return np.einsum("ikj,k->ij", g, np.asarray(tangent_fn(tt), dtype=float))

    a0 = a_at(t)
    da = (a_at(t + h) - a_at(t - h)) / (2.0 * h)
    return second + da @ v0 + 2.0 * (a0 @ first) + a0 @ (a0 @ v0)


# ---------------------------------------------------------------------------
# pointwise field identity


def basic_equation_residual(
    m: ConnectionManifold,
    U: VectorField,
    xi: VectorField,
    x,
    h_fd: float = 1e-4,
) -> float:
    """Defect of the second-derivative field identity at ``x``.

    Compares ``nabla_U nabla_U xi`` against the curvature term plus
    ``nabla_xi(nabla_U U)``, the torsion transport term, and the two
    commutator terms, everything finite-differenced with step ``h_fd``;
    the defect shrinks as O(h_fd^2) for smooth fields.
    """
    x = m.require_inside(x)

    def derived_field(X, Y):
        return VectorField(lambda p: covariant_derivative(m, X, Y, p, fd_step=h_fd))

    lhs = covariant_derivative(m, U, derived_field(U, xi), x, fd_step=h_fd)

    u_c = np.asarray(U.value(x), dtype=float)
    xi_c = np.asarray(xi.value(x), dtype=float)
    curv = np.einsum("ijkl,j,k,l->i", curvature_tensor(m, x), u_c, u_c, xi_c)
    accel = covariant_derivative(m, xi, derived_field(U, U), x, fd_step=h_fd)

    torsion_field = VectorField(
        lambda p: np.einsum(
            "ijk,j,k->i", torsion_tensor(m, p), np.asarray(U.value(p)), np.asarray(xi.value(p))
        )
    )
    torsion_term = covariant_derivative(m, U, torsion_field, x, fd_step=h_fd)

    bracket_field = VectorField(lambda p: commutator(m, U, xi, p, fd_step=h_fd))
    bracket_term = covariant_derivative(m, U, bracket_field, x, fd_step=h_fd)
    bracket_at_x = bracket_field.value(x)
    along_bracket = covariant_derivative(
        m, VectorField(lambda p: bracket_at_x), U, x, fd_step=h_fd
    )

    rhs = curv + accel + torsion_term + bracket_term + along_bracket
    return float(np.max(np.abs(lhs - rhs)))


# ---------------------------------------------------------------------------
# geodesic deviation along a base geodesic


@dataclass(frozen=True, eq=False)
class JacobiState:
    """Separation field sample: parameter, components and covariant rate."""

    u: float
    h: np.ndarray
    dh: np.ndarray


def integrate_geodesic_deviation(
    m: ConnectionManifold,
    base_geodesic: Curve,
    h0,
    dh0,
    interval,
    step: float = 1e-3,
    dgamma_step: float = 1e-5,
):
    """Integrate the separation equation along an affine base geodesic.

    Solves, as a first-order system in ``(h, Dh/du)``, the equation whose
    right-hand side is the curvature term plus (on torsionful charts) the
    torsion-derivative and torsion-rate terms.  Returns the node states.
    """
    n = m.dim
    h0 = np.asarray(h0, dtype=float)
    dh0 = np.asarray(dh0, dtype=float)

    def rhs(u, y):
        x = base_geodesic.point_at(u)
        uvec = base_geodesic.tangent_at(u)
        g = m.gamma_at(x)
        a = np.einsum("ikj,k->ij", g, uvec)
        hv = y[:n]
        w = y[n:]
        riem = curvature_tensor(m, x, dgamma_step)
        force = np.einsum("ijkl,j,k,l->i", riem, uvec, uvec, hv)
        if m.has_torsion:
            t = torsion_tensor(m, x)
            dt = torsion_derivative(m, x, dgamma_step)
            force = force + np.einsum("ijkl,l,j,k->i", dt, uvec, uvec, hv)
            force = force + np.einsum("ijk,j,k->i", t, uvec, w)
        return np.concatenate([w - a @ hv, force - a @ w])

    from .curves import _rk4_dense  # local import keeps the integrator core private

    ts, ys, _ = _rk4_dense(rhs, np.concatenate([h0, dh0]), interval[0], interval[1], step)
    return [JacobiState(float(t), ys[k, :n].copy(), ys[k, n:].copy()) for k, t in enumerate(ts)]


# ---------------------------------------------------------------------------
# scaled congruence deviation


def lambda_factor(
    g, u: float, v1: float, v2: float, quad_panels: int = 128, du: float = 1e-4
):
    """Scaling factor of a non-affinely parameterized connector family.

    ``g`` is a callable ``(u, v) -> float``.  Returns ``(lam, lam', lam'')``
    where ``lam`` integrates, over the connector parameter, the exponential
    of minus the accumulated scaling, and the derivatives are central
    differences in ``u`` with step ``du``.
    """
    if v2 == v1:
        return 0.0, 0.0, 0.0

    def lam_at(uu):
        nodes, weights = _simpson_nodes_weights(v1, v2, quad_panels)
        total = 0.0
        for v, w in zip(nodes, weights):
            if v == v1:
                inner = 0.0
            else:
                inner_nodes, inner_weights = _simpson_nodes_weights(
                    v1, v, max(2, quad_panels // 2)
                )
                inner = float(
                    sum(iw * g(uu, iv) for iv, iw in zip(inner_nodes, inner_weights))
                )
            total += w * math.exp(-inner)
        return total

    lam0 = lam_at(u)
    lam_plus = lam_at(u + du)
    lam_minus = lam_at(u - du)
    lam_p = (lam_plus - lam_minus) / (2.0 * du)
    lam_pp = (lam_plus - 2.0 * lam0 + lam_minus) / (du * du)
    return lam0, lam_p, lam_pp


def _zero_g(u, v):
    return 0.0


def geodesic_deviation_rhs_general(
    m: ConnectionManifold,
    congruence,
    u: float,
    v1: float,
    f=None,
    g=None,
    v2: float | None = None,
    h_fd: float = 1e-4,
    lambda_panels: int = 128,
    dgamma_step: float = 1e-5,
):
    """Right-hand side of the scaled deviation equation on a congruence.

    With ``f`` given, the u-lines are assumed to satisfy the scaled geodesic
    equation with factor ``f(u)`` and the fully expanded form is used; with
    ``f`` omitted only the v-line structure is used and the mixed-derivative
    term is evaluated directly.  ``g`` feeds the scaling factor; the result
    matches the finite-differenced second covariant rate of the scaled
    separation ``lam(u) V(u, v1)`` to O(h_fd^2).
    """
    if v2 is None:
        v2 = congruence.v_interval[1]
    g_fn = g if g is not None else _zero_g
    lam, lam_p, lam_pp = lambda_factor(g_fn, u, v1, v2, lambda_panels, du=h_fd)
    if lam == 0.0:
        raise DegenerateScalingError("scaling factor vanished; deviation direction lost")

    point = np.asarray(congruence.y(u, v1), dtype=float)
    uvec = np.asarray(congruence.U(u, v1), dtype=float)
    vvec = np.asarray(congruence.V(u, v1), dtype=float)
    g_arr = m.gamma_at(point)
    h_vec = lam * vvec

    def lam_eval(uu):
        if uu == u:
            return lam
        return lambda_factor(g_fn, uu, v1, v2, lambda_panels, du=h_fd)[0]

    def h_fun(uu):
        return lam_eval(uu) * np.asarray(congruence.V(uu, v1), dtype=float)

    dh_du = covariant_rate_along(
        m, lambda uu: congruence.y(uu, v1), lambda uu: congruence.U(uu, v1), h_fun, u, h_fd
    )

    riem = curvature_tensor(m, point, dgamma_step)
    out = np.einsum("ijkl,j,k,l->i", riem, uvec, uvec, h_vec)

    t_arr = torsion_tensor(m, point)
    if f is not None:
        if m.has_torsion:
            dt = torsion_derivative(m, point, dgamma_step)
            out = out + f(u) * np.einsum("ijk,j,k->i", t_arr, uvec, h_vec)
            out = out + np.einsum("ijkl,l,j,k->i", dt, uvec, uvec, h_vec)
            out = out + np.einsum("ijk,j,k->i", t_arr, uvec, dh_du)
        # scaled source from the u-line scaling: lam * f(u) * (DU/dv)
        du_dv = (
            np.asarray(congruence.U(u, v1 + h_fd), dtype=float)
            - np.asarray(congruence.U(u, v1 - h_fd), dtype=float)
        ) / (2.0 * h_fd) + np.einsum("ikj,k,j->i", g_arr, vvec, uvec)
        out = out + lam * f(u) * du_dv
    else:
        if m.has_torsion:

            def torsion_rate(uu):
                pt = congruence.y(uu, v1)
                return np.einsum(
                    "ijk,j,k->i",
                    torsion_tensor(m, pt),
                    np.asarray(congruence.U(uu, v1), dtype=float),
                    h_fun(uu),
                )

            out = out + covariant_rate_along(
                m,
                lambda uu: congruence.y(uu, v1),
                lambda uu: congruence.U(uu, v1),
                torsion_rate,
                u,
                h_fd,
            )

        # lam * covariant v-rate of the u-line acceleration DU/du
        def u_acceleration(vv):
            du_u = (
                np.asarray(congruence.U(u + h_fd, vv), dtype=float)
                - np.asarray(congruence.U(u - h_fd, vv), dtype=float)
            ) / (2.0 * h_fd)
            uv = np.asarray(congruence.U(u, vv), dtype=float)
            return du_u + np.einsum("ijk,j,k->i", m.gamma_at(congruence.y(u, vv)), uv, uv)

        accel_rate = (u_acceleration(v1 + h_fd) - u_acceleration(v1 - h_fd)) / (
            2.0 * h_fd
        ) + np.einsum("ikj,k,j->i", g_arr, vvec, u_acceleration(v1))
        out = out + lam * accel_rate

    ratio = lam_p / lam
    if ratio != 0.0 or lam_pp != 0.0:
        bracket = 2.0 * dh_du - 2.0 * ratio * h_vec
        bracket = bracket + np.einsum("ijk,j,k->i", t_arr, h_vec, uvec)
        out = out + ratio * bracket + (lam_pp / lam) * h_vec
    return out


def deviation_identity_residual(
    m: ConnectionManifold,
    congruence,
    u: float,
    v1: float,
    f=None,
    g=None,
    v2: float | None = None,
    h_fd: float = 1e-4,
    lambda_panels: int = 128,
) -> float:
    """Defect between the finite-differenced left side and the evaluated right side."""
    if v2 is None:
        v2 = congruence.v_interval[1]
    g_fn = g if g is not None else _zero_g
    rhs = geodesic_deviation_rhs_general(
        m, congruence, u, v1, f=f, g=g, v2=v2, h_fd=h_fd, lambda_panels=lambda_panels
    )

    def h_fun(uu):
        lam = lambda_factor(g_fn, uu, v1, v2, lambda_panels, du=h_fd)[0]
        return lam * np.asarray(congruence.V(uu, v1), dtype=float)

    lhs = second_covariant_rate_along(
        m,
        lambda uu: congruence.y(uu, v1),
        lambda uu: congruence.U(uu, v1),
        h_fun,
        u,
        h_fd,
    )
    return float(np.max(np.abs(lhs - rhs)))


# ---------------------------------------------------------------------------
# equation-of-motion form


def _require_fixed_endpoints(scn: DeviationScenario, s: float, h_fd: float):
    for label, fn in (("r'", scn.r_prime), ("r''", scn.r_dprime)):
        if abs(fn(s + h_fd) - fn(s - h_fd)) > 1e-12:
            raise GeometryError(
                f"equation-of-motion form needs {label} independent of s"
            )


def _s_path(scn: DeviationScenario, r: float, h_fd: float) -> Curve:
    """Path traced by a fixed connector parameter as s varies."""
    if scn.s_path is not None:
        return scn.s_path(r)
    return parametric_curve(
        lambda sp: scn.connector_gamma(sp).point_at(r),
        scn.s_interval,
        fd_step=h_fd,
        name=f"s-path@{r:g}",
    )


def _pullback_sweep(law, curve, nodes, anchor):
    """All pullback matrices to the anchor parameter along one curve, one pass.

    Returns ``table[k] = H(anchor, nodes[k])`` grown incrementally,
    ``H(anchor, u_k) = H(anchor, u_{k-1}) H(u_{k-1}, u_k)``, so the whole
    sweep costs one transport solve over the node range.
    """
    table = []
    H = transport_matrix(law, curve, anchor, anchor).H
    prev = anchor
    for u in nodes:
        if u != prev:
            H = H @ transport_matrix(law, curve, u, prev).H
        table.append(H)
        prev = u
    return table


def equation_of_motion_rhs(
    law: TransportLaw,
    scn: DeviationScenario,
    s: float,
    force_family,
    h_fd: float = 1e-4,
    quad_panels: int = 32,
    dgamma_step: float = 1e-5,
):
    """Assembled right side of the deviation equation in equation-of-motion form.

    ``force_family(s, r, point)`` is the force per unit mass driving the
    particle at connector parameter ``r``.  The observer-side transport and
    the per-node pullbacks are differentiated twice along ``s`` as anchored
    two-point tensors; the remaining integrand collects the curvature,
    torsion and force-rate terms of the second ``s``-rate of the connector
    tangent.  Compare against the finite-differenced second covariant rate
    of the deviation vector along the observer; the defect is O(h_fd^2).
    """
    m = scn.manifold
    _require_fixed_endpoints(scn, s, h_fd)
    r0, r1 = scn.r_prime(s), scn.r_dprime(s)

    eta_of = memoize_scalar(scn.connector_eta)
    gam_of = memoize_scalar(scn.connector_gamma)

    def observer_transport(sp):
        mat = transport_matrix(law, eta_of(sp), scn.t_prime(sp), scn.t_dprime(sp)).H
        return MultiPointTensor((1, 1), ((scn.x, sp), (scn.x1, scn.tau1(sp))), mat)

    h_field = memoize_scalar(observer_transport)
    H0 = h_field(s).components
    dH = multipoint_covariant_derivative(m, h_field, s, h_fd).components
    d2H = multipoint_second_derivative(m, h_field, s, h_fd).components
    h_dev = deviation_vector(law, scn, s, quad_panels, check=False).components
    term_head = d2H @ np.linalg.solve(H0, h_dev)

    gam_s = gam_of(s)
    nodes, weights = _simpson_nodes_weights(r0, r1, quad_panels)

    # one incremental pullback sweep per stencil offset: the transports for
    # all quadrature nodes share one solve, and stage evaluations reuse the
    # same curve parameters across offsets
    offsets = (-2, -1, 0, 1, 2)
    stencil = {k: s + k * h_fd for k in offsets}
    lam_tables = {
        k: _pullback_sweep(law, gam_of(sp), nodes, scn.r_prime(sp))
        for k, sp in stencil.items()
    }
    tang_tables = {
        k: [np.asarray(gam_of(sp).tangent_at(u), dtype=float) for u in nodes]
        for k, sp in stencil.items()
    }

    integral_mid = np.zeros(m.dim)
    integral_tail = np.zeros(m.dim)
    for idx, (u, w) in enumerate(zip(nodes, weights)):
        path_u = _s_path(scn, u, h_fd)

        def pullback(sp, idx=idx, path_u=path_u):
            k = round((sp - s) / h_fd)
            return MultiPointTensor(
                (1, 1), ((scn.x1, scn.tau1(sp)), (path_u, sp)), lam_tables[k][idx]
            )

        lam0 = lam_tables[0][idx]
        dlam = multipoint_covariant_derivative(m, pullback, s, h_fd).components
        d2lam = multipoint_second_derivative(m, pullback, s, h_fd).components

        def connector_tangent(sp, idx=idx, path_u=path_u):
            k = round((sp - s) / h_fd)
            return MultiPointTensor((1, 0), ((path_u, sp),), tang_tables[k][idx])

        tang0 = tang_tables[0][idx]
        dtang = multipoint_covariant_derivative(m, connector_tangent, s, h_fd).components

        point = gam_s.point_at(u)
        svel = path_u.tangent_at(s)
        riem = curvature_tensor(m, point, dgamma_step)
        core = np.einsum("ijkl,j,k,l->i", riem, svel, svel, tang0)

        force_here = np.asarray(force_family(s, u, point), dtype=float)

        def force_along(uu):
            return np.asarray(force_family(s, uu, gam_s.point_at(uu)), dtype=float)

        core = core + covariant_rate_along(
            m, gam_s.point_at, gam_s.tangent_at, force_along, u, h_fd
        )
        if m.has_torsion:
            t_arr = torsion_tensor(m, point)
            dt = torsion_derivative(m, point, dgamma_step)
            core = core + np.einsum("ijkl,l,j,k->i", dt, svel, svel, tang0)
            core = core + np.einsum("ijk,j,k->i", t_arr, svel, dtang)
            core = core + np.einsum("ijk,j,k->i", t_arr, force_here, tang0)

        integral_mid = integral_mid + w * (dlam @ tang0 + lam0 @ dtang)
        integral_tail = integral_tail + w * (
            d2lam @ tang0 + 2.0 * (dlam @ dtang) + lam0 @ core
        )

    return term_head + 2.0 * (dH @ integral_mid) + H0 @ integral_tail


def force_difference_term(
    law: TransportLaw,
    scn: DeviationScenario,
    s: float,
    force_family,
    quad_panels: int = 32,
    h_fd: float = 1e-4,
):
    """Transported force difference plus its pullback correction integral.

    The leading part carries the force at ``r''`` back along the connector,
    subtracts the force at ``r'`` and moves the difference to the observer;
    the correction integral accounts for torsion coupling and the parameter
    rate of the pullback.  Equals the direct quadrature of the pulled-back
    covariant force rate (plus torsion term) up to quadrature tolerance.
    """
    m = scn.manifold
    gam = scn.connector_gamma(s)
    r0, r1 = scn.r_prime(s), scn.r_dprime(s)
    eta = scn.connector_eta(s)
    t0, t1 = scn.t_prime(s), scn.t_dprime(s)

    f_far = np.asarray(force_family(s, r1, gam.point_at(r1)), dtype=float)
    f_near = np.asarray(force_family(s, r0, gam.point_at(r0)), dtype=float)
    pulled = transport_matrix(law, gam, r1, r0).H @ f_far
    h_eta = transport_matrix(law, eta, t0, t1).H
    leading = h_eta @ (pulled - f_near)

    nodes, weights = _simpson_nodes_weights(r0, r1, quad_panels)
    pullbacks = _pullback_sweep(law, gam, nodes, r0)
    correction = np.zeros(m.dim)
    for idx, (u, w) in enumerate(zip(nodes, weights)):
        lam0 = pullbacks[idx]
        # parameter rate of the pullback: central difference of the running
        # transport minus the moving-anchor correction
        lam_plus = lam0 @ transport_matrix(law, gam, u + h_fd, u).H
        lam_minus = lam0 @ transport_matrix(law, gam, u - h_fd, u).H
        point = gam.point_at(u)
        tangent = np.asarray(gam.tangent_at(u), dtype=float)
        a_mat = np.einsum("ikj,k->ij", m.gamma_at(point), tangent)
        dlam_du = (lam_plus - lam_minus) / (2.0 * h_fd) - lam0 @ a_mat
        force_here = np.asarray(force_family(s, u, point), dtype=float)
        term = -dlam_du @ force_here
        if m.has_torsion:
            t_arr = torsion_tensor(m, point)
            term = term + lam0 @ np.einsum("ijk,j,k->i", t_arr, force_here, tangent)
        correction = correction + w * term
    return leading + h_eta @ correction


def infinitesimal_deviation_equation_residual(
    m: ConnectionManifold,
    scn: DeviationScenario,
    s: float,
    steps=None,
    dgamma_step: float = 1e-5,
) -> float:
    """Defect of the near-particle relative-motion equation at ``s``.

    Uses the first-order deviation of the scenario; the forces on the
    connector family are recovered from the family itself by differencing
    in ``s``, so no force input is needed.  The defect carries the
    equation's own first-order error in the observer-connector length and
    second-order error in the particle separation.
    """
    steps = dict(steps or {})
    hs = float(steps.get("s", 1e-3))
    hr = float(steps.get("r", 1e-4))
    gam_of = memoize_scalar(scn.connector_gamma)
    r0 = scn.r_prime(s)
    r1 = scn.r_dprime(s)
    sep = r1 - r0

    def anchor_point(sp):
        return np.asarray(gam_of(sp).point_at(scn.r_prime(sp)), dtype=float)

    base_path = _s_path(scn, r0, hs)

    def zeta(sp):
        g = gam_of(sp)
        return (scn.r_dprime(sp) - scn.r_prime(sp)) * np.asarray(
            g.tangent_at(scn.r_prime(sp)), dtype=float
        )

    lhs = second_covariant_rate_along(
        m, anchor_point, base_path.tangent_at, zeta, s, hs
    )

    def s_velocity(r):
        return _s_path(scn, r, hs).tangent_at(s)

    def family_force(r):
        path = _s_path(scn, r, hs)
        vel = path.tangent_at(s)
        dvel = (
            np.asarray(path.tangent_at(s + hs), dtype=float)
            - np.asarray(path.tangent_at(s - hs), dtype=float)
        ) / (2.0 * hs)
        g = m.gamma_at(path.point_at(s))
        return dvel + np.einsum("ijk,j,k->i", g, vel, vel)

    point = anchor_point(s)
    gam = gam_of(s)
    svel = s_velocity(r0)
    zeta0 = zeta(s)
    dzeta = covariant_rate_along(m, anchor_point, base_path.tangent_at, zeta, s, hs)

    force0 = family_force(r0)
    dforce_dr = (family_force(r0 + hr) - family_force(r0 - hr)) / (2.0 * hr) + np.einsum(
        "ikj,k,j->i", m.gamma_at(point), gam.tangent_at(r0), force0
    )

    riem = curvature_tensor(m, point, dgamma_step)
    rhs = np.einsum("ijkl,j,k,l->i", riem, svel, svel, zeta0)
    rhs = rhs + dforce_dr * sep
    if m.has_torsion:
        t_arr = torsion_tensor(m, point)
        dt = torsion_derivative(m, point, dgamma_step)
        rhs = rhs + np.einsum("ijk,j,k->i", t_arr, force0, zeta0)
        rhs = rhs + np.einsum("ijkl,l,j,k->i", dt, svel, svel, zeta0)
        rhs = rhs + np.einsum("ijk,j,k->i", t_arr, svel, dzeta)
    return float(np.max(np.abs(lhs - rhs)))
