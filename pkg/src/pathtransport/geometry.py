"""Charts carrying a connection, and pointwise tensor calculus.

Index conventions used throughout the package, for a chart of dimension n:

* connection coefficients are stored as an ``(n, n, n)`` array ``G`` with
  the differentiation direction on axis 1 and the transported slot on
  axis 2, so that ``(nabla_X Y)^i = X^j d_j Y^i + G[i, j, k] X^j Y^k``;
* torsion components ``T[i, j, k]`` are those of ``T(e_j, e_k)`` built from
  the commutator definition, giving ``T = G - swapaxes(G, 1, 2)``;
* curvature components ``R[i, j, k, l]`` are those of ``R(e_k, e_l) e_j``
  evaluated on coordinate fields, antisymmetric in ``(k, l)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import expressions as ex
from .errors import DomainError, StencilError


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Vector components attached to a chart point."""

    base_point: np.ndarray
    components: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "base_point", np.asarray(self.base_point, dtype=float))
        object.__setattr__(self, "components", np.asarray(self.components, dtype=float))
        if self.base_point.shape != self.components.shape:
            raise ValueError("base point and components must have equal length")


@dataclass(frozen=True, eq=False)
class VectorField:
    """Chart-coordinate vector field.

    ``value`` maps a point to length-n components.  ``jacobian``, when
    supplied, maps a point to the matrix ``d value^i / d x^j`` and replaces
    finite differencing of the field.
    """

    value: Callable[[np.ndarray], np.ndarray]
    differentiability_hint: int = 2
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None


@dataclass(frozen=True, eq=False)
class ConnectionManifold:
    """A single chart with connection coefficients.

    ``gamma`` returns the raw ``(n, n, n)`` coefficient array at a point;
    ``dgamma``, when present, returns analytic derivatives with the
    differentiation axis last, shape ``(n, n, n, n)``.  ``metric`` is an
    optional chart metric used only by diagnostics.  ``has_torsion`` lets
    hot loops skip identically-zero torsion terms.
    """

    dim: int
    gamma: Callable[[np.ndarray], np.ndarray]
    domain: Callable[[np.ndarray], bool]
    name: str = "manifold"
    dgamma: Optional[Callable[[np.ndarray], np.ndarray]] = None
    metric: Optional[Callable[[np.ndarray], np.ndarray]] = None
    has_torsion: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be at least 1")

    def contains(self, x) -> bool:
        return bool(self.domain(np.asarray(x, dtype=float)))

    def require_inside(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DomainError(
                f"{self.name}: point has shape {x.shape}, expected ({self.dim},)"
            )
        if not self.domain(x):
            raise DomainError(f"{self.name}: point {x.tolist()} outside chart domain")
        return x

    def gamma_at(self, x) -> np.ndarray:
        x = self.require_inside(x)
        g = np.asarray(self.gamma(x), dtype=float)
        if g.shape != (self.dim,) * 3:
            raise ValueError(f"{self.name}: gamma returned shape {g.shape}")
        if not np.all(np.isfinite(g)):
            raise DomainError(f"{self.name}: non-finite coefficients at {x.tolist()}")
        return g

    def dgamma_at(self, x, step: float = 1e-5) -> np.ndarray:
        """Derivatives of the coefficients, analytic when available.

        Finite-difference fallback uses a central stencil of width ``step``
        per coordinate and demands the whole stencil stay inside the chart.
        """
        x = self.require_inside(x)
        if self.dgamma is not None:
            return np.asarray(self.dgamma(x), dtype=float)
        n = self.dim
        out = np.empty((n, n, n, n))
        for l in range(n):
            e = np.zeros(n)
            e[l] = step
            for probe in (x + e, x - e):
                if not self.domain(probe):
                    raise StencilError(
                        f"{self.name}: derivative stencil leaves domain near {x.tolist()}"
                    )
            out[:, :, :, l] = (self.gamma(x + e) - self.gamma(x - e)) / (2.0 * step)
        return out


def torsion_tensor(m: ConnectionManifold, x) -> np.ndarray:
    """Torsion components ``T[i, j, k]``; antisymmetric in the lower pair."""
    g = m.gamma_at(x)
    return g - np.swapaxes(g, 1, 2)


def curvature_tensor(m: ConnectionManifold, x, dgamma_step: float = 1e-5) -> np.ndarray:
    """Curvature components ``R[i, j, k, l]``; antisymmetric in ``(k, l)``."""
    g = m.gamma_at(x)
    dg = m.dgamma_at(x, step=dgamma_step)
    return (
        np.einsum("iljk->ijkl", dg)
        - np.einsum("ikjl->ijkl", dg)
        + np.einsum("ikm,mlj->ijkl", g, g)
        - np.einsum("ilm,mkj->ijkl", g, g)
    )


def torsion_derivative(m: ConnectionManifold, x, dgamma_step: float = 1e-5) -> np.ndarray:
    """Covariant derivative of the torsion tensor, ``out[i, j, k, l] = (nabla_l T)^i_jk``."""
    g = m.gamma_at(x)
    dg = m.dgamma_at(x, step=dgamma_step)
    t = g - np.swapaxes(g, 1, 2)
    dt = dg - np.transpose(dg, (0, 2, 1, 3))
    return (
        dt
        + np.einsum("ilp,pjk->ijkl", g, t)
        - np.einsum("plj,ipk->ijkl", g, t)
        - np.einsum("plk,ijp->ijkl", g, t)
    )


def covariant_derivative(
    m: ConnectionManifold,
    X: VectorField,
    Y: VectorField,
    x,
    fd_step: float = 1e-5,
) -> np.ndarray:
    """Components of ``(nabla_X Y)`` at ``x``.

    The directional derivative of ``Y`` uses the analytic jacobian when the
    field carries one, otherwise a central difference along ``X(x)``.
    """
    x = m.require_inside(x)
    xc = np.asarray(X.value(x), dtype=float)
    yc = np.asarray(Y.value(x), dtype=float)
    if Y.jacobian is not None:
        directional = np.asarray(Y.jacobian(x), dtype=float) @ xc
    else:
        nrm = np.max(np.abs(xc))
        if nrm == 0.0:
            directional = np.zeros_like(yc)
        else:
            h = fd_step / nrm
            for probe in (x + h * xc, x - h * xc):
                if not m.domain(probe):
                    raise StencilError(
                        f"{m.name}: directional stencil leaves domain near {x.tolist()}"
                    )
            directional = (
                np.asarray(Y.value(x + h * xc), dtype=float)
                - np.asarray(Y.value(x - h * xc), dtype=float)
            ) / (2.0 * h)
    g = m.gamma_at(x)
    return directional + np.einsum("ijk,j,k->i", g, xc, yc)


def commutator(
    m: ConnectionManifold, X: VectorField, Y: VectorField, x, fd_step: float = 1e-5
) -> np.ndarray:
    """Components of the Lie bracket ``[X, Y]`` at ``x`` (finite differences)."""
    x = m.require_inside(x)

    def directional(F, along):
        if F.jacobian is not None:
            return np.asarray(F.jacobian(x), dtype=float) @ along
        nrm = np.max(np.abs(along))
        if nrm == 0.0:
            return np.zeros(m.dim)
        h = fd_step / nrm
        return (
            np.asarray(F.value(x + h * along), dtype=float)
            - np.asarray(F.value(x - h * along), dtype=float)
        ) / (2.0 * h)

    xc = np.asarray(X.value(x), dtype=float)
    yc = np.asarray(Y.value(x), dtype=float)
    return directional(Y, xc) - directional(X, yc)


class ExpressionConnection:
    """Connection coefficients defined by an n x n x n table of expressions.

    Entries are strings over ``x1 .. xn``; derivatives are produced
    symbolically, so manifolds built from expressions carry analytic
    ``dgamma``.
    """

    def __init__(self, entries):
        n = len(entries)
        if n < 1 or any(
            len(row) != n or any(len(cell) != n for cell in row) for row in entries
        ):
            raise ValueError("entries must form an n x n x n table")
        self.dim = n
        var_names = [f"x{i + 1}" for i in range(n)]
        self.entries = [
            [[str(entries[i][j][k]) for k in range(n)] for j in range(n)]
            for i in range(n)
        ]
        trees = [
            [
                [ex.parse_expression(self.entries[i][j][k], var_names) for k in range(n)]
                for j in range(n)
            ]
            for i in range(n)
        ]
        dtrees = [
            [
                [
                    [ex.differentiate(trees[i][j][k], var) for var in var_names]
                    for k in range(n)
                ]
                for j in range(n)
            ]
            for i in range(n)
        ]
        self._gamma_raw = ex.compile_array(trees, var_names)
        self._dgamma_raw = ex.compile_array(dtrees, var_names)

    def gamma(self, x):
        return np.array(self._gamma_raw(*x), dtype=float)

    def dgamma(self, x):
        return np.array(self._dgamma_raw(*x), dtype=float)

    def probe_torsion(self, sample_points) -> bool:
        """True if any sampled point shows asymmetric lower indices."""
        for p in sample_points:
            try:
                g = self.gamma(np.asarray(p, dtype=float))
            except (ValueError, ArithmeticError):
                return True  # cannot rule torsion out
            if np.max(np.abs(g - np.swapaxes(g, 1, 2))) > 0.0:
                return True
        return False


def manifold_from_expressions(
    entries,
    domain=None,
    name: str = "expression-manifold",
    metric=None,
    sample_points=None,
) -> ConnectionManifold:
    """Build a manifold whose connection is given by expression strings."""
    conn = ExpressionConnection(entries)
    n = conn.dim
    if domain is None:
        domain = lambda x: True  # noqa: E731
    if sample_points is None:
        rng = np.random.default_rng(7)
        sample_points = [0.5 + rng.random(n) for _ in range(5)]
    return ConnectionManifold(
        dim=n,
        gamma=conn.gamma,
        domain=domain,
        name=name,
        dgamma=conn.dgamma,
        metric=metric,
        has_torsion=conn.probe_torsion(sample_points),
    )


def expression_vector_field(dim: int, components) -> VectorField:
    """Vector field from expression strings over ``x1 .. xn`` with analytic jacobian."""
    if len(components) != dim:
        raise ValueError("need one component expression per dimension")
    var_names = [f"x{i + 1}" for i in range(dim)]
    trees = [ex.parse_expression(str(c), var_names) for c in components]
    jac_trees = [[ex.differentiate(t, v) for v in var_names] for t in trees]
    value_fn = ex.compile_array(trees, var_names)
    jac_fn = ex.compile_array(jac_trees, var_names)
    return VectorField(
        value=lambda x: np.array(value_fn(*x), dtype=float),
        differentiability_hint=3,
        jacobian=lambda x: np.array(jac_fn(*x), dtype=float),
    )
