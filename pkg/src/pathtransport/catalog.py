"""Built-in manifold catalog.

Names accepted by :func:`make_manifold`:

* ``euclidean:<n>`` - flat Cartesian chart of dimension n, zero coefficients;
* ``euclidean2_polar`` - the flat plane in polar coordinates ``(r, phi)``;
* ``sphere2:<radius>`` - round 2-sphere in colatitude/longitude ``(theta, phi)``;
* ``hyperbolic2`` - upper half-plane ``(x, y)``, y > 0;
* ``flat_torsion:<c>`` - flat 2d chart with one constant asymmetric
  coefficient ``gamma[0, 1, 0] = c``, giving torsion ``T[0, 0, 1] = -c``.

Chart singularities are excluded by a configurable ``margin``.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError
from .geometry import ConnectionManifold, manifold_from_expressions


def _zeros(n):
    return [[["0" for _ in range(n)] for _ in range(n)] for _ in range(n)]


def _euclidean(n: int, margin: float) -> ConnectionManifold:
    if n < 1:
        raise ConfigError("euclidean dimension must be >= 1", key="manifold")
    m = manifold_from_expressions(
        _zeros(n),
        domain=lambda x: True,
        name=f"euclidean:{n}",
        metric=lambda x: np.eye(n),
    )
    return m


def _euclidean2_polar(margin: float) -> ConnectionManifold:
    entries = _zeros(2)
    entries[0][1][1] = "-x1"  # radial from angular-angular
    entries[1][0][1] = "1/x1"
    entries[1][1][0] = "1/x1"
    return manifold_from_expressions(
        entries,
        domain=lambda x: x[0] > margin,
        name="euclidean2_polar",
        metric=lambda x: np.diag([1.0, x[0] ** 2]),
        sample_points=[np.array([1.5, 0.3]), np.array([2.0, 1.0]), np.array([0.7, 2.0])],
    )


def _sphere2(radius: float, margin: float) -> ConnectionManifold:
    if radius <= 0:
        raise ConfigError("sphere radius must be positive", key="manifold")
    entries = _zeros(2)
    entries[0][1][1] = "-sin(x1)*cos(x1)"
    entries[1][0][1] = "cos(x1)/sin(x1)"
    entries[1][1][0] = "cos(x1)/sin(x1)"
    r2 = radius * radius
    return manifold_from_expressions(
        entries,
        domain=lambda x: margin < x[0] < math.pi - margin,
        name=f"sphere2:{radius:g}",
        metric=lambda x: np.diag([r2, r2 * math.sin(x[0]) ** 2]),
        sample_points=[np.array([1.0, 0.3]), np.array([2.0, 1.0]), np.array([1.4, 4.0])],
    )


def _hyperbolic2(margin: float) -> ConnectionManifold:
    entries = _zeros(2)
    entries[0][0][1] = "-1/x2"
    entries[0][1][0] = "-1/x2"
    entries[1][0][0] = "1/x2"
    entries[1][1][1] = "-1/x2"
    return manifold_from_expressions(
        entries,
        domain=lambda x: x[1] > margin,
        name="hyperbolic2",
        metric=lambda x: np.diag([1.0 / x[1] ** 2, 1.0 / x[1] ** 2]),
        sample_points=[np.array([0.0, 1.0]), np.array([1.0, 0.5]), np.array([-1.0, 2.0])],
    )


def _flat_torsion(c: float, margin: float) -> ConnectionManifold:
    entries = _zeros(2)
    entries[0][1][0] = repr(float(c))
    return manifold_from_expressions(
        entries,
        domain=lambda x: True,
        name=f"flat_torsion:{c:g}",
        metric=lambda x: np.eye(2),
    )


_CATALOG = [
    {
        "name": "euclidean:<n>",
        "dim": "n",
        "params": {"n": "dimension, default 3"},
        "description": "flat Cartesian chart, zero coefficients",
    },
    {
        "name": "euclidean2_polar",
        "dim": 2,
        "params": {},
        "description": "flat plane in polar coordinates (r, phi), r > margin",
    },
    {
        "name": "sphere2:<radius>",
        "dim": 2,
        "params": {"radius": "sphere radius, default 1"},
        "description": "round sphere in (theta, phi), poles excluded",
    },
    {
        "name": "hyperbolic2",
        "dim": 2,
        "params": {},
        "description": "upper half-plane (x, y), y > margin",
    },
    {
        "name": "flat_torsion:<c>",
        "dim": 2,
        "params": {"c": "torsion strength, default 0.5"},
        "description": "flat chart with constant torsion T[0,0,1] = -c",
    },
]


def catalog_entries():
    """Machine-readable description of the built-in manifolds."""
    return [dict(entry) for entry in _CATALOG]


def builtin_names():
    return [entry["name"] for entry in _CATALOG]


def make_manifold(name: str, margin: float = 1e-3) -> ConnectionManifold:
    """Resolve a catalog name such as ``sphere2:1`` into a manifold."""
    base, _, param = name.partition(":")
    base = base.strip()
    param = param.strip()
    if base == "euclidean":
        return _euclidean(int(param) if param else 3, margin)
    if base == "euclidean2_polar":
        return _euclidean2_polar(margin)
    if base == "sphere2":
        return _sphere2(float(param) if param else 1.0, margin)
    if base == "hyperbolic2":
        return _hyperbolic2(margin)
    if base == "flat_torsion":
        return _flat_torsion(float(param) if param else 0.5, margin)
    known = ", ".join(builtin_names())
    raise ConfigError(f"unknown manifold {name!r}; catalog: {known}", key="manifold")
