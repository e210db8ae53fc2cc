"""Tensors with slots anchored at different points along different paths.

A multipoint tensor of valence ``(p, q)`` keeps its first ``p`` axes
contravariant and the remaining ``q`` covariant, with one (curve, parameter)
anchor per axis.  Differentiating such a field along a common parameter
adds one connection correction per axis, evaluated at that axis' anchor and
contracted with the anchor's velocity: positively for contravariant slots,
negatively for covariant ones.  The derivative is a derivation of the
anchored tensor algebra: it is linear, Leibniz over tensor products and
commutes with contraction of slots sharing an anchor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .curves import Curve
from .geometry import ConnectionManifold


@dataclass(frozen=True, eq=False)
class MultiPointTensor:
    """Component array with per-axis anchors.

    ``anchors`` holds one ``(curve, parameter)`` pair per tensor axis, in
    axis order: contravariant axes first.
    """

    valence: tuple
    anchors: tuple
    components: np.ndarray

    def __post_init__(self):
        p, q = self.valence
        if p < 0 or q < 0 or p + q == 0:
            raise ValueError("valence must have p + q >= 1")
        if len(self.anchors) != p + q:
            raise ValueError("need one anchor per tensor slot")
        comp = np.asarray(self.components, dtype=float)
        if comp.ndim != p + q:
            raise ValueError("component rank must equal p + q")
        object.__setattr__(self, "components", comp)

    def anchor_point(self, a: int) -> np.ndarray:
        curve, param = self.anchors[a]
        return np.asarray(curve.point_at(param), dtype=float)


def tensor_product(A: MultiPointTensor, B: MultiPointTensor) -> MultiPointTensor:
    """Outer product; contravariant axes of both factors come first."""
    pa, qa = A.valence
    pb, qb = B.valence
    comp = np.tensordot(A.components, B.components, axes=0)
    # reorder axes: A-contra, B-contra, A-cov, B-cov
    order = (
        list(range(pa))
        + [pa + qa + i for i in range(pb)]
        + [pa + i for i in range(qa)]
        + [pa + qa + pb + i for i in range(qb)]
    )
    comp = np.transpose(comp, order)
    anchors = (
        A.anchors[:pa] + B.anchors[:pb] + A.anchors[pa:] + B.anchors[pb:]
    )
    return MultiPointTensor((pa + pb, qa + qb), anchors, comp)


def contract(A: MultiPointTensor, contra_axis: int, cov_axis: int) -> MultiPointTensor | float:
    """Contract one contravariant slot against one covariant slot.

    Both slots must be anchored at the same point for the contraction to be
    meaningful; anchors are checked by position.  A fully contracted result
    is returned as a plain float.
    """
    p, q = A.valence
    if not (0 <= contra_axis < p) or not (p <= cov_axis < p + q):
        raise ValueError("contract needs one contravariant and one covariant slot")
    pa = A.anchor_point(contra_axis)
    pb = A.anchor_point(cov_axis)
    if np.max(np.abs(pa - pb)) > 1e-8:
        raise ValueError("contracted slots are anchored at different points")
    comp = np.trace(A.components, axis1=contra_axis, axis2=cov_axis)
    anchors = tuple(
        anc for i, anc in enumerate(A.anchors) if i not in (contra_axis, cov_axis)
    )
    if not anchors:
        return float(comp)
    return MultiPointTensor((p - 1, q - 1), anchors, comp)


def apply_matrix(A: MultiPointTensor, vec: np.ndarray) -> np.ndarray:
    """Contract a valence-(1,1) tensor against vector components at its covariant anchor."""
    if A.valence != (1, 1):
        raise ValueError("expected a two-point matrix tensor")
    return A.components @ np.asarray(vec, dtype=float)


def _corrections(m: ConnectionManifold, tensor: MultiPointTensor, velocities):
    """Connection correction of the component derivative, one term per axis."""
    p, q = tensor.valence
    comp = tensor.components
    out = np.zeros_like(comp)
    for axis in range(p + q):
        g = m.gamma_at(tensor.anchor_point(axis))
        mat = np.einsum("ilk,l->ik", g, velocities[axis])
        if axis < p:
            out += np.moveaxis(np.tensordot(mat, comp, axes=(1, axis)), 0, axis)
        else:
            out -= np.moveaxis(np.tensordot(mat, comp, axes=(0, axis)), 0, axis)
    return out


def multipoint_covariant_derivative(
    m: ConnectionManifold,
    field: Callable[[float], MultiPointTensor],
    s: float,
    h_fd: float = 1e-4,
) -> MultiPointTensor:
    """Covariant derivative of an anchored tensor field along its parameter.

    Components and anchor positions are differenced centrally with step
    ``h_fd``; anchor velocities come from the moving anchor positions.
    Accuracy is second order in ``h_fd``.
    """
    plus = field(s + h_fd)
    minus = field(s - h_fd)
    center = field(s)
    dcomp = (plus.components - minus.components) / (2.0 * h_fd)
    p, q = center.valence
    velocities = [
        (plus.anchor_point(a) - minus.anchor_point(a)) / (2.0 * h_fd) for a in range(p + q)
    ]
    return MultiPointTensor(
        center.valence, center.anchors, dcomp + _corrections(m, center, velocities)
    )


def multipoint_second_derivative(
    m: ConnectionManifold,
    field: Callable[[float], MultiPointTensor],
    s: float,
    h_fd: float = 1e-4,
) -> MultiPointTensor:
    """Second covariant derivative along the parameter, nested central differences."""

    def derived(sp):
        return multipoint_covariant_derivative(m, field, sp, h_fd)

    return multipoint_covariant_derivative(m, derived, s, h_fd)


def vector_field_along(curve: Curve, components_fn: Callable[[float], np.ndarray]):
    """Package a vector field along a curve as a multipoint tensor field of its parameter."""

    def field(s):
        return MultiPointTensor(
            (1, 0), ((curve, s),), np.asarray(components_fn(s), dtype=float)
        )

    return field
