"""Continuous evaluation of the barrier field and its gradient.

Values interpolate bilinearly over the containing grid cell, and gradients
are the exact derivatives of that bilinear surface, so a finite difference
of ``value_at`` reproduces ``gradient_at`` to rounding error.  The surface
gradient is continuous along a cell but jumps at cell boundaries by the
local curvature times the spacing; a smoothed (node-averaged) gradient
would hide those jumps but then disagree with finite differences of the
interpolant by the same amount, which is the larger surprise for callers
that difference the field themselves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .solver import ScalarField

__all__ = ["GradientSample", "value_at", "gradient_at", "normalized_gradient", "node_gradients"]

# Floor on the normalization denominator; gradient components can be tiny in
# plateau regions and exactly zero on constant patches.
NORMALIZE_EPS = 1e-9


@dataclass(frozen=True)
class GradientSample:
    """Field value and gradient at one point."""

    value: float
    grad: np.ndarray
    grad_norm: float


def node_gradients(field: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    """Per-node (dV/dx, dV/dy) central-difference arrays, cached on the field.

    Central differences interior, one-sided on the outermost ring.  These
    are the node-level gradients used for grid-exhaustive certificate
    scans; pointwise evaluation via :func:`gradient_at` differentiates the
    interpolation surface instead.
    """
    if field._node_grads is None:
        V = field.values
        hx, hy = field.grid.hx, field.grid.hy
        gx = np.empty_like(V)
        gx[:, 1:-1] = (V[:, 2:] - V[:, :-2]) / (2.0 * hx)
        gx[:, 0] = (V[:, 1] - V[:, 0]) / hx
        gx[:, -1] = (V[:, -1] - V[:, -2]) / hx
        gy = np.empty_like(V)
        gy[1:-1, :] = (V[2:, :] - V[:-2, :]) / (2.0 * hy)
        gy[0, :] = (V[1, :] - V[0, :]) / hy
        gy[-1, :] = (V[-1, :] - V[-2, :]) / hy
        field._node_grads = (gx, gy)
    return field._node_grads


def _locate(field: ScalarField, p) -> tuple[int, int, float, float]:
    """Containing cell and fractional offsets for a point in the domain."""
    x = float(p[0])
    y = float(p[1])
    d = field.grid.domain
    if not (d.xmin <= x <= d.xmax and d.ymin <= y <= d.ymax):
        raise ValueError(f"point ({x}, {y}) outside the field domain {d}")
    grid = field.grid
    fx = (x - d.xmin) / grid.hx
    fy = (y - d.ymin) / grid.hy
    i0 = int(fx)
    j0 = int(fy)
    if i0 > grid.nx - 2:
        i0 = grid.nx - 2
    if j0 > grid.ny - 2:
        j0 = grid.ny - 2
    tx = fx - i0
    ty = fy - j0
    if tx < 0.0:
        tx = 0.0
    elif tx > 1.0:
        tx = 1.0
    if ty < 0.0:
        ty = 0.0
    elif ty > 1.0:
        ty = 1.0
    return i0, j0, tx, ty


def _bilinear(arr: np.ndarray, i0: int, j0: int, tx: float, ty: float) -> float:
    v00 = arr[j0, i0]
    v10 = arr[j0, i0 + 1]
    v01 = arr[j0 + 1, i0]
    v11 = arr[j0 + 1, i0 + 1]
    return float((1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11))


def value_at(field: ScalarField, p) -> float:
    """Bilinear field value at a point of the closed domain; exact at nodes."""
    i0, j0, tx, ty = _locate(field, p)
    return _bilinear(field.values, i0, j0, tx, ty)


def gradient_at(field: ScalarField, p) -> GradientSample:
    """Field value and gradient of the interpolation surface at a point.

    Parameters
    ----------
    field : ScalarField
    p : sequence of two floats inside the closed domain

    Returns
    -------
    GradientSample
        ``value`` is the bilinear field value, ``grad`` the exact gradient
        of the bilinear patch containing ``p`` (so finite differences of
        :func:`value_at` recover it to rounding error away from cell
        boundaries), ``grad_norm`` its Euclidean norm.
    """
    i0, j0, tx, ty = _locate(field, p)
    V = field.values
    v00 = V[j0, i0]
    v10 = V[j0, i0 + 1]
    v01 = V[j0 + 1, i0]
    v11 = V[j0 + 1, i0 + 1]
    v = float((1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11))
    dx = float(((1.0 - ty) * (v10 - v00) + ty * (v11 - v01)) / field.grid.hx)
    dy = float(((1.0 - tx) * (v01 - v00) + tx * (v11 - v10)) / field.grid.hy)
    return GradientSample(value=v, grad=np.array([dx, dy]), grad_norm=math.hypot(dx, dy))


def normalized_gradient(field: ScalarField, p, eps: float = NORMALIZE_EPS) -> np.ndarray:
    """Gradient scaled to unit norm, with an ``eps`` floor on the denominator.

    Returns ``grad / max(norm(grad), eps)``: the output norm never exceeds 1
    and equals 1 whenever the raw norm is at least ``eps``; a zero gradient
    maps to the zero vector.
    """
    gs = gradient_at(field, p)
    return gs.grad / max(gs.grad_norm, eps)
