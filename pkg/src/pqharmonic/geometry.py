"""Metric-level calculus on a single coordinate chart.

Tensors are nested Python lists whose entries are either :class:`Jet`
objects or plain numbers (constant fields).  The ``*_jets`` functions work at
that level and are what the pullback layer builds on; the public functions
(:func:`metric_inverse`, :func:`christoffel`, ...) take a numeric point, or a
batch of points of shape ``(m, *batch)``, and return numpy arrays.

Index conventions:

* ``christoffel(...)[k, i, j]`` is ``Gamma^k_{ij}``.
* ``riemann(...)[l, k, i, j]`` is ``R^l_{kij}`` with
  ``R(d_i, d_j) d_k = R^l_{kij} d_l`` and
  ``R(X, Y) Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, MetricError
from .jets import (
    DEGENERATE_THRESHOLD,
    Jet,
    derivative,
    is_zero,
    jet_pow_real,
    lift_point,
    mul,
    reciprocal,
    total,
    value_of,
)


@dataclass(frozen=True)
class MetricField:
    """Riemannian metric on one chart.

    ``components(coords)`` returns the full symmetric ``dim x dim`` matrix as
    nested lists; ``coords`` is a list of jets (or numbers) and entries may be
    jets or numbers.  ``guard(coords)`` returns a boolean (array) marking
    where the chart is valid; ``None`` means everywhere.
    """

    dim: int
    components: Callable
    guard: Callable | None = None
    name: str = "metric"

    def matrix(self, coords) -> list:
        mat = self.components(coords)
        if len(mat) != self.dim or any(len(row) != self.dim for row in mat):
            raise MetricError(f"{self.name}: components must form a {self.dim}x{self.dim} matrix")
        return [list(row) for row in mat]

    def check_guard(self, point) -> None:
        if self.guard is None:
            return
        pts = [np.asarray(c, dtype=float) for c in point]
        ok = np.asarray(self.guard(pts), dtype=bool)
        if not np.all(ok):
            raise DomainError(f"point outside the domain of {self.name}")


@dataclass(frozen=True)
class OneFormField:
    """One-form ``theta_i(x)``; ``components(coords)`` returns ``dim`` entries."""

    components: Callable


def euclidean_metric(dim: int, name: str = "euclidean") -> MetricField:
    def components(coords):
        return [[1.0 if i == j else 0.0 for j in range(dim)] for i in range(dim)]

    return MetricField(dim, components, None, name)


def conformal_metric(dim: int, factor: Callable, guard=None, name="conformal") -> MetricField:
    """Metric ``factor(x) * delta_ij``."""

    def components(coords):
        f = factor(coords)
        return [[f if i == j else 0.0 for j in range(dim)] for i in range(dim)]

    return MetricField(dim, components, guard, name)


def hyperbolic_half_plane() -> MetricField:
    """``y^-2 (dx^2 + dy^2)`` on the upper half-plane; curvature -1."""
    return conformal_metric(2, lambda c: 1.0 / (c[1] * c[1]), lambda c: c[1] > 0, "half-plane")


def stereographic_sphere() -> MetricField:
    """Round unit sphere in stereographic coordinates; curvature +1."""

    def factor(c):
        return 4.0 / (1.0 + c[0] * c[0] + c[1] * c[1]) ** 2

    return conformal_metric(2, factor, None, "sphere")


# --------------------------------------------------------------------------
# jet-level tensor calculus


def _pivot_ok(piv) -> bool:
    v = value_of(piv)
    return bool(np.all(np.asarray(v) > DEGENERATE_THRESHOLD))


def invert_matrix(mat: list) -> tuple:
    """Inverse and determinant of a symmetric positive-definite matrix.

    Gauss-Jordan elimination along the diagonal.  For SPD input the
    diagonal pivots are ratios of leading principal minors and are
    positive, so no row exchanges are needed (which also keeps the pivot
    sequence identical across a batch of points).
    """
    m = len(mat)
    a = [list(row) for row in mat]
    inv = [[1.0 if i == j else 0.0 for j in range(m)] for i in range(m)]
    det = 1.0
    for c in range(m):
        piv = a[c][c]
        if is_zero(piv) or not _pivot_ok(piv):
            raise MetricError("metric is singular or not positive definite")
        det = mul(det, piv)
        rp = reciprocal(piv) if isinstance(piv, Jet) else 1.0 / piv
        a[c] = [mul(e, rp) for e in a[c]]
        inv[c] = [mul(e, rp) for e in inv[c]]
        for r in range(m):
            f = a[r][c]
            if r == c or is_zero(f):
                continue
            a[r] = [total([e, -mul(f, p)]) for e, p in zip(a[r], a[c])]
            inv[r] = [total([e, -mul(f, p)]) for e, p in zip(inv[r], inv[c])]
    return inv, det


def christoffel_jets(mat: list, inv: list) -> list:
    """``Gamma[k][i][j]`` from the metric matrix and its inverse (jets)."""
    m = len(mat)
    dg = [[[derivative(mat[b][c], a) for c in range(m)] for b in range(m)] for a in range(m)]
    gam = [[[0.0] * m for _ in range(m)] for _ in range(m)]
    for k in range(m):
        for i in range(m):
            for j in range(i, m):
                s = total(
                    mul(inv[k][l], total([dg[i][j][l], dg[j][i][l], -dg[l][i][j]]))
                    for l in range(m)
                )
                s = mul(0.5, s)
                gam[k][i][j] = s
                gam[k][j][i] = s
    return gam


def riemann_jets(gam: list) -> list:
    """``R[l][k][i][j]`` from Christoffel jets; exactly antisymmetric in (i, j)."""
    m = len(gam)
    out = [[[[0.0] * m for _ in range(m)] for _ in range(m)] for _ in range(m)]
    for l in range(m):
        for k in range(m):
            for i in range(m):
                for j in range(i + 1, m):
                    r = total(
                        [derivative(gam[l][j][k], i), -derivative(gam[l][i][k], j)]
                        + [mul(gam[l][i][e], gam[e][j][k]) for e in range(m)]
                        + [-mul(gam[l][j][e], gam[e][i][k]) for e in range(m)]
                    )
                    out[l][k][i][j] = r
                    out[l][k][j][i] = -r if not is_zero(r) else 0.0
    return out


def divergence_jets(inv: list, gam: list, theta: Sequence) -> object:
    """``g^ij (d_i theta_j - Gamma^k_ij theta_k)`` for a one-form of jets."""
    m = len(inv)
    terms = []
    for i in range(m):
        for j in range(m):
            if is_zero(inv[i][j]):
                continue
            inner = total(
                [derivative(theta[j], i)] + [-mul(gam[k][i][j], theta[k]) for k in range(m)]
            )
            terms.append(mul(inv[i][j], inner))
    return total(terms)


# --------------------------------------------------------------------------
# numeric front end


def as_point(x) -> np.ndarray:
    pt = np.asarray(x, dtype=float)
    if pt.ndim == 0:
        pt = pt.reshape(1)
    return pt


def _batch(pt: np.ndarray) -> tuple:
    return pt.shape[1:]


def to_array(t, batch: tuple) -> np.ndarray:
    """Values of a (nested) tensor of jets/numbers as an array ``(*shape, *batch)``."""
    if isinstance(t, (list, tuple)):
        return np.stack([to_array(e, batch) for e in t])
    return np.broadcast_to(np.asarray(value_of(t), dtype=float), batch).copy()


def _lift(g: MetricField, x, order: int):
    if isinstance(x, (list, tuple)) and x and isinstance(x[0], Jet):
        return None, list(x)
    pt = as_point(x)
    if pt.shape[0] != g.dim:
        raise DomainError(f"{g.name}: expected {g.dim} coordinates, got {pt.shape[0]}")
    g.check_guard(pt)
    return pt, lift_point(list(pt), order)


def metric_inverse(g: MetricField, x):
    """``g^ij`` at ``x``; jets in, jets out."""
    pt, X = _lift(g, x, 1)
    inv, _ = invert_matrix(g.matrix(X))
    return inv if pt is None else to_array(inv, _batch(pt))


def christoffel(g: MetricField, x):
    pt, X = _lift(g, x, 1)
    mat = g.matrix(X)
    inv, _ = invert_matrix(mat)
    gam = christoffel_jets(mat, inv)
    return gam if pt is None else to_array(gam, _batch(pt))


def riemann(g: MetricField, x):
    pt, X = _lift(g, x, 2)
    mat = g.matrix(X)
    inv, _ = invert_matrix(mat)
    rm = riemann_jets(christoffel_jets(mat, inv))
    return rm if pt is None else to_array(rm, _batch(pt))


def riemann_lowered(g: MetricField, x) -> np.ndarray:
    """``R_{lkij} = g_{lm} R^m_{kij}``."""
    pt = as_point(x)
    rm = riemann(g, pt)
    gm = to_array(g.matrix(lift_point(list(pt), 1)), _batch(pt))
    return np.einsum("lm...,mkij...->lkij...", gm, rm)


def sectional_curvature(g: MetricField, x, a: int = 0, b: int = 1):
    """Sectional curvature of the coordinate plane spanned by ``d_a, d_b``."""
    low = riemann_lowered(g, x)
    gm = to_array(g.matrix(lift_point(list(as_point(x)), 1)), _batch(as_point(x)))
    # g(R(d_a, d_b) d_b, d_a) = R_{a b a b}
    num = low[a, b, a, b]
    den = gm[a, a] * gm[b, b] - gm[a, b] ** 2
    return num / den


def sqrt_det(g: MetricField, x):
    pt, X = _lift(g, x, 1)
    _, det = invert_matrix(g.matrix(X))
    if pt is None:
        return jet_pow_real(det, 0.5) if isinstance(det, Jet) else np.sqrt(det)
    return np.sqrt(to_array(det, _batch(pt)))


def grad_scalar(g: MetricField, f: Callable, x):
    """``(grad f)^i = g^ij d_j f`` for a jet-evaluable scalar ``f(coords)``."""
    pt, X = _lift(g, x, 1)
    inv, _ = invert_matrix(g.matrix(X))
    fx = f(X)
    grad = [total(mul(inv[i][j], derivative(fx, j)) for j in range(g.dim)) for i in range(g.dim)]
    return grad if pt is None else to_array(grad, _batch(pt))


def div_one_form(g: MetricField, theta: OneFormField, x):
    pt, X = _lift(g, x, 1)
    mat = g.matrix(X)
    inv, _ = invert_matrix(mat)
    div = divergence_jets(inv, christoffel_jets(mat, inv), theta.components(X))
    return div if pt is None else to_array(div, _batch(pt))
