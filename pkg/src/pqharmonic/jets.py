"""Truncated multivariate Taylor series (jets), vectorized over base points.

A :class:`Jet` of order ``K`` in ``dim`` variables stores the Taylor
coefficients ``f^(alpha)(x0) / alpha!`` for every multi-index ``alpha`` of
total degree at most ``K``.  Coefficients are kept densely in graded order
(degree-major), so truncating to a lower order is a prefix slice.

The coefficient array has shape ``(ncoef, *batch)``: a single ``Jet`` can
carry the expansions at many base points at once, and every operation acts
on all of them.  This is what keeps quadrature over thousands of nodes
affordable.

Besides :class:`Jet` objects, the geometric layers pass around plain numbers
(Python floats or arrays broadcastable to the batch shape) for quantities
that do not depend on the chart variables.  The helpers :func:`mul`,
:func:`total`, :func:`derivative` and :func:`truncate` accept either kind and
skip exact zeros, which is what makes flat targets and diagonal metrics
cheap.
"""
from __future__ import annotations

import math
from functools import lru_cache
from itertools import combinations_with_replacement
from typing import Sequence

import numpy as np
from scipy import sparse

from .errors import DegeneratePointError, InvalidOrderError, JetMismatchError

DEFAULT_ORDER = 4
DEGENERATE_THRESHOLD = 1e-12

MultiIndex = tuple


@lru_cache(maxsize=None)
def multi_indices(dim: int, order: int) -> tuple:
    """All multi-indices of total degree <= order, degree-major."""
    out = []
    for deg in range(order + 1):
        for combo in combinations_with_replacement(range(dim), deg):
            idx = [0] * dim
            for v in combo:
                idx[v] += 1
            out.append(tuple(idx))
    return tuple(out)


@lru_cache(maxsize=None)
def _positions(dim: int, order: int) -> dict:
    return {idx: k for k, idx in enumerate(multi_indices(dim, order))}


def n_coefficients(dim: int, order: int) -> int:
    return math.comb(dim + order, order)


@lru_cache(maxsize=None)
def _mul_table(dim: int, order: int):
    idx = multi_indices(dim, order)
    pos = _positions(dim, order)
    pairs = []
    for i, a in enumerate(idx):
        da = sum(a)
        for j, b in enumerate(idx):
            if da + sum(b) > order:
                continue
            k = pos[tuple(x + y for x, y in zip(a, b))]
            pairs.append((k, i, j))
    pairs.sort()
    ks = np.array([p[0] for p in pairs])
    left = np.array([p[1] for p in pairs])
    right = np.array([p[2] for p in pairs])
    # scatter matrix summing pair products into their output coefficient
    scatter = sparse.csr_matrix(
        (np.ones(len(pairs)), (ks, np.arange(len(pairs)))), shape=(len(idx), len(pairs))
    )
    return left, right, scatter


@lru_cache(maxsize=None)
def _diff_table(dim: int, order: int, var: int):
    pos = _positions(dim, order)
    src, fac = [], []
    for beta in multi_indices(dim, order - 1):
        alpha = list(beta)
        alpha[var] += 1
        src.append(pos[tuple(alpha)])
        fac.append(float(alpha[var]))
    return np.array(src), np.array(fac)


def _factorial(idx) -> int:
    return math.prod(math.factorial(k) for k in idx)


class Jet:
    """Truncated Taylor expansion of a scalar quantity at one or many points.

    Parameters
    ----------
    dim : int
        Number of chart variables.
    order : int
        Truncation order ``K``; all coefficients of degree <= K are stored.
    coeffs : array_like
        Array of shape ``(n_coefficients(dim, order), *batch)``.

    Arithmetic between jets of equal dimension truncates to the smaller of
    the two orders; use :func:`jet_arith` for the strict variant.
    """

    __slots__ = ("dim", "order", "coeffs")
    __array_ufunc__ = None

    def __init__(self, dim: int, order: int, coeffs):
        if order < 0:
            raise InvalidOrderError(f"jet order must be non-negative, got {order}")
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[0] != n_coefficients(dim, order):
            raise JetMismatchError(
                f"expected {n_coefficients(dim, order)} coefficients for "
                f"dim={dim}, order={order}, got {coeffs.shape[0]}"
            )
        self.dim = dim
        self.order = order
        self.coeffs = coeffs

    @classmethod
    def constant(cls, value, dim: int, order: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros((n_coefficients(dim, order),) + value.shape)
        c[0] = value
        return cls(dim, order, c)

    @property
    def value(self):
        return self.coeffs[0]

    @property
    def batch_shape(self) -> tuple:
        return self.coeffs.shape[1:]

    def coefficient(self, idx: MultiIndex):
        idx = tuple(idx)
        if len(idx) != self.dim:
            raise JetMismatchError(f"multi-index {idx} has wrong length for dim={self.dim}")
        if sum(idx) > self.order:
            raise InvalidOrderError(f"degree of {idx} exceeds jet order {self.order}")
        return self.coeffs[_positions(self.dim, self.order)[idx]]

    def as_dict(self) -> dict:
        return {idx: self.coeffs[k] for k, idx in enumerate(multi_indices(self.dim, self.order))}

    def truncate(self, order: int) -> "Jet":
        if order == self.order:
            return self
        if order > self.order:
            raise InvalidOrderError(f"cannot raise jet order {self.order} to {order}")
        return Jet(self.dim, order, self.coeffs[: n_coefficients(self.dim, order)])

    def __repr__(self):
        return f"Jet(dim={self.dim}, order={self.order}, value={self.value!r})"

    # arithmetic -----------------------------------------------------------

    def _match(self, other: "Jet") -> tuple:
        if other.dim != self.dim:
            raise JetMismatchError(f"dimension mismatch: {self.dim} vs {other.dim}")
        r = min(self.order, other.order)
        return self.truncate(r), other.truncate(r)

    def __neg__(self):
        return Jet(self.dim, self.order, -self.coeffs)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Jet):
            a, b = self._match(other)
            return Jet(a.dim, a.order, a.coeffs + b.coeffs)
        other = np.asarray(other, dtype=float)
        shape = (self.coeffs.shape[0],) + np.broadcast_shapes(self.batch_shape, other.shape)
        c = np.array(np.broadcast_to(self.coeffs, shape))
        c[0] += other
        return Jet(self.dim, self.order, c)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b = self._match(other)
            left, right, scatter = _mul_table(a.dim, a.order)
            prod = a.coeffs[left] * b.coeffs[right]
            out = scatter @ prod.reshape(len(left), -1)
            return Jet(a.dim, a.order, out.reshape((scatter.shape[0],) + prod.shape[1:]))
        if isinstance(other, (int, float)):
            return Jet(self.dim, self.order, self.coeffs * float(other))
        return Jet(self.dim, self.order, self.coeffs * np.asarray(other, dtype=float))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * reciprocal(other)
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, r):
        if isinstance(r, (int, np.integer)) or (np.ndim(r) == 0 and float(r).is_integer()):
            return integer_power(self, int(r))
        return jet_pow_real(self, float(r))


# --------------------------------------------------------------------------
# construction and elementary operations


def lift_point(x: Sequence, order: int = DEFAULT_ORDER) -> list:
    """Identity seed: one jet per coordinate, ``x_i + eps_i``.

    Each entry of ``x`` may be a float or an array; arrays give batched jets.
    """
    if order < 1:
        raise InvalidOrderError(f"jet order must be >= 1, got {order}")
    dim = len(x)
    vals = [np.asarray(v, dtype=float) for v in x]
    batch = np.broadcast_shapes(*(v.shape for v in vals))
    if not all(np.all(np.isfinite(v)) for v in vals):
        raise ValueError("lift_point requires finite coordinates")
    out = []
    for i, v in enumerate(vals):
        c = np.zeros((n_coefficients(dim, order),) + batch)
        c[0] = v
        c[1 + i] = 1.0  # degree-one block is e_0, e_1, ... in order
        out.append(Jet(dim, order, c))
    return out


def jet_arith(a: Jet, b: Jet, op: str) -> Jet:
    """Strict binary arithmetic: both jets must share dimension and order."""
    if a.dim != b.dim or a.order != b.order:
        raise JetMismatchError(
            f"jet_arith needs equal dim/order, got ({a.dim},{a.order}) and ({b.dim},{b.order})"
        )
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return a / b
    raise ValueError(f"unknown jet operation {op!r}")


def compose_univariate(a: Jet, taylor) -> Jet:
    """Compose ``a`` with a scalar function given its Taylor coefficients at value(a).

    ``taylor[n]`` is ``f^(n)(a0) / n!`` (array-valued over the batch).
    """
    shifted = Jet(a.dim, a.order, a.coeffs.copy())
    shifted.coeffs[0] = 0.0
    result = Jet.constant(taylor[a.order], a.dim, a.order)
    for n in range(a.order - 1, -1, -1):
        result = result * shifted + taylor[n]
    return result


def _check_value(a: Jet, what: str, positive: bool):
    v = a.value
    bad = (v <= DEGENERATE_THRESHOLD) if positive else (np.abs(v) <= DEGENERATE_THRESHOLD)
    if np.any(bad):
        offending = float(np.min(v) if positive else np.min(np.abs(v)))
        raise DegeneratePointError(
            f"{what}: value {offending:.3e} at or below degenerate threshold {DEGENERATE_THRESHOLD:g}",
            value=offending,
        )


def reciprocal(a: Jet) -> Jet:
    _check_value(a, "division", positive=False)
    v = a.value
    taylor = [(-1.0) ** n * v ** (-(n + 1)) for n in range(a.order + 1)]
    return compose_univariate(a, taylor)


def jet_pow_real(a: Jet, r: float) -> Jet:
    """``a ** r`` for real ``r``; value(a) must be strictly positive."""
    _check_value(a, f"real power {r:g}", positive=True)
    v = a.value
    taylor, binom = [], 1.0
    for n in range(a.order + 1):
        taylor.append(binom * v ** (r - n))
        binom *= (r - n) / (n + 1)
    return compose_univariate(a, taylor)


def jet_sqrt(a: Jet) -> Jet:
    return jet_pow_real(a, 0.5)


def jet_exp(a: Jet) -> Jet:
    e = np.exp(a.value)
    return compose_univariate(a, [e / math.factorial(n) for n in range(a.order + 1)])


def integer_power(a: Jet, n: int) -> Jet:
    if n < 0:
        return integer_power(reciprocal(a), -n)
    result = Jet.constant(np.ones(a.batch_shape), a.dim, a.order)
    base = a
    while n:
        if n & 1:
            result = result * base
        n >>= 1
        if n:
            base = base * base
    return result


def partial(a: Jet, idx: MultiIndex):
    """Partial derivative ``d^idx`` of the represented quantity at the base point."""
    return a.coefficient(idx) * _factorial(idx)


def differentiate(a: Jet, var: int) -> Jet:
    """Jet of ``d/dx_var`` of ``a``; one order lower."""
    if a.order < 1:
        raise InvalidOrderError("cannot differentiate an order-0 jet")
    src, fac = _diff_table(a.dim, a.order, var)
    fac = fac.reshape((-1,) + (1,) * len(a.batch_shape))
    return Jet(a.dim, a.order - 1, a.coeffs[src] * fac)


# --------------------------------------------------------------------------
# helpers that accept jets or plain numbers (constant fields)


def is_zero(a) -> bool:
    if isinstance(a, Jet):
        return False
    if isinstance(a, (int, float)):
        return a == 0
    return np.ndim(a) == 0 and a == 0


def value_of(a):
    return a.value if isinstance(a, Jet) else a


def derivative(a, var: int):
    return differentiate(a, var) if isinstance(a, Jet) else 0.0


def truncate(a, order: int):
    return a.truncate(order) if isinstance(a, Jet) else a


def mul(*factors):
    if any(is_zero(f) for f in factors):
        return 0.0
    out = factors[0]
    for f in factors[1:]:
        out = out * f
    return out


def total(terms):
    out = 0.0
    for t in terms:
        if is_zero(t):
            continue
        out = t if is_zero(out) else out + t
    return out


def order_of(*items) -> int | None:
    orders = [t.order for t in items if isinstance(t, Jet)]
    return min(orders) if orders else None


class Composer:
    """Substitute ``phi(X) - phi(x0)`` into Taylor expansions taken at ``phi(x0)``.

    ``deltas`` are jets in the source variables with vanishing constant term.
    Calling the composer on a jet in the target variables returns the jet of
    the composite in the source variables, valid to ``min(outer order, source order)``.
    """

    def __init__(self, deltas: Sequence[Jet], order: int):
        self.n = len(deltas)
        self.order = order
        self.xdim = deltas[0].dim
        self.xorder = deltas[0].order
        pos = _positions(self.n, order)
        monos = [Jet.constant(np.ones(deltas[0].batch_shape), self.xdim, self.xorder)]
        for beta in multi_indices(self.n, order)[1:]:
            a = next(k for k, e in enumerate(beta) if e)
            parent = list(beta)
            parent[a] -= 1
            monos.append(monos[pos[tuple(parent)]] * deltas[a])
        shape = np.broadcast_shapes(*(m.coeffs.shape for m in monos))
        self._stack = np.stack([np.broadcast_to(m.coeffs, shape) for m in monos])

    def __call__(self, f):
        if not isinstance(f, Jet):
            return f
        if f.dim != self.n or f.order > self.order:
            raise JetMismatchError("composer called with an incompatible outer jet")
        r = min(f.order, self.xorder)
        m = self._stack[: n_coefficients(self.n, f.order), : n_coefficients(self.xdim, r)]
        return Jet(self.xdim, r, np.einsum("b...,bc...->c...", f.coeffs, m))
