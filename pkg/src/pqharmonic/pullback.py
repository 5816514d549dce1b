"""Map-level calculus: differential, tension fields and the pullback connection.

Everything is computed in coordinate frames.  Traces over the source are
``g^ij (nabla_i Z_j - Gamma^k_ij Z_k)`` with explicit Christoffel
corrections; the pullback connection adds the target Christoffel symbols
(composed with the map) contracted with ``dphi``.

A :class:`MapJets` object holds the jets of every intermediate quantity at a
batch of source points.  Quantities are built lazily and cached, so asking
for ``tau_p`` and then ``tau_pq`` reuses the metric, Christoffel and tension
jets.  Each derivative costs one jet order: with the default order 4 the
(p,q)-tension comes out exactly at order 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import DegeneratePointError, InvalidOrderError, ParameterError
from .geometry import (
    MetricField,
    as_point,
    christoffel_jets,
    divergence_jets,
    invert_matrix,
    riemann_jets,
    to_array,
)
from .jets import (
    DEFAULT_ORDER,
    DEGENERATE_THRESHOLD,
    Composer,
    Jet,
    derivative,
    integer_power,
    is_zero,
    jet_pow_real,
    lift_point,
    mul,
    total,
    truncate,
)


@dataclass(frozen=True)
class MapField:
    """Smooth map between two charts, ``components(coords) -> [phi^1, ..., phi^n]``."""

    components: Callable
    source_metric: MetricField
    target_metric: MetricField
    name: str = "map"

    @property
    def source_dim(self) -> int:
        return self.source_metric.dim

    @property
    def target_dim(self) -> int:
        return self.target_metric.dim

    def evaluate(self, coords) -> list:
        out = list(self.components(coords))
        if len(out) != self.target_dim:
            raise ValueError(f"{self.name}: expected {self.target_dim} components, got {len(out)}")
        return out


@dataclass(frozen=True)
class VectorFieldAlongMap:
    """Section of the pullback bundle: ``components(lifted coords) -> n jets``."""

    map: MapField
    components: Callable
    name: str = "V"


def _check_exponents(p=None, q=None):
    if p is not None and p < 2:
        raise ParameterError(f"p must be >= 2, got {p}")
    if q is not None and q < 2:
        raise ParameterError(f"q must be >= 2, got {q}")


def _power(base, exponent: float, quantity: str):
    """``base ** exponent`` for a squared norm ``base`` (jet or number)."""
    if exponent == 0:
        return 1.0
    if float(exponent).is_integer() and exponent > 0:
        return integer_power(base, int(exponent)) if isinstance(base, Jet) else base ** exponent
    if not isinstance(base, Jet):
        if np.any(np.asarray(base) <= DEGENERATE_THRESHOLD):
            raise DegeneratePointError(f"{quantity} collapsed to zero", value=float(np.min(base)), quantity=quantity)
        return np.asarray(base, dtype=float) ** exponent
    try:
        return jet_pow_real(base, exponent)
    except DegeneratePointError as exc:
        raise DegeneratePointError(
            f"{quantity} collapsed (value {exc.value:.3e}) under the power {exponent:g}",
            value=exc.value,
            quantity=quantity,
        ) from None


class MapJets:
    """Jets of all map-level quantities at a batch of source points."""

    def __init__(self, phi: MapField, coords: list):
        self.phi = phi
        self.X = coords
        self.order = coords[0].order
        self.m = phi.source_dim
        self.n = phi.target_dim
        self.batch = coords[0].batch_shape
        self._memo = {}

    @classmethod
    def at(cls, phi: MapField, x, order: int = DEFAULT_ORDER) -> "MapJets":
        pt = as_point(x)
        if pt.shape[0] != phi.source_dim:
            raise ValueError(f"{phi.name}: expected {phi.source_dim} coordinates, got {pt.shape[0]}")
        phi.source_metric.check_guard(pt)
        state = cls(phi, lift_point(list(pt), order))
        phi.target_metric.check_guard(state.y0)
        return state

    def need(self, order: int, what: str):
        if self.order < order:
            raise InvalidOrderError(f"{what} needs jet order >= {order}, have {self.order}")

    def values(self, t) -> np.ndarray:
        return to_array(t, self.batch)

    # source geometry -------------------------------------------------------

    @cached_property
    def g(self):
        return self.phi.source_metric.matrix(self.X)

    @cached_property
    def _inverse(self):
        # the inverse is never differentiated: one order below g suffices
        low = max(self.order - 1, 0)
        return invert_matrix([[truncate(e, low) for e in row] for row in self.g])

    @property
    def ginv(self):
        return self._inverse[0]

    @property
    def gdet(self):
        return self._inverse[1]

    @cached_property
    def gamma_source(self):
        return christoffel_jets(self.g, self.ginv)

    # the map ------------------------------------------------------------------

    @cached_property
    def phi_jets(self):
        return self.phi.evaluate(self.X)

    @cached_property
    def dphi(self):
        """``dphi[alpha][i] = d_i phi^alpha``."""
        return [[derivative(f, i) for i in range(self.m)] for f in self.phi_jets]

    @cached_property
    def y0(self) -> np.ndarray:
        return self.values(self.phi_jets)

    # target geometry, composed with the map ----------------------------------------

    @cached_property
    def _target_order(self) -> int:
        return max(self.order - 1, 1)

    @cached_property
    def _target(self):
        Y = lift_point(list(self.y0), self._target_order)
        mat = self.phi.target_metric.matrix(Y)
        low = self._target_order - 1
        inv, _ = invert_matrix([[truncate(e, low) for e in row] for row in mat])
        gam = christoffel_jets(mat, inv) if self._target_order >= 1 else None
        return mat, gam

    @cached_property
    def composer(self):
        deltas = []
        for f, y in zip(self.phi_jets, self.y0):
            if isinstance(f, Jet):
                deltas.append(f - y)
            else:
                deltas.append(Jet.constant(np.zeros(self.batch), self.m, self.order))
        return Composer(deltas, self._target_order)

    @cached_property
    def h(self):
        mat, _ = self._target
        return [[self._compose(e) for e in row] for row in mat]

    def _compose(self, e):
        # constant entries (flat targets) never need the composer
        return self.composer(e) if isinstance(e, Jet) else e

    @cached_property
    def gamma_target(self):
        _, gam = self._target
        return [[[self._compose(e) for e in row] for row in blk] for blk in gam]

    @cached_property
    def riemann_target(self) -> np.ndarray:
        """``R^l_{kab}`` of the target at ``phi(x)`` (values only)."""
        self.need(3, "target curvature")
        _, gam = self._target
        return self.values(riemann_jets(gam))

    @cached_property
    def target_is_flat(self) -> bool:
        _, gam = self._target
        return all(is_zero(e) for blk in gam for row in blk for e in row)

    # pullback connection ---------------------------------------------------

    def nabla(self, V: list, i: int) -> list:
        """``(nabla^phi_{d_i} V)^c = d_i V^c + GammaN^c_ab V^a d_i phi^b``."""
        gam = self.gamma_target
        out = []
        for c in range(self.n):
            terms = [derivative(V[c], i)]
            for a in range(self.n):
                if is_zero(V[a]):
                    continue
                for b in range(self.n):
                    terms.append(mul(gam[c][a][b], V[a], self.dphi[b][i]))
            out.append(total(terms))
        return out

    def trace_nabla(self, Z: list) -> list:
        """``g^ij (nabla_i Z_j - Gamma^k_ij Z_k)`` for ``Z[j]`` a vector along the map."""
        inv, gam = self.ginv, self.gamma_source
        terms = [[] for _ in range(self.n)]
        for i in range(self.m):
            for j in range(self.m):
                if is_zero(inv[i][j]):
                    continue
                nz = self.nabla(Z[j], i)
                for c in range(self.n):
                    inner = total([nz[c]] + [-mul(gam[k][i][j], Z[k][c]) for k in range(self.m)])
                    terms[c].append(mul(inv[i][j], inner))
        return [total(t) for t in terms]

    def inner_target(self, U: list, V: list):
        return total(
            mul(self.h[a][b], U[a], V[b]) for a in range(self.n) for b in range(self.n)
        )

    def curvature_trace(self, V) -> np.ndarray:
        """Values of ``g^ij R^N(V, dphi(d_i)) dphi(d_j)``."""
        rn = self.riemann_target
        v = self.values(V)
        d = self.values(self.dphi)
        inv = self.values(self.ginv)
        # R(V, d_i) d_j has components R^l_{k a b} d_j^k V^a d_i^b
        return np.einsum("ij...,lkab...,kj...,a...,bi...->l...", inv, rn, d, v, d)

    # energies and tension fields -------------------------------------------

    @cached_property
    def energy_density(self):
        """``|dphi|^2 = g^ij h_ab d_i phi^a d_j phi^b``."""
        inv, h, d = self.ginv, self.h, self.dphi
        raised = [
            [total(mul(inv[i][j], d[a][j]) for j in range(self.m)) for i in range(self.m)]
            for a in range(self.n)
        ]
        return total(
            mul(h[a][b], d[a][i], raised[b][i])
            for a in range(self.n)
            for b in range(self.n)
            for i in range(self.m)
        )

    @cached_property
    def tension(self):
        self.need(2, "tension field")
        Z = [[self.dphi[c][j] for c in range(self.n)] for j in range(self.m)]
        return self.trace_nabla(Z)

    def dphi_power(self, exponent: float):
        """``|dphi|^exponent``."""
        key = ("dphi_power", exponent)
        if key not in self._memo:
            self._memo[key] = _power(self.energy_density, exponent / 2, "|dphi|")
        return self._memo[key]

    def p_tension(self, p: float):
        """``tau_p = |dphi|^{p-2} tau + dphi(grad |dphi|^{p-2})``."""
        key = ("tau_p", p)
        if key not in self._memo:
            A = self.dphi_power(p - 2)
            inv, d = self.ginv, self.dphi
            grad = [total(mul(inv[i][j], derivative(A, j)) for j in range(self.m)) for i in range(self.m)]
            self._memo[key] = [
                total([mul(A, self.tension[c])] + [mul(d[c][i], grad[i]) for i in range(self.m)])
                for c in range(self.n)
            ]
        return self._memo[key]

    def p_tension_divergence(self, p: float):
        """``div(|dphi|^{p-2} dphi)``, the unexpanded form of ``tau_p``."""
        self.need(2, "p-tension field")
        A = self.dphi_power(p - 2)
        Z = [[mul(A, self.dphi[c][j]) for c in range(self.n)] for j in range(self.m)]
        return self.trace_nabla(Z)

    def p_tension_weight(self, p: float, q: float):
        """``|tau_p|^{q-2}`` as a jet (or number)."""
        key = ("weight", p, q)
        if key not in self._memo:
            self._memo[key] = self._norm_power(self.p_tension(p), q - 2, "|tau_p|")
        return self._memo[key]

    def _norm_power(self, V: list, exponent: float, quantity: str):
        """``|V|^exponent`` where a field vanishing to all orders gives weight 0."""
        n2 = self.inner_target(V, V)
        half = exponent / 2
        if half == 0 or (float(half).is_integer() and half > 0) or not isinstance(n2, Jet):
            return _power(n2, half, quantity)
        low = n2.value <= DEGENERATE_THRESHOLD
        if not np.any(low):
            return _power(n2, half, quantity)
        flat = all(self._vanishes(c, low) for c in V)
        if not flat:
            raise DegeneratePointError(
                f"{quantity} collapsed to zero where the weight {quantity}^{exponent:g} is not smooth",
                value=float(np.min(n2.value)),
                quantity=quantity,
            )
        safe = Jet(n2.dim, n2.order, n2.coeffs.copy())
        safe.coeffs[:, low] = 0.0
        safe.coeffs[0, low] = 1.0
        weight = jet_pow_real(safe, half)
        weight.coeffs[:, low] = 0.0
        return weight

    def _vanishes(self, c, mask) -> bool:
        if isinstance(c, Jet):
            return bool(np.all(np.abs(c.coeffs[:, mask]) <= DEGENERATE_THRESHOLD))
        return bool(np.all(np.abs(np.broadcast_to(c, self.batch)[mask]) <= DEGENERATE_THRESHOLD))

    def W(self, p: float, q: float) -> list:
        """``|tau_p|^{q-2} tau_p``."""
        key = ("W", p, q)
        if key not in self._memo:
            B = self.p_tension_weight(p, q)
            self._memo[key] = [mul(B, t) for t in self.p_tension(p)]
        return self._memo[key]

    def tau_pq(self, p: float, q: float, include_curvature: bool = True) -> np.ndarray:
        self.need(4, "(p,q)-tension field")
        A = self.dphi_power(p - 2)
        B = self.p_tension_weight(p, q)
        W = self.W(p, q)
        dW = [self.nabla(W, j) for j in range(self.m)]

        second = self.trace_nabla([[mul(A, dW[j][c]) for c in range(self.n)] for j in range(self.m)])
        result = -self.values(second)

        if p != 2:
            A4 = self.dphi_power(p - 4)
            inv, d = self.ginv, self.dphi
            pairing = total(
                mul(inv[k][l], self.inner_target(dW[k], [d[b][l] for b in range(self.n)]))
                for k in range(self.m)
                for l in range(self.m)
            )
            C = mul(A4, pairing)
            Y = [[mul(C, d[c][j]) for c in range(self.n)] for j in range(self.m)]
            result = result - (p - 2) * self.values(self.trace_nabla(Y))

        if include_curvature and not self.target_is_flat:
            weight = self.values(A) * self.values(B)
            result = result - weight * self.curvature_trace(self.p_tension(p))
        return result


# --------------------------------------------------------------------------
# public operations


def differential(phi: MapField, x) -> np.ndarray:
    """``(dphi)[alpha, i] = d_i phi^alpha``."""
    s = MapJets.at(phi, x, 1)
    return s.values(s.dphi)


def energy_density(phi: MapField, x) -> np.ndarray:
    s = MapJets.at(phi, x, 1)
    return s.values(s.energy_density)


def tension(phi: MapField, x) -> np.ndarray:
    s = MapJets.at(phi, x, 2)
    return s.values(s.tension)


def p_tension(phi: MapField, p: float, x) -> np.ndarray:
    _check_exponents(p)
    s = MapJets.at(phi, x, 2)
    return s.values(s.p_tension(p))


def pullback_derivative(phi: MapField, W: VectorFieldAlongMap, i: int, x, order: int = 2) -> np.ndarray:
    """``nabla^phi_{d_i} W`` at ``x``."""
    s = MapJets.at(phi, x, order)
    return s.values(s.nabla(list(W.components(s.X)), i))


def w_field(phi: MapField, p: float, q: float, order: int = DEFAULT_ORDER) -> VectorFieldAlongMap:
    """``W = |tau_p|^{q-2} tau_p`` as a field that can be evaluated on lifted coordinates."""
    _check_exponents(p, q)

    def components(coords):
        return MapJets(phi, coords).W(p, q)

    return VectorFieldAlongMap(phi, components, "W")


def pq_tension(phi: MapField, p: float, q: float, x, order: int = DEFAULT_ORDER,
               include_curvature: bool = True) -> np.ndarray:
    """The (p,q)-tension field at ``x`` (components in the target chart)."""
    _check_exponents(p, q)
    return MapJets.at(phi, x, order).tau_pq(p, q, include_curvature)


def bi_p_tension(phi: MapField, p: float, x, order: int = DEFAULT_ORDER) -> np.ndarray:
    """Bi-p-tension ``tau_{p,2}``, assembled directly from ``tau_p``."""
    _check_exponents(p)
    s = MapJets.at(phi, x, order)
    s.need(4, "bi-p-tension field")
    A = s.dphi_power(p - 2)
    tp = s.p_tension(p)
    grads = [s.nabla(tp, j) for j in range(s.m)]
    out = -s.values(s.trace_nabla([[mul(A, g[c]) for c in range(s.n)] for g in grads]))
    if p != 2:
        A4 = s.dphi_power(p - 4)
        contraction = 0.0
        for k in range(s.m):
            for l in range(s.m):
                if is_zero(s.ginv[k][l]):
                    continue
                for a in range(s.n):
                    for b in range(s.n):
                        contraction = total(
                            [contraction, mul(s.ginv[k][l], s.h[a][b], grads[k][a], s.dphi[b][l])]
                        )
        coef = mul(A4, contraction)
        out = out - (p - 2) * s.values(
            s.trace_nabla([[mul(coef, s.dphi[c][j]) for c in range(s.n)] for j in range(s.m)])
        )
    if not s.target_is_flat:
        out = out - s.values(A) * s.curvature_trace(tp)
    return out


def p_bitension(phi: MapField, pb: float, x, order: int = DEFAULT_ORDER) -> np.ndarray:
    """``tau_{2,pb}``: curvature term plus the rough Laplacian of ``|tau|^{pb-2} tau``."""
    _check_exponents(q=pb)
    s = MapJets.at(phi, x, order)
    s.need(4, "p-bitension field")
    tau = s.tension
    weight = s._norm_power(tau, pb - 2, "|tau|")
    V = [mul(weight, t) for t in tau]
    lap = s.trace_nabla([s.nabla(V, j) for j in range(s.m)])
    out = -s.values(lap)
    if not s.target_is_flat:
        out = out - s.values(weight) * s.curvature_trace(tau)
    return out


@dataclass
class Theta3Check:
    """Divergence identity for ``theta_3(X) = h(W, |dphi|^{p-2} dphi(X))``."""

    divergence: np.ndarray
    tau_p_norm_q: np.ndarray
    residual: np.ndarray
    parallel_defect: np.ndarray


def theta3_divergence_residual(phi: MapField, p: float, q: float, x,
                               order: int = DEFAULT_ORDER) -> Theta3Check:
    """``div theta_3 - |tau_p|^q`` plus the parallelism defect ``max_i |nabla_i W|``.

    The residual vanishes whenever ``W`` is parallel along the map; the
    defect tells the caller whether that hypothesis holds at ``x``.
    """
    _check_exponents(p, q)
    s = MapJets.at(phi, x, order)
    s.need(3, "theta_3 divergence")
    A = s.dphi_power(p - 2)
    W = s.W(p, q)
    theta = [
        mul(A, s.inner_target(W, [s.dphi[b][i] for b in range(s.n)])) for i in range(s.m)
    ]
    div = s.values(divergence_jets(s.ginv, s.gamma_source, theta))
    tp = s.p_tension(p)
    norm_q = np.maximum(s.values(s.inner_target(tp, tp)), 0.0) ** (q / 2)
    defects = []
    for i in range(s.m):
        dW = s.nabla(W, i)
        defects.append(np.sqrt(np.maximum(s.values(s.inner_target(dW, dW)), 0.0)))
    return Theta3Check(div, norm_q, div - norm_q, np.max(np.stack(defects), axis=0))
