"""Energy functionals over boxes and the first-variation check.

Integrals use tensor-product Gauss-Legendre rules mapped to an axis-aligned
box.  Variations are chart translations ``phi_t = phi + t v`` with ``v`` a
smooth radial bump times a constant direction; their first variation is
estimated by a Richardson-extrapolated central difference and compared with
the pairing ``-int h(v, tau_pq) dv_g``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import roots_jacobi

from .errors import DomainError
from .jets import DEFAULT_ORDER, Jet, jet_exp, mul, reciprocal, total
from .pullback import MapField, MapJets, _check_exponents

CHUNK = 2048
DEFAULT_NODES = 16
DEFAULT_STEP = 1e-2
VANISHING_FLOOR = 1e-4
# exp(1 - 1/s) and all its derivatives underflow to 0.0 once s < 1/800
_BUMP_CUTOFF = 1.0 / 800.0


@dataclass(frozen=True)
class BoxDomain:
    lower: tuple
    upper: tuple
    guard: Callable | None = None

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi) or any(a >= b for a, b in zip(lo, hi)):
            raise DomainError(f"invalid box bounds {lo} .. {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor-product Gauss-Legendre rule with ``nodes`` points per axis."""

    nodes: int = DEFAULT_NODES

    def axis(self, lo: float, hi: float):
        x, w = np.polynomial.legendre.leggauss(self.nodes)
        half = 0.5 * (hi - lo)
        return lo + half * (x + 1.0), half * w

    def points(self, box: BoxDomain):
        """Nodes of shape ``(m, N)`` and weights of shape ``(N,)``."""
        axes = [self.axis(lo, hi) for lo, hi in zip(box.lower, box.upper)]
        grids = np.meshgrid(*(a[0] for a in axes), indexing="ij")
        wgrids = np.meshgrid(*(a[1] for a in axes), indexing="ij")
        pts = np.stack([g.ravel() for g in grids])
        weights = np.prod(np.stack([w.ravel() for w in wgrids]), axis=0)
        if box.guard is not None and not np.all(box.guard(list(pts))):
            raise DomainError("quadrature node outside the chart guard")
        return pts, weights


@dataclass(frozen=True)
class BallRule:
    """Product rule on a ball: Gauss-Legendre in the radius, hyperspherical angles.

    The radius is ``rho = 1 - (1 - t)^2`` with Gauss-Legendre in ``t``, which
    clusters nodes towards the rim where the derivatives of the bump profile
    peak; this converges far faster than plain Gauss-Legendre in ``rho``.
    Each polar angle is integrated in ``z = cos(theta)`` with the
    Gauss-Gegenbauer rule for its ``(1 - z^2)^((k-3)/2)`` weight and the
    azimuth with the trapezoidal rule on ``2 * angular`` points, so
    polynomials in the unit direction of degree below ``2 * angular`` are
    integrated exactly.  All nodes lie inside the ball, which is
    where a compactly supported variation lives.
    """

    radial: int = 48
    angular: int = 6

    def sphere(self, m: int):
        """Unit directions ``(m, N)`` and weights on ``S^{m-1}``."""
        if m == 1:
            return np.array([[-1.0, 1.0]]), np.array([1.0, 1.0])
        na = 2 * self.angular
        az = 2 * np.pi * np.arange(na) / na
        dirs = np.stack([np.cos(az), np.sin(az)])
        w = np.full(na, 2 * np.pi / na)
        for k in range(3, m + 1):
            # embed S^{k-2} into S^{k-1}: (z, sqrt(1-z^2) omega), measure (1-z^2)^((k-3)/2) dz
            a = 0.5 * (k - 3)
            z, zw = roots_jacobi(self.angular, a, a)
            new_dirs = np.concatenate(
                [
                    np.broadcast_to(z[:, None], (len(z), dirs.shape[1]))[None],
                    np.sqrt(1.0 - z * z)[None, :, None] * dirs[:, None, :],
                ]
            )
            dirs = new_dirs.reshape(k, -1)
            w = (zw[:, None] * w[None, :]).ravel()
        return dirs, w

    def points(self, bump: "Bump"):
        m = len(bump.center)
        dirs, sw = self.sphere(m)
        x, gw = np.polynomial.legendre.leggauss(self.radial)
        s = 0.5 * (1.0 - x)
        rho = 1.0 - s * s
        rw = gw * s * rho ** (m - 1) * bump.radius ** m
        c = np.asarray(bump.center)[:, None, None]
        pts = c + bump.radius * rho[None, :, None] * dirs[:, None, :]
        return pts.reshape(m, -1), (rw[:, None] * sw[None, :]).ravel()


def _chunked(fn, pts: np.ndarray, chunk: int = CHUNK) -> np.ndarray:
    if pts.shape[1] == 0:
        return np.zeros(0)
    parts = [fn(pts[:, k:k + chunk]) for k in range(0, pts.shape[1], chunk)]
    return np.concatenate(parts, axis=-1)


def _energy_integrand(phi: MapField, p: float, q: float, mode: str):
    def integrand(pts):
        if mode == "p":
            s = MapJets.at(phi, pts, 1)
            e = np.maximum(s.values(s.energy_density), 0.0)
            dens = e ** (p / 2) / p
        else:
            s = MapJets.at(phi, pts, 2)
            tp = s.p_tension(p)
            n2 = np.maximum(s.values(s.inner_target(tp, tp)), 0.0)
            dens = n2 ** (q / 2) / q
        return dens * np.sqrt(s.values(s.gdet))

    return integrand


def energy_pq(phi: MapField, p: float, q: float, D: BoxDomain,
              rule: QuadratureRule = QuadratureRule(), mode: str = "pq") -> float:
    """``(1/q) int |tau_p|^q dv_g`` over ``D``; ``mode="p"`` gives ``(1/p) int |dphi|^p dv_g``.

    ``E_{2,p}`` and ``E_{p,2}`` are ``energy_pq(phi, 2, p, ...)`` and
    ``energy_pq(phi, p, 2, ...)``.
    """
    if mode not in ("pq", "p"):
        raise ValueError(f"unknown energy mode {mode!r}")
    _check_exponents(p, None if mode == "p" else q)
    pts, w = rule.points(D)
    vals = _chunked(_energy_integrand(phi, p, q, mode), pts)
    return float(np.sum(w * vals))


# --------------------------------------------------------------------------
# variations


@dataclass(frozen=True)
class Bump:
    center: tuple
    radius: float
    direction: tuple

    def profile(self, coords):
        """Jet of ``exp(1 - 1/(1 - |x-c|^2/r^2))`` inside the ball, 0 outside."""
        r2 = total(mul(c - x0, c - x0) for c, x0 in zip(coords, self.center))
        s = 1.0 - r2 * (1.0 / self.radius ** 2)
        inside = s.value > _BUMP_CUTOFF
        safe = Jet(s.dim, s.order, s.coeffs.copy())
        safe.coeffs[:, ~inside] = 0.0
        safe.coeffs[0, ~inside] = 1.0
        out = jet_exp(1.0 - reciprocal(safe))
        out.coeffs[:, ~inside] = 0.0
        return out

    def support_mask(self, pts: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center).reshape((-1,) + (1,) * (pts.ndim - 1))
        return np.sum((pts - c) ** 2, axis=0) < self.radius ** 2


@dataclass(frozen=True)
class VariationField:
    """``v = sum of direction_k * bump_k`` in the target chart; compactly supported."""

    bumps: tuple = ()
    target_dim: int = 0

    def components(self, coords) -> list:
        out = [0.0] * self.target_dim
        for b in self.bumps:
            prof = b.profile(coords)
            out = [total([o, mul(d, prof)]) if d != 0 else o for o, d in zip(out, b.direction)]
        return out

    def support_mask(self, pts: np.ndarray) -> np.ndarray:
        mask = np.zeros(pts.shape[1:], dtype=bool)
        for b in self.bumps:
            mask |= b.support_mask(pts)
        return mask

    def support_box(self, D: BoxDomain) -> BoxDomain:
        if not self.bumps:
            return D
        lo = np.min([np.subtract(b.center, b.radius) for b in self.bumps], axis=0)
        hi = np.max([np.add(b.center, b.radius) for b in self.bumps], axis=0)
        return BoxDomain(tuple(np.maximum(lo, D.lower)), tuple(np.minimum(hi, D.upper)), D.guard)

    @property
    def is_zero(self) -> bool:
        return all(not np.any(b.direction) for b in self.bumps)

    def __add__(self, other: "VariationField") -> "VariationField":
        return VariationField(self.bumps + other.bumps, max(self.target_dim, other.target_dim))


def make_bump(D: BoxDomain, center: Sequence, radius: float, direction: Sequence) -> VariationField:
    """Smooth bump ``direction * exp(1 - 1/(1 - |x-c|^2/r^2))`` supported in a ball inside ``D``."""
    center = tuple(float(c) for c in center)
    if len(center) != D.dim:
        raise DomainError(f"bump center has {len(center)} coordinates, domain has {D.dim}")
    if radius <= 0:
        raise DomainError("bump radius must be positive")
    if any(c - radius <= lo or c + radius >= hi for c, lo, hi in zip(center, D.lower, D.upper)):
        raise DomainError("bump ball is not strictly inside the domain")
    direction = tuple(float(d) for d in direction)
    return VariationField((Bump(center, float(radius), direction),), len(direction))


def perturbed_map(phi: MapField, v: VariationField, t: float) -> MapField:
    """``phi + t v`` as a map between the same charts."""

    def components(coords):
        base = phi.evaluate(coords)
        return [total([b, mul(t, dv)]) for b, dv in zip(base, v.components(coords))]

    return MapField(components, phi.source_metric, phi.target_metric, f"{phi.name}+{t:g}v")


def _integration_nodes(v: VariationField, D: BoxDomain, rule, region: str):
    """Nodes and weights covering the support of ``v`` (or all of ``D``).

    With a :class:`BallRule` each bump ball gets its own product rule and
    weights are divided by the number of balls covering a node, so
    overlapping balls partition their union.  With a box rule the nodes
    outside the support are dropped: they contribute identical terms to every
    energy in the difference and zero to the pairing.
    """
    if region not in ("support", "domain"):
        raise ValueError(f"unknown region {region!r}")
    if region == "domain":
        box_rule = rule if isinstance(rule, QuadratureRule) else QuadratureRule()
        pts, w = box_rule.points(D)
        return D, pts, w
    box = v.support_box(D)
    if isinstance(rule, BallRule):
        parts = [rule.points(b) for b in v.bumps]
        if not parts:
            return box, np.zeros((D.dim, 0)), np.zeros(0)
        pts = np.concatenate([a for a, _ in parts], axis=1)
        w = np.concatenate([b for _, b in parts])
        cover = np.sum([b.support_mask(pts) for b in v.bumps], axis=0)
        w = w / np.maximum(cover, 1)
        if D.guard is not None and pts.shape[1] and not np.all(D.guard(list(pts))):
            raise DomainError("quadrature node outside the chart guard")
        return box, pts, w
    pts, w = rule.points(box)
    keep = v.support_mask(pts)
    return box, pts[:, keep], w[keep]


def _rule_size(rule) -> int:
    return rule.nodes if isinstance(rule, QuadratureRule) else rule.radial


def _fd_terms(phi, p, q, v, pts, w, step):
    def energy(t):
        integrand = _energy_integrand(perturbed_map(phi, v, t), p, q, "pq")
        return w * _chunked(integrand, pts)

    plus, minus = energy(step), energy(-step)
    plus2, minus2 = energy(step / 2), energy(-step / 2)
    d1 = np.sum(plus - minus) / (2 * step)
    d2 = np.sum(plus2 - minus2) / step
    scale = np.sum(np.abs(plus2 - minus2)) / step
    return (4.0 * d2 - d1) / 3.0, scale


def first_variation_fd(phi: MapField, p: float, q: float, v: VariationField, D: BoxDomain,
                       rule=None, step: float = DEFAULT_STEP,
                       region: str = "support") -> float:
    """Richardson-extrapolated central difference of ``t -> E_pq(phi + t v)`` at 0."""
    _check_exponents(p, q)
    if v.is_zero:
        return 0.0
    _, pts, w = _integration_nodes(v, D, rule or FD_RULE, region)
    return float(_fd_terms(phi, p, q, v, pts, w, step)[0])


def pairing(phi: MapField, p: float, q: float, v: VariationField, pts: np.ndarray,
            weights: np.ndarray, order: int = DEFAULT_ORDER) -> float:
    """``-sum_k w_k h(v, tau_pq) sqrt(det g)`` over the given nodes."""

    def integrand(chunk):
        s = MapJets.at(phi, chunk, order)
        tpq = s.tau_pq(p, q)
        vv = s.values(v.components(s.X))
        h = s.values(s.h)
        return np.einsum("ab...,a...,b...->...", h, vv, tpq) * np.sqrt(s.values(s.gdet))

    if v.is_zero or pts.shape[1] == 0:
        return 0.0
    return float(-np.sum(weights * _chunked(integrand, pts)))


def ball_rules(nodes: int = DEFAULT_NODES) -> tuple:
    """``(fd_rule, pairing_rule)`` derived from a nodes-per-axis budget.

    The energy difference involves second derivatives of ``v`` and cancels
    heavily, so it needs a finer radial rule than the pairing, whose
    integrand only contains ``v``.
    """
    ang = max(4, (3 * nodes) // 8)
    return BallRule(3 * nodes, ang), BallRule(int(np.ceil(1.5 * nodes)), ang)


FD_RULE, PAIRING_RULE = ball_rules(DEFAULT_NODES)
DEFAULT_AMPLITUDE = 2e-4


def random_bump(D: BoxDomain, target_dim: int, rng: np.random.Generator,
                radius: tuple = (0.15, 0.3), amplitude: float = DEFAULT_AMPLITUDE) -> VariationField:
    """Seeded bump with radius drawn from ``radius``, a ball inside ``D`` and ``|direction| = amplitude``.

    Only ``step * amplitude`` matters to the finite difference.  The bump's
    second derivatives are large, so the O(t^4) Richardson remainder grows
    like the fourth power of the amplitude; the small default keeps it below
    the quadrature error for ``q > 2``, where ``|tau_p|^q`` is least smooth.
    """
    width = min(np.subtract(D.upper, D.lower))
    r = float(rng.uniform(*radius)) * min(1.0, width)
    margin = r * (1 + 1e-3)
    center = rng.uniform(np.add(D.lower, margin), np.subtract(D.upper, margin))
    d = rng.normal(size=target_dim)
    d *= amplitude / np.linalg.norm(d)
    return make_bump(D, center, r, d)


@dataclass
class VariationReport:
    fd: float
    pairing: float
    residual: float
    relative: float
    scale: float
    nodes: int
    step: float
    box: BoxDomain
    n_support_nodes: int = 0
    extra: dict = field(default_factory=dict)


def variation_residual(phi: MapField, p: float, q: float, v: VariationField, D: BoxDomain,
                       rule=None, step: float = DEFAULT_STEP, region: str = "support",
                       order: int = DEFAULT_ORDER, pairing_rule=None) -> VariationReport:
    """Compare the finite-difference first variation with the (p,q)-tension pairing.

    ``relative`` is ``|fd - pairing|`` divided by the largest of ``|fd|``,
    ``|pairing|`` and ``VANISHING_FLOOR * scale``, where ``scale`` is the
    quadrature of the absolute pointwise change of the energy density (the
    size of what the integration by parts cancels).  The floor only takes
    over when the first variation is below ``VANISHING_FLOOR`` of that gross
    change, as it is for (p,q)-harmonic maps, where a plain ratio of two
    vanishing numbers would be meaningless.

    ``rule`` and ``pairing_rule`` are a :class:`BallRule` (default, support
    region) or a :class:`QuadratureRule`; ``region="domain"`` integrates over
    all of ``D`` with a box rule, which is slower but independent of the
    support bookkeeping.
    """
    _check_exponents(p, q)
    if region == "domain":
        rule = rule if isinstance(rule, QuadratureRule) else QuadratureRule()
        pairing_rule = rule
    else:
        rule = rule or FD_RULE
        pairing_rule = pairing_rule or (PAIRING_RULE if isinstance(rule, BallRule) else rule)
    box, pts, w = _integration_nodes(v, D, rule, region)
    if v.is_zero:
        return VariationReport(0.0, 0.0, 0.0, 0.0, 0.0, _rule_size(rule), step, box, pts.shape[1])
    fd, scale = _fd_terms(phi, p, q, v, pts, w, step)
    _, ppts, pw = _integration_nodes(v, D, pairing_rule, region)
    pr = pairing(phi, p, q, v, ppts, pw, order)
    res = float(fd - pr)
    denom = max(abs(fd), abs(pr), VANISHING_FLOOR * scale)
    rel = abs(res) / denom if denom > 0 else 0.0
    return VariationReport(float(fd), pr, res, rel, float(scale), _rule_size(rule), step, box,
                           pts.shape[1], {"pairing_nodes": int(ppts.shape[1])})
