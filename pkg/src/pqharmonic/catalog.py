"""The three worked examples with their closed-form values, and the s-scan.

* cylinder: ``(R^2 minus 0) x R`` with ``g = (x^2+y^2)^(-1/p) delta``,
  ``phi(x, y, z) = (sqrt(x^2+y^2), z)`` into flat ``R^2``;
* hyperbolic: ``x4 > 0`` with ``g = x4^(-2/p) delta``, identity into flat
  ``R^4`` (closed forms require ``p > 4``);
* power: ``phi(x, y) = (x^s, 0)`` between flat planes.

Each case bundles its map builder, recommended box, parameter predicate and
expected-value functions.  Expected values take a batch of points of shape
``(m, *batch)`` and return arrays shaped like the computed quantities.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import bisect, minimize_scalar

from .errors import ParameterError
from .functionals import BoxDomain
from .geometry import conformal_metric, euclidean_metric
from .jets import jet_pow_real
from .pullback import MapField, _check_exponents, pq_tension

DEFAULT_SEED = 1729
PROBE_X = 1.5
SCAN_XTOL = 1e-8


@dataclass(frozen=True)
class ExampleCase:
    """One worked example.

    ``make_map(p)`` builds the map for energy exponent ``p`` (the source
    metric of the cylinder and hyperbolic cases depends on it).  The
    ``expected_*`` entries are ``None`` when no closed form is available.
    """

    name: str
    make_map: Callable
    domain: BoxDomain
    valid: Callable
    expected_W: Callable | None = None
    expected_weight: Callable | None = None
    expected_tau_p: Callable | None = None
    expected_tau_pq: Callable | None = None
    params: dict = field(default_factory=dict)

    def check(self, p: float, q: float) -> None:
        ok, reason = self.valid(p, q)
        if not ok:
            raise ParameterError(f"{self.name}: {reason}")

    def map(self, p: float | None = None) -> MapField:
        if p is None:
            p = self.params.get("p")
            if p is None:
                raise ParameterError(f"{self.name}: exponent p required")
        return self.make_map(p)

    @property
    def source_dim(self) -> int:
        return self.domain.dim


def _standard_range(p, q):
    if p < 2 or (q is not None and q < 2):
        return False, "exponents must satisfy p, q >= 2"
    return True, ""


def _axis_field(value, batch_shape, n: int, axis: int) -> np.ndarray:
    out = np.zeros((n,) + batch_shape)
    out[axis] = value
    return out


def _batch(x) -> tuple:
    return np.asarray(x, dtype=float).shape[1:]


# --------------------------------------------------------------------------
# cylinder


def cylinder_map(p: float) -> MapField:
    source = conformal_metric(
        3,
        lambda c: jet_pow_real(c[0] * c[0] + c[1] * c[1], -1.0 / p),
        lambda c: c[0] ** 2 + c[1] ** 2 > 0,
        f"cylinder(p={p:g})",
    )

    def components(c):
        return [jet_pow_real(c[0] * c[0] + c[1] * c[1], 0.5), c[2]]

    return MapField(components, source, euclidean_metric(2), "cylinder")


def example_cylinder() -> ExampleCase:
    def tau_p_const(p):
        return 2.0 ** ((p - 2) / 2) * (2.0 - 3.0 / p)

    def W(p, q, x):
        return _axis_field(tau_p_const(p) ** (q - 1), _batch(x), 2, 0)

    def weight(p, q, x):
        return np.full(_batch(x), tau_p_const(p) ** (q - 2))

    def tau_p(p, x):
        return _axis_field(tau_p_const(p), _batch(x), 2, 0)

    def tau_pq(p, q, x):
        return np.zeros((2,) + _batch(x))

    return ExampleCase(
        "cylinder",
        cylinder_map,
        BoxDomain((0.5, 0.5, -0.5), (1.5, 1.5, 0.5)),
        _standard_range,
        W,
        weight,
        tau_p,
        tau_pq,
    )


# --------------------------------------------------------------------------
# hyperbolic space


def hyperbolic_map(p: float) -> MapField:
    source = conformal_metric(
        4, lambda c: jet_pow_real(c[3], -2.0 / p), lambda c: c[3] > 0, f"hyperbolic(p={p:g})"
    )
    return MapField(lambda c: list(c), source, euclidean_metric(4), "hyperbolic identity")


def _hyperbolic_range(p, q):
    ok, reason = _standard_range(p, q)
    if ok and not p > 4:
        return False, "p>4 required"
    return ok, reason


def example_hyperbolic(p: float | None = None) -> ExampleCase:
    """Hyperbolic example; ``p``, when given, must exceed 4 and becomes the default."""
    if p is not None:
        ok, reason = _hyperbolic_range(p, None)
        if not ok:
            raise ParameterError(f"hyperbolic: {reason}")

    def W(p, q, x):
        c = 2.0 ** ((p - 2) * (q - 1)) * p ** (1 - q) * (p - 4) ** (q - 1)
        return _axis_field(c, _batch(x), 4, 3)

    def weight(p, q, x):
        c = 2.0 ** ((p - 2) * (q - 2)) * p ** (2 - q) * (p - 4) ** (q - 2)
        return np.full(_batch(x), c)

    def tau_p(p, x):
        return W(p, 2, x)

    def tau_pq(p, q, x):
        return np.zeros((4,) + _batch(x))

    return ExampleCase(
        "hyperbolic",
        hyperbolic_map,
        BoxDomain((-0.5, -0.5, -0.5, 0.5), (0.5, 0.5, 0.5, 1.5)),
        _hyperbolic_range,
        W,
        weight,
        tau_p,
        tau_pq,
        {} if p is None else {"p": float(p)},
    )


# --------------------------------------------------------------------------
# power maps


def power_map(s: float) -> MapField:
    source = conformal_metric(2, lambda c: 1.0, lambda c: c[0] > 0, "plane (x > 0)")
    return MapField(lambda c: [c[0] ** s, 0.0], source, euclidean_metric(2), f"power(s={s:g})")


def _signed_power(c: float, e: float) -> float:
    return float(np.sign(c) * abs(c) ** e)


def power_tau_p_coefficient(s: float, p: float) -> tuple:
    """``(c, e)`` with ``tau_p = c x^e d_u``; reduces to ``s^(p-1)(ps-p-s+1)`` for ``s > 0``."""
    return abs(s) ** (p - 2) * s * (p - 1) * (s - 1), p * s - p - s


def power_tau_pq_coefficient(s: float, p: float, q: float) -> tuple:
    """``(C, e)`` with ``tau_pq = C x^e d_u``.

    For ``s > 1`` this is
    ``-(p-1)(q-1)(ps-p-s)(pqs-pq-qs-s+1)(ps-p-s+1)^(q-1) s^(p-2+(p-1)(q-1))``
    with ``e = pqs-pq-qs-s``; the form below keeps the signs right for all ``s``.
    """
    c, e = power_tau_p_coefficient(s, p)
    m = e * (q - 1)
    n = q * e + 1 - s
    # at the critical exponents a factor is zero up to rounding; make it exact
    m = 0.0 if abs(m) < 1e-12 else m
    n = 0.0 if abs(n) < 1e-12 else n
    C = -(p - 1) * abs(s) ** (p - 2) * _signed_power(c, q - 1) * m * n
    return C, n - 1


def example_power(s: float) -> ExampleCase:
    if s == 1:
        raise ParameterError("power example requires s != 1")
    s = float(s)

    def x0(x):
        return np.asarray(x, dtype=float)[0]

    def tau_p(p, x):
        c, e = power_tau_p_coefficient(s, p)
        return _axis_field(c * x0(x) ** e, _batch(x), 2, 0)

    def W(p, q, x):
        c, e = power_tau_p_coefficient(s, p)
        return _axis_field(_signed_power(c, q - 1) * x0(x) ** (e * (q - 1)), _batch(x), 2, 0)

    def weight(p, q, x):
        c, e = power_tau_p_coefficient(s, p)
        return abs(c) ** (q - 2) * x0(x) ** (e * (q - 2))

    def tau_pq(p, q, x):
        C, e = power_tau_pq_coefficient(s, p, q)
        return _axis_field(C * x0(x) ** e, _batch(x), 2, 0)

    return ExampleCase(
        f"power(s={s:g})",
        lambda p=None: power_map(s),
        BoxDomain((0.5, -0.5), (2.0, 0.5)),
        _standard_range,
        W,
        weight,
        tau_p,
        tau_pq,
        {"s": s},
    )


def catalog_cases(s: float = 2.4, hyperbolic_p: float | None = None) -> list:
    return [example_cylinder(), example_hyperbolic(hyperbolic_p), example_power(s)]


def sample_points(D: BoxDomain, n: int = 10, seed: int = DEFAULT_SEED) -> np.ndarray:
    """``n`` pseudo-random points of ``D`` as an array ``(m, n)``."""
    rng = np.random.default_rng(seed)
    return rng.uniform(D.lower, D.upper, size=(n, D.dim)).T


# --------------------------------------------------------------------------
# critical exponents of the power family


def critical_s(p: float, q: float) -> tuple:
    """Closed-form critical exponents ``(p/(p-1), (pq-1)/(pq-q-1))``."""
    _check_exponents(p, q)
    den = p * q - q - 1
    if den == 0 or p == 1:
        raise ParameterError("critical exponent denominator vanishes")
    return p / (p - 1), (p * q - 1) / den


@dataclass
class ScanResult:
    """Sign-change roots and touching zeros of ``s -> tau_pq`` at the probe point."""

    roots: list
    touching: list
    samples: np.ndarray
    values: np.ndarray

    def __iter__(self):
        return iter(self.roots)

    def __len__(self):
        return len(self.roots)


def power_tau_pq_u(s: float, p: float, q: float, x: float = PROBE_X) -> float:
    """u-component of the computed (p,q)-tension of ``x -> x^s`` at ``(x, 0)``."""
    return float(pq_tension(power_map(s), p, q, [x, 0.0])[0])


def scan_critical_s(p: float, q: float, interval, samples: int = 64,
                    x: float = PROBE_X, touch_tol: float = 1e-8) -> ScanResult:
    """Locate the exponents ``s`` with ``tau_pq(x^s) = 0`` numerically.

    Samples the u-component of the computed tension on a uniform grid,
    brackets sign changes and refines each by bisection to ``|ds| <= 1e-8``.
    Interior local minima of ``|f|`` without a sign change are refined by a
    bounded minimisation and reported in ``touching`` when the minimum is
    below ``touch_tol`` (relative to the sampled magnitude).
    """
    _check_exponents(p, q)
    lo, hi = (float(v) for v in interval)
    if not lo < hi:
        raise ParameterError(f"empty scan interval [{lo}, {hi}]")
    if lo <= 1.0 <= hi:
        raise ParameterError("scan interval must exclude s = 1")
    if samples < 16:
        raise ParameterError("at least 16 samples are required")

    def f(s):
        return power_tau_pq_u(s, p, q, x)

    grid = np.linspace(lo, hi, samples)
    vals = np.array([f(s) for s in grid])
    roots = []
    for k in range(samples - 1):
        a, b = vals[k], vals[k + 1]
        if a == 0.0:
            roots.append(float(grid[k]))
        elif a * b < 0:
            roots.append(float(bisect(f, grid[k], grid[k + 1], xtol=SCAN_XTOL)))
    if vals[-1] == 0.0:
        roots.append(float(grid[-1]))

    touching = []
    mag = np.abs(vals)
    scale = max(float(np.max(mag)), 1.0)
    for k in range(1, samples - 1):
        if vals[k - 1] * vals[k] <= 0 or vals[k] * vals[k + 1] <= 0:
            continue
        if mag[k] <= mag[k - 1] and mag[k] <= mag[k + 1]:
            res = minimize_scalar(lambda s: abs(f(s)), bounds=(grid[k - 1], grid[k + 1]),
                                  method="bounded", options={"xatol": SCAN_XTOL})
            if res.fun <= touch_tol * scale:
                touching.append(float(res.x))
    return ScanResult(roots, touching, grid, vals)
