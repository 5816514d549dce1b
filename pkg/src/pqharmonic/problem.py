"""User-supplied problems: metrics and maps written as arithmetic expressions.

A problem file is INI-style::

    [params]
    p = 3
    q = 2

    [metric.source]
    vars = x, y, z
    conformal = (x^2 + y^2)^(-1/p)
    guard = x^2 + y^2

    [metric.target]
    vars = u, v

    [map]
    u = (x^2 + y^2)^0.5
    v = z

Metric sections take either ``conformal = f`` (the metric ``f * delta``) or
components ``gIJ = expr`` with 1-based indices (``g12`` also sets ``g21``;
unset off-diagonal entries are 0).  A section with only ``vars`` is the
Euclidean metric.  ``guard`` is a comma-separated list of expressions that
must all be positive on the chart.  Expressions use ``+ - * / ^``,
parentheses, real constants, the chart variables and the names from
``[params]``.
"""
from __future__ import annotations

import ast
import configparser
import operator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ProblemParseError
from .geometry import MetricField
from .jets import Jet
from .pullback import MapField

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
}


def _power(a, b):
    if isinstance(b, Jet) or (not np.isscalar(b) and np.ndim(b) > 0):
        raise ProblemParseError("exponents must be constant")
    b = float(b)
    if isinstance(a, Jet):
        return a ** (int(b) if b.is_integer() else b)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.power(np.asarray(a, dtype=float), b)


@dataclass(frozen=True)
class Expression:
    """A parsed arithmetic expression; call it with a variable environment."""

    text: str
    tree: ast.AST
    names: frozenset

    def __call__(self, env: dict):
        return self._eval(self.tree.body, env)

    def _eval(self, node, env):
        if isinstance(node, ast.BinOp):
            a, b = self._eval(node.left, env), self._eval(node.right, env)
            if isinstance(node.op, ast.Pow):
                return _power(a, b)
            return _BINOPS[type(node.op)](a, b)
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, env)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id]
        raise ProblemParseError(f"unsupported syntax in {self.text!r}")  # pragma: no cover

    def is_constant(self, variables) -> bool:
        return not (self.names & set(variables))


def parse_expression(text: str, allowed: set | None = None, variables=()) -> Expression:
    """Parse ``text`` over the names in ``allowed`` (any names if ``None``).

    Exponents may not reference any of ``variables``.
    """
    src = text.strip().replace("^", "**")
    if not src:
        raise ProblemParseError("empty expression")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ProblemParseError(f"cannot parse {text!r}: {exc.msg}") from None
    names = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.Name):
            names.add(node.id)
        elif isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ProblemParseError(f"only real constants are allowed in {text!r}")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS and not isinstance(node.op, ast.Pow):
                raise ProblemParseError(f"operator not allowed in {text!r}")
            if isinstance(node.op, ast.Pow):
                inner = {n.id for n in ast.walk(node.right) if isinstance(n, ast.Name)}
                if inner & set(variables):
                    raise ProblemParseError(f"exponents must be constant in {text!r}")
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.USub, ast.UAdd)):
                raise ProblemParseError(f"operator not allowed in {text!r}")
        elif not isinstance(node, (ast.Expression, ast.Load, ast.operator, ast.unaryop)):
            raise ProblemParseError(f"unsupported syntax in {text!r}")
    if allowed is not None and not names <= set(allowed):
        bad = ", ".join(sorted(names - set(allowed)))
        raise ProblemParseError(f"unknown name(s) {bad} in {text!r}")
    return Expression(text.strip(), tree, frozenset(names))


@dataclass(frozen=True)
class Problem:
    source: MetricField
    target: MetricField
    map: MapField
    source_vars: tuple
    target_vars: tuple
    params: dict = field(default_factory=dict)


def _names(raw: str) -> tuple:
    names = tuple(v.strip() for v in raw.split(",") if v.strip())
    if not names:
        raise ProblemParseError("'vars' must list at least one variable")
    for v in names:
        if not v.isidentifier():
            raise ProblemParseError(f"invalid variable name {v!r}")
    if len(set(names)) != len(names):
        raise ProblemParseError("duplicate variable names")
    return names


def _env(variables, coords, params):
    env = dict(params)
    env.update(zip(variables, coords))
    return env


def _metric(sec, params: dict, label: str) -> tuple:
    if "vars" not in sec:
        raise ProblemParseError(f"[{label}] needs a 'vars' line")
    variables = _names(sec["vars"])
    allowed = set(variables) | set(params)
    m = len(variables)
    keys = [k for k in sec if k not in ("vars", "guard")]
    guard = None
    if "guard" in sec:
        conds = [parse_expression(t, allowed, variables) for t in sec["guard"].split(",") if t.strip()]

        def guard(coords):
            env = _env(variables, coords, params)
            ok = True
            for c in conds:
                with np.errstate(invalid="ignore"):
                    ok = np.logical_and(ok, np.asarray(c(env)) > 0)
            return ok

    if keys == ["conformal"]:
        factor = parse_expression(sec["conformal"], allowed, variables)

        def components(coords):
            f = factor(_env(variables, coords, params))
            return [[f if i == j else 0.0 for j in range(m)] for i in range(m)]

        return variables, MetricField(m, components, guard, label)

    entries = {}
    for k in keys:
        if k == "conformal":
            raise ProblemParseError(f"[{label}] mixes 'conformal' with components")
        if len(k) != 3 or k[0] != "g" or not k[1:].isdigit():
            raise ProblemParseError(f"[{label}] unknown key {k!r}")
        i, j = int(k[1]) - 1, int(k[2]) - 1
        if not (0 <= i < m and 0 <= j < m):
            raise ProblemParseError(f"[{label}] index out of range in {k!r}")
        if (j, i) in entries and i != j:
            raise ProblemParseError(f"[{label}] both {k} and g{j + 1}{i + 1} given")
        entries[(i, j)] = parse_expression(sec[k], allowed, variables)
    if not entries:

        def components(coords):
            return [[1.0 if i == j else 0.0 for j in range(m)] for i in range(m)]

        return variables, MetricField(m, components, guard, label)
    missing = [i for i in range(m) if (i, i) not in entries]
    if missing:
        raise ProblemParseError(f"[{label}] missing diagonal component g{missing[0] + 1}{missing[0] + 1}")

    def components(coords):
        env = _env(variables, coords, params)
        mat = [[0.0] * m for _ in range(m)]
        for (i, j), e in entries.items():
            mat[i][j] = mat[j][i] = e(env)
        return mat

    return variables, MetricField(m, components, guard, label)


def parse_problem(text: str, overrides: dict | None = None) -> Problem:
    """Build a :class:`Problem` from problem-file text.

    ``overrides`` replace entries of ``[params]`` (the CLI passes ``p`` and
    ``q`` this way) before any expression is evaluated.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ProblemParseError(f"malformed problem file: {exc}") from None
    for sec in ("metric.source", "metric.target", "map"):
        if not cp.has_section(sec):
            raise ProblemParseError(f"missing section [{sec}]")
    params = {}
    if cp.has_section("params"):
        for k, v in cp["params"].items():
            if not k.isidentifier():
                raise ProblemParseError(f"invalid parameter name {k!r}")
            try:
                params[k] = float(v)
            except ValueError:
                raise ProblemParseError(f"parameter {k} must be a number, got {v!r}") from None
    params.update({k: float(v) for k, v in (overrides or {}).items() if v is not None})

    svars, source = _metric(cp["metric.source"], params, "metric.source")
    tvars, target = _metric(cp["metric.target"], params, "metric.target")
    if set(svars) & set(params) or set(tvars) & set(params):
        raise ProblemParseError("variable names clash with parameter names")

    sec = cp["map"]
    unknown = set(sec) - set(tvars)
    if unknown:
        raise ProblemParseError(f"[map] components for unknown target variable(s) {sorted(unknown)}")
    missing = [v for v in tvars if v not in sec]
    if missing:
        raise ProblemParseError(f"[map] missing component for {missing[0]}")
    allowed = set(svars) | set(params)
    comps = [parse_expression(sec[v], allowed, svars) for v in tvars]

    def components(coords):
        env = _env(svars, coords, params)
        return [c(env) for c in comps]

    phi = MapField(components, source, target, "problem map")
    return Problem(source, target, phi, svars, tvars, params)


def load_problem(path, overrides: dict | None = None) -> Problem:
    """Read and parse a problem file; I/O errors propagate as ``OSError``."""
    return parse_problem(Path(path).read_text(encoding="utf-8"), overrides)
