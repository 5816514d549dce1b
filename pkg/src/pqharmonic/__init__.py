"""Jet-based evaluation of (p,q)-tension fields between Riemannian charts.

The layers build on each other:

* :mod:`.jets`: truncated multivariate Taylor series, batched over points;
* :mod:`.geometry`: metric inverse, Christoffel symbols, curvature;
* :mod:`.pullback`: differential, tension, p-tension and the (p,q)-tension;
* :mod:`.functionals`: energies, bump variations and the first-variation check;
* :mod:`.catalog`: the worked examples and the critical-exponent scan;
* :mod:`.cli`: the ``pqharmonic`` command.
"""

__version__ = "0.1.0"

from .catalog import (
    ExampleCase,
    critical_s,
    example_cylinder,
    example_hyperbolic,
    example_power,
    scan_critical_s,
)
from .errors import (
    DegeneratePointError,
    DomainError,
    InvalidOrderError,
    JetMismatchError,
    MetricError,
    ParameterError,
    PQHarmonicError,
    ProblemParseError,
)
from .functionals import (
    BallRule,
    BoxDomain,
    QuadratureRule,
    VariationField,
    energy_pq,
    first_variation_fd,
    make_bump,
    variation_residual,
)
from .geometry import (
    MetricField,
    OneFormField,
    christoffel,
    conformal_metric,
    div_one_form,
    euclidean_metric,
    grad_scalar,
    hyperbolic_half_plane,
    metric_inverse,
    riemann,
    sectional_curvature,
    sqrt_det,
    stereographic_sphere,
)
from .jets import Jet, jet_arith, jet_pow_real, lift_point, partial
from .pullback import (
    MapField,
    VectorFieldAlongMap,
    bi_p_tension,
    differential,
    energy_density,
    p_bitension,
    p_tension,
    pq_tension,
    pullback_derivative,
    tension,
    theta3_divergence_residual,
    w_field,
)
