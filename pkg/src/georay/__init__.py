"""Geodesic tracing over pluggable Riemannian metrics.

Two integrators trace the same curves: ``alpha_form`` steps the chart-unit
direction by the transverse gradient of the local line-element scale, and
``christoffel`` integrates the classical second-order equation.  Around them
sit the differential-frame algebra, wavefront checks and a CLI.
"""

from .frames import (
    FrameField,
    ScalarField,
    derivative_vector,
    directional_derivative,
    frame_from_matrix,
    frame_from_metric,
    gradient_align,
    gradient_square,
    metric_from_frame,
    rotate_frame,
)
from .geodesic import (
    ALPHA_FORM,
    CHRISTOFFEL,
    GeodesicTrace,
    RayState,
    alpha,
    alpha_gradient,
    compare_traces,
    convergence_study,
    step_alpha_form,
    step_christoffel,
    trace,
    trace_many,
)
from .metric import (
    Domain,
    DomainError,
    MetricField,
    builtin_metric,
    christoffel,
    constant_metric,
    eval_metric,
    line_element_sq,
    metric_derivatives,
)
from .wavefront import (
    equal_increment_check,
    gradient_alignment_check,
    huygens_tangency_check,
    level_set,
    pair_turning_rate,
    trace_fan,
)

__version__ = "0.1.0"
