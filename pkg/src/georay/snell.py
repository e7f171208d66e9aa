"""Refraction through a smoothed index step, checked against Snell's law."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geodesic import ALPHA_FORM, GeodesicTrace, trace
from .metric import MetricField, builtin_metric

FIT_FRACTION = 0.2


@dataclass
class SnellResult:
    form: str
    n1: float
    n2: float
    incidence_deg: float
    refracted_deg: float
    expected_deg: float
    invariant_drift: float  # max |n(y) u_x - n1 sin(theta1)| along the ray

    @property
    def error_deg(self) -> float:
        return abs(self.refracted_deg - self.expected_deg)

    def as_dict(self) -> dict:
        d = dict(vars(self))
        d["error_deg"] = self.error_deg
        return d


def layered_metric(n1: float, n2: float, width: float = 0.01) -> MetricField:
    """``n(y) = n1 + (n2 - n1)(1 + tanh(y / width)) / 2``."""
    return builtin_metric("isotropic_index", {"profile": "tanh_layer", "n1": n1, "n2": n2, "width": width})


def fitted_angle_deg(tr: GeodesicTrace, fraction: float = FIT_FRACTION) -> float:
    """Angle from the x2 axis of a line fitted through the last ``fraction`` of samples."""
    tail = tr.x[int(len(tr) * (1 - fraction)):]
    centered = tail - tail.mean(axis=0)
    d = np.linalg.svd(centered, full_matrices=False)[2][0]
    if d[1] < 0:
        d = -d
    return math.degrees(math.atan2(abs(d[0]), d[1]))


def snell_experiment(n1: float, n2: float, angle_deg: float, width: float = 0.01, h: float = 1e-4,
                     form: str = ALPHA_FORM, span: float = 0.5) -> tuple[SnellResult, GeodesicTrace]:
    """Launch from ``y = -span`` at ``angle_deg`` from the interface normal and trace through it."""
    if not 0 <= angle_deg < 90:
        raise ValueError("incidence angle must lie in [0, 90) degrees")
    m = layered_metric(n1, n2, width)
    th = math.radians(angle_deg)
    tr = trace(m, [0.0, -span], [math.sin(th), math.cos(th)], form, h, max_r=2.0 * span / math.cos(th))
    sin2 = n1 * math.sin(th) / n2
    expected = math.degrees(math.asin(sin2)) if abs(sin2) <= 1 else float("nan")
    drift = float(np.max(np.abs(tr.alpha * tr.u[:, 0] - n1 * math.sin(th))))
    res = SnellResult(form, n1, n2, angle_deg, fitted_angle_deg(tr), expected, drift)
    return res, tr
