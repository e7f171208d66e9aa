"""Metric fields on coordinate charts.

A :class:`MetricField` evaluates the metric tensor ``rho_ij(x)`` on batches of
points, optionally together with its spatial derivatives.  All callables work
on arrays of shape ``(N, dim)`` and return ``(N, dim, dim)`` (metric) or
``(N, dim, dim, dim)`` (derivatives, index order ``[n, i, j, k]`` for
``d rho_ij / d x_k``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

MAX_DIM = 8
PD_SAMPLES = 32
COND_LIMIT = 1e12

ArrayFn = Callable[[np.ndarray], np.ndarray]


class MetricError(ValueError):
    """Base class for metric construction and evaluation failures."""


class MetricConfigError(MetricError):
    """Unknown builtin name, bad parameters or unreadable grid file."""


class DomainError(MetricError):
    def __init__(self, point, axis: int, message: str | None = None):
        self.point = np.asarray(point, dtype=float).copy()
        self.axis = axis
        super().__init__(message or f"point {self.point.tolist()} outside domain on axis {axis}")


class NotPositiveDefiniteError(MetricError):
    pass


class IllConditionedMetricError(MetricError):
    pass


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box; open bounds unless ``closed`` (grid metrics)."""

    lower: np.ndarray
    upper: np.ndarray
    closed: bool = False

    @classmethod
    def unbounded(cls, dim: int) -> "Domain":
        return cls(np.full(dim, -np.inf), np.full(dim, np.inf))

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.closed:
            inside = (x >= self.lower) & (x <= self.upper)
        else:
            inside = (x > self.lower) & (x < self.upper)
        return np.all(inside, axis=-1) & np.all(np.isfinite(x), axis=-1)

    def first_violation(self, x: np.ndarray) -> Optional[int]:
        x = np.asarray(x, dtype=float)
        for k in range(x.shape[-1]):
            lo, hi = self.lower[k], self.upper[k]
            if not np.isfinite(x[k]):
                return k
            if self.closed and not (lo <= x[k] <= hi):
                return k
            if not self.closed and not (lo < x[k] < hi):
                return k
        return None

    def extent(self) -> np.ndarray:
        ext = self.upper - self.lower
        return np.where(np.isfinite(ext), ext, 1.0)


@dataclass(frozen=True)
class DerivativeInfo:
    method: str  # "analytic" or "finite_difference"
    one_sided: np.ndarray  # (N, dim) bool, axes where a shifted stencil was used


@dataclass(frozen=True, eq=False)
class MetricField:
    """Riemannian metric ``rho(x)`` on a box-shaped chart domain.

    ``evaluate`` and ``derivative`` are vectorized over a leading batch axis.
    Construction checks positive definiteness on ``PD_SAMPLES`` points drawn
    from ``sample_box`` (defaults to the domain, clipped to ``[-1, 1]`` on
    unbounded sides).  With ``debug=True`` every evaluation is checked.
    """

    dim: int
    evaluate: ArrayFn
    derivative: Optional[ArrayFn]
    domain: Domain
    label: str
    h_fd: float = 1e-5
    sample_box: Optional[tuple] = None
    debug: bool = False
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 1 <= self.dim <= MAX_DIM:
            raise MetricConfigError(f"dimension must be in 1..{MAX_DIM}, got {self.dim}")
        pts = sample_points(self, PD_SAMPLES, np.random.default_rng(0))
        _check_positive_definite(self._raw(pts), pts)

    def _raw(self, x: np.ndarray) -> np.ndarray:
        m = np.asarray(self.evaluate(x), dtype=float)
        return 0.5 * (m + np.swapaxes(m, -1, -2))

    def batch(self, x: np.ndarray, check: bool = True) -> np.ndarray:
        """Metric at each row of ``x``; exactly symmetric."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if check:
            _require_inside(self.domain, x)
        m = self._raw(x)
        if self.debug:
            _check_positive_definite(m, x)
        return m

    @property
    def has_analytic_derivative(self) -> bool:
        return self.derivative is not None

    def fd_steps(self) -> np.ndarray:
        return self.h_fd * self.domain.extent()


def _require_inside(domain: Domain, x: np.ndarray) -> None:
    inside = domain.contains(x)
    if not np.all(inside):
        bad = x[np.argmin(inside)]
        raise DomainError(bad, domain.first_violation(bad))


def _check_positive_definite(m: np.ndarray, x: np.ndarray) -> None:
    eig = np.linalg.eigvalsh(m)
    bad = np.flatnonzero(~(eig[:, 0] > 0))
    if bad.size:
        n = bad[0]
        raise NotPositiveDefiniteError(
            f"metric not positive definite at {x[n].tolist()} (min eigenvalue {eig[n, 0]:.3g})"
        )


def sample_points(m: MetricField, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points inside ``m.sample_box`` (or a finite part of the domain)."""
    if m.sample_box is not None:
        lo, hi = (np.asarray(b, dtype=float) for b in m.sample_box)
    else:
        lo = np.where(np.isfinite(m.domain.lower), m.domain.lower, -1.0)
        hi = np.where(np.isfinite(m.domain.upper), m.domain.upper, 1.0)
        # keep strictly inside open bounds
        pad = 1e-3 * (hi - lo)
        lo, hi = lo + pad, hi - pad
    return lo + (hi - lo) * rng.random((count, m.dim))


def eval_metric(m: MetricField, x) -> np.ndarray:
    """``rho(x)`` at a single point."""
    x = np.asarray(x, dtype=float)
    return m.batch(x[None, :])[0]


def line_element_sq(m: MetricField, x, dx) -> float:
    rho = eval_metric(m, x)
    dx = np.asarray(dx, dtype=float)
    return float(dx @ rho @ dx)


def metric_derivatives(m: MetricField, x, full_output: bool = False):
    """``d rho_ij / d x_k`` at a single point, shape ``(dim, dim, dim)``.

    Falls back to central differences when the metric has no analytic
    derivative.  With ``full_output`` a :class:`DerivativeInfo` is returned
    as well, flagging axes that needed a shifted one-sided stencil.
    """
    x = np.asarray(x, dtype=float)
    d, info = derivative_batch(m, x[None, :])
    d = d[0]
    if full_output:
        return d, DerivativeInfo(info.method, info.one_sided[0])
    return d


def derivative_batch(m: MetricField, x: np.ndarray) -> tuple[np.ndarray, DerivativeInfo]:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _require_inside(m.domain, x)
    if m.derivative is not None:
        d = np.asarray(m.derivative(x), dtype=float)
        d = 0.5 * (d + np.swapaxes(d, 1, 2))
        return d, DerivativeInfo("analytic", np.zeros(x.shape, dtype=bool))
    return finite_difference_derivative(m, x)


def finite_difference_derivative(m: MetricField, x: np.ndarray) -> tuple[np.ndarray, DerivativeInfo]:
    """Second-order differences, one-sided where the central stencil leaves the domain."""
    n, dim = x.shape
    steps = m.fd_steps()
    out = np.empty((n, dim, dim, dim))
    one_sided = np.zeros((n, dim), dtype=bool)
    contains = m.domain.contains
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = steps[k]
        fwd, bwd = x + e, x - e
        fwd_ok, bwd_ok = contains(fwd), contains(bwd)
        central = fwd_ok & bwd_ok
        deriv = np.empty((n, dim, dim))
        if np.any(central):
            c = central
            deriv[c] = (m._raw(fwd[c]) - m._raw(bwd[c])) / (2 * steps[k])
        rest = np.flatnonzero(~central)
        for idx in rest:
            p = x[idx]
            if contains(p + 2 * e)[0]:
                deriv[idx] = (-3 * m._raw(p[None])[0] + 4 * m._raw((p + e)[None])[0]
                              - m._raw((p + 2 * e)[None])[0]) / (2 * steps[k])
            elif contains(p - 2 * e)[0]:
                deriv[idx] = (3 * m._raw(p[None])[0] - 4 * m._raw((p - e)[None])[0]
                              + m._raw((p - 2 * e)[None])[0]) / (2 * steps[k])
            else:
                raise DomainError(p, k, f"no finite-difference stencil fits at {p.tolist()} on axis {k}")
            one_sided[idx, k] = True
        out[..., k] = deriv
    out = 0.5 * (out + np.swapaxes(out, 1, 2))
    return out, DerivativeInfo("finite_difference", one_sided)


def christoffel_from(rho: np.ndarray, drho: np.ndarray) -> np.ndarray:
    """Batched ``Gamma[n, i, a, b]`` from metrics ``(N,d,d)`` and derivatives ``(N,d,d,d)``."""
    inv = np.linalg.inv(rho)
    # lowered symbols Gamma_{nu a b} = (d_a rho_{nu b} + d_b rho_{nu a} - d_nu rho_{ab}) / 2
    low = 0.5 * (
        np.transpose(drho, (0, 1, 3, 2))  # [n, nu, a, b] <- d_a rho_{nu b}
        + drho                            # [n, nu, a, b] <- d_b rho_{nu a}
        - np.transpose(drho, (0, 3, 1, 2))  # [n, nu, a, b] <- d_nu rho_{a b}
    )
    gam = np.einsum("niv,nvab->niab", inv, low)
    return 0.5 * (gam + np.swapaxes(gam, 2, 3))


def christoffel(m: MetricField, x) -> np.ndarray:
    """Christoffel symbols of the second kind, ``gamma[i, a, b]``, at one point."""
    x = np.asarray(x, dtype=float)
    rho = eval_metric(m, x)
    cond = np.linalg.cond(rho)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedMetricError(f"metric condition number {cond:.3g} at {x.tolist()}")
    return christoffel_from(rho[None], metric_derivatives(m, x)[None])[0]


# ---------------------------------------------------------------------------
# builtin catalog


def _euclidean(params: dict) -> MetricField:
    dim = _int_param(params, "dim")
    scale = _float_param(params, "scale", 1.0)
    _no_extra(params, {"dim", "scale"}, "euclidean")
    if scale <= 0:
        raise MetricConfigError("euclidean: scale must be positive")
    eye = scale * np.eye(dim)

    def evaluate(x):
        return np.broadcast_to(eye, (x.shape[0], dim, dim)).copy()

    def derivative(x):
        return np.zeros((x.shape[0], dim, dim, dim))

    return MetricField(dim, evaluate, derivative, Domain.unbounded(dim), "euclidean",
                       params={"dim": dim, "scale": scale})


def _sphere(params: dict) -> MetricField:
    eps = _float_param(params, "eps_pole", 1e-6)
    _no_extra(params, {"eps_pole"}, "sphere")
    if not 0 < eps < math.pi / 2:
        raise MetricConfigError("sphere: eps_pole must lie in (0, pi/2)")

    def evaluate(x):
        out = np.zeros((x.shape[0], 2, 2))
        out[:, 0, 0] = 1.0
        out[:, 1, 1] = np.sin(x[:, 0]) ** 2
        return out

    def derivative(x):
        out = np.zeros((x.shape[0], 2, 2, 2))
        out[:, 1, 1, 0] = 2 * np.sin(x[:, 0]) * np.cos(x[:, 0])
        return out

    domain = Domain(np.array([eps, -np.inf]), np.array([math.pi - eps, np.inf]))
    box = (np.array([0.2, -math.pi]), np.array([math.pi - 0.2, math.pi]))
    return MetricField(2, evaluate, derivative, domain, "sphere", sample_box=box,
                       params={"eps_pole": eps})


def _poincare(params: dict) -> MetricField:
    if params:
        raise MetricConfigError(f"poincare_half_plane takes no parameters, got {sorted(params)}")

    def evaluate(x):
        out = np.zeros((x.shape[0], 2, 2))
        w = 1.0 / x[:, 1] ** 2
        out[:, 0, 0] = w
        out[:, 1, 1] = w
        return out

    def derivative(x):
        out = np.zeros((x.shape[0], 2, 2, 2))
        dw = -2.0 / x[:, 1] ** 3
        out[:, 0, 0, 1] = dw
        out[:, 1, 1, 1] = dw
        return out

    domain = Domain(np.array([-np.inf, 0.0]), np.array([np.inf, np.inf]))
    box = (np.array([-2.0, 0.5]), np.array([2.0, 3.0]))
    return MetricField(2, evaluate, derivative, domain, "poincare_half_plane", sample_box=box)


def conformal_metric(dim: int, index: ArrayFn, index_grad: Optional[ArrayFn], domain: Domain,
                     label: str, **kw) -> MetricField:
    """``rho = n(x)^2 I`` from a batched refractive index ``n`` and its gradient."""
    eye = np.eye(dim)

    def evaluate(x):
        n = index(x)
        return (n * n)[:, None, None] * eye

    derivative = None
    if index_grad is not None:
        def derivative(x):
            n = index(x)
            g = index_grad(x)  # (N, dim)
            return 2.0 * n[:, None, None, None] * eye[None, :, :, None] * g[:, None, None, :]

    return MetricField(dim, evaluate, derivative, domain, label, **kw)


def _isotropic_index(params: dict) -> MetricField:
    params = dict(params)
    profile = str(params.pop("profile", "gaussian"))
    dim = _int_param(params, "dim", 2)
    if profile == "gaussian":
        amp = _float_param(params, "amplitude")
        width = _float_param(params, "width")
        _no_extra(params, {"dim", "amplitude", "width"}, "isotropic_index")
        if width <= 0 or amp <= -1:
            raise MetricConfigError("isotropic_index: need width > 0 and amplitude > -1")

        def index(x):
            return 1.0 + amp * np.exp(-np.sum(x * x, axis=1) / width**2)

        def index_grad(x):
            e = amp * np.exp(-np.sum(x * x, axis=1) / width**2)
            return (-2.0 / width**2) * e[:, None] * x

        box = (np.full(dim, -3.0 * width), np.full(dim, 3.0 * width))
        return conformal_metric(dim, index, index_grad, Domain.unbounded(dim), "isotropic_index",
                                sample_box=box,
                                params={"profile": profile, "dim": dim, "amplitude": amp, "width": width})
    if profile == "tanh_layer":
        n1 = _float_param(params, "n1")
        n2 = _float_param(params, "n2")
        width = _float_param(params, "width", 0.01)
        axis = _int_param(params, "axis", dim - 1)
        _no_extra(params, {"dim", "n1", "n2", "width", "axis"}, "isotropic_index")
        if min(n1, n2) <= 0 or width <= 0 or not 0 <= axis < dim:
            raise MetricConfigError("isotropic_index tanh_layer: need n1, n2, width > 0 and a valid axis")

        def index(x):
            return n1 + (n2 - n1) * 0.5 * (1.0 + np.tanh(x[:, axis] / width))

        def index_grad(x):
            g = np.zeros_like(x)
            g[:, axis] = (n2 - n1) * 0.5 / (width * np.cosh(x[:, axis] / width) ** 2)
            return g

        return conformal_metric(dim, index, index_grad, Domain.unbounded(dim), "isotropic_index",
                                params={"profile": profile, "dim": dim, "n1": n1, "n2": n2,
                                        "width": width, "axis": axis})
    raise MetricConfigError(f"isotropic_index: unknown profile {profile!r}")


def read_grid(path) -> tuple[list[np.ndarray], np.ndarray]:
    """Parse a ``GRID`` file into axis node arrays and an index array."""
    path = Path(path)
    try:
        tokens = path.read_text().split()
    except OSError as exc:
        raise MetricConfigError(f"cannot read grid file {path}: {exc}") from exc
    if not tokens or tokens[0] != "GRID":
        raise MetricConfigError(f"{path}: missing GRID header")
    try:
        dim = int(tokens[1])
        if not 1 <= dim <= MAX_DIM:
            raise ValueError(f"bad dimension {dim}")
        counts = [int(t) for t in tokens[2:2 + dim]]
        bounds = [float(t) for t in tokens[2 + dim:2 + 3 * dim]]
        values = np.array([float(t) for t in tokens[2 + 3 * dim:]])
    except (IndexError, ValueError) as exc:
        raise MetricConfigError(f"{path}: malformed header or values ({exc})") from exc
    if len(bounds) != 2 * dim or any(c < 2 for c in counts):
        raise MetricConfigError(f"{path}: header needs {dim} counts >= 2 and {2 * dim} bounds")
    if values.size != math.prod(counts):
        raise MetricConfigError(f"{path}: expected {math.prod(counts)} values, found {values.size}")
    if np.any(~np.isfinite(values)) or np.any(values < 0.05):
        raise MetricConfigError(f"{path}: index values must be finite and >= 0.05")
    axes = []
    for k in range(dim):
        lo, hi = bounds[2 * k], bounds[2 * k + 1]
        if not hi > lo:
            raise MetricConfigError(f"{path}: axis {k} has max <= min")
        axes.append(np.linspace(lo, hi, counts[k]))
    return axes, values.reshape(counts)


def _grid_index(params: dict) -> MetricField:
    from scipy.interpolate import RegularGridInterpolator

    params = dict(params)
    if "file" not in params:
        raise MetricConfigError("grid_index: missing required parameter 'file'")
    path = Path(str(params.pop("file")))
    _no_extra(params, set(), "grid_index")
    axes, values = read_grid(path)
    interp = RegularGridInterpolator(axes, values, method="linear")
    dim = len(axes)
    domain = Domain(np.array([a[0] for a in axes]), np.array([a[-1] for a in axes]), closed=True)
    return conformal_metric(dim, lambda x: interp(x), None, domain, "grid_index",
                            params={"file": str(path)})


BUILTINS = {
    "euclidean": _euclidean,
    "sphere": _sphere,
    "poincare_half_plane": _poincare,
    "isotropic_index": _isotropic_index,
    "grid_index": _grid_index,
}


def builtin_metric(name: str, params: Optional[dict] = None) -> MetricField:
    """Construct one of the catalog metrics by name."""
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise MetricConfigError(f"unknown metric {name!r}; choose from {sorted(BUILTINS)}") from None
    return factory(dict(params or {}))


def constant_metric(matrix, label: str = "constant") -> MetricField:
    """Spatially constant metric, handy for straightness checks."""
    rho = np.asarray(matrix, dtype=float)
    dim = rho.shape[0]
    rho = 0.5 * (rho + rho.T)

    def evaluate(x):
        return np.broadcast_to(rho, (x.shape[0], dim, dim)).copy()

    def derivative(x):
        return np.zeros((x.shape[0], dim, dim, dim))

    return MetricField(dim, evaluate, derivative, Domain.unbounded(dim), label)


def _int_param(params: dict, key: str, default=None) -> int:
    if key not in params:
        if default is None:
            raise MetricConfigError(f"missing required parameter {key!r}")
        return default
    v = params[key]
    try:
        ok = not isinstance(v, bool) and float(v).is_integer() and int(v) >= 0
    except (TypeError, ValueError):
        ok = False
    if not ok:
        raise MetricConfigError(f"parameter {key!r} must be a non-negative integer, got {v!r}")
    return int(v)


def _float_param(params: dict, key: str, default=None) -> float:
    if key not in params:
        if default is None:
            raise MetricConfigError(f"missing required parameter {key!r}")
        return float(default)
    try:
        v = float(params[key])
    except (TypeError, ValueError):
        raise MetricConfigError(f"parameter {key!r} must be a number, got {params[key]!r}") from None
    if not math.isfinite(v):
        raise MetricConfigError(f"parameter {key!r} must be finite")
    return v


def _no_extra(params: dict, allowed: set, name: str) -> None:
    extra = set(params) - allowed
    if extra:
        raise MetricConfigError(f"{name}: unknown parameters {sorted(extra)}")
