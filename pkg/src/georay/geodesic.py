"""Geodesic tracing in two formulations.

``alpha_form``
    First-order system in the chart arclength ``r`` (``sum dx^2 = dr^2``)::

        dx/dr = u,   du/dr = (g - (g.u) u) / alpha,   dS/dr = alpha

    where ``alpha(x, u) = sqrt(u^T rho(x) u)`` and ``g`` is the spatial gradient
    of ``alpha`` at fixed ``u``.  The transverse part of ``g`` turns the ray
    toward larger ``alpha``.

``christoffel``
    ``x'' + Gamma(x', x') = 0`` in metric arclength ``S`` with unit metric
    speed.

Both are integrated with fixed-step RK4 over batches of rays, renormalizing
the direction after every step.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .metric import (
    DomainError,
    IllConditionedMetricError,
    MetricField,
    christoffel_from,
    finite_difference_derivative,
)

ALPHA_FORM = "alpha_form"
CHRISTOFFEL = "christoffel"
FORMS = (ALPHA_FORM, CHRISTOFFEL)

UNIT_TOL = 1e-9
CHUNK = 32
MAX_STEPS = 5_000_000


class DomainExitError(DomainError):
    """A step left the metric's domain; ``point`` is the offending stage point."""


@dataclass(frozen=True)
class RayState:
    x: np.ndarray
    u: np.ndarray
    r: float = 0.0
    S: float = 0.0


@dataclass
class GeodesicTrace:
    """Samples of one geodesic; arrays are indexed by step number."""

    label: str
    form: str
    h: float
    r: np.ndarray
    S: np.ndarray
    x: np.ndarray
    u: np.ndarray
    alpha: np.ndarray
    exited: bool = False
    exit_point: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.r)

    def __getitem__(self, k: int) -> RayState:
        return RayState(self.x[k].copy(), self.u[k].copy(), float(self.r[k]), float(self.S[k]))

    @property
    def samples(self) -> list[RayState]:
        return [self[k] for k in range(len(self))]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def spline(self) -> CubicHermiteSpline:
        """Cubic Hermite interpolant of ``x(S)`` using ``dx/dS = u / alpha``."""
        keep = np.concatenate([[True], np.diff(self.S) > 1e-14])
        return CubicHermiteSpline(self.S[keep], self.x[keep],
                                  self.u[keep] / self.alpha[keep, None], axis=0)


@dataclass(frozen=True)
class DeviationReport:
    max_distance: float
    max_angle: float
    S_lo: float
    S_hi: float
    n_points: int = 0

    def as_dict(self) -> dict:
        return {"max_distance": self.max_distance, "max_angle": self.max_angle,
                "S_range": [self.S_lo, self.S_hi], "n_points": self.n_points}


# ---------------------------------------------------------------------------
# batched kernels


def _metric_and_derivs(m: MetricField, x: np.ndarray):
    rho = m._raw(x)
    if m.derivative is not None:
        d = np.asarray(m.derivative(x), dtype=float)
        d = 0.5 * (d + np.swapaxes(d, 1, 2))
    else:
        d, _ = finite_difference_derivative(m, x)
    return rho, d


def _quad(rho: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.einsum("nij,ni,nj->n", rho, u, u)


def _alpha_rhs(m: MetricField, x: np.ndarray, u: np.ndarray):
    rho, d = _metric_and_derivs(m, x)
    a = np.sqrt(_quad(rho, u))
    g = np.einsum("nijk,ni,nj->nk", d, u, u) / (2.0 * a[:, None])
    g_perp = g - np.sum(g * u, axis=1)[:, None] * u
    return u, g_perp / a[:, None], a


def _christoffel_rhs(m: MetricField, x: np.ndarray, v: np.ndarray):
    rho, d = _metric_and_derivs(m, x)
    try:
        gam = christoffel_from(rho, d)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedMetricError(f"singular metric during Christoffel step: {exc}") from None
    acc = -np.einsum("niab,na,nb->ni", gam, v, v)
    return v, acc, np.sqrt(np.sum(v * v, axis=1))


_RHS = {ALPHA_FORM: _alpha_rhs, CHRISTOFFEL: _christoffel_rhs}


def _rk4(m: MetricField, form: str, x, w, acc, h):
    """One RK4 step for every row; returns new (x, w, acc, alpha, bad, bad_points)."""
    rhs = _RHS[form]
    n = len(x)
    bad = np.zeros(n, dtype=bool)
    bad_pts = np.full_like(x, np.nan)
    hc = h[:, None]

    def guard(pts):
        inside = m.domain.contains(pts)
        new = ~inside & ~bad
        bad_pts[new] = pts[new]
        bad[:] |= ~inside
        return np.where(inside[:, None], pts, x)

    k1 = rhs(m, x, w)
    p = guard(x + 0.5 * hc * k1[0])
    k2 = rhs(m, p, w + 0.5 * hc * k1[1])
    p = guard(x + 0.5 * hc * k2[0])
    k3 = rhs(m, p, w + 0.5 * hc * k2[1])
    p = guard(x + hc * k3[0])
    k4 = rhs(m, p, w + hc * k3[1])
    x1 = x + hc / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    w1 = w + hc / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    acc1 = acc + h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    x1 = guard(x1)

    rho1 = m._raw(x1)
    if form == ALPHA_FORM:
        w1 = w1 / np.linalg.norm(w1, axis=1)[:, None]
        a1 = np.sqrt(_quad(rho1, w1))
    else:
        w1 = w1 / np.sqrt(_quad(rho1, w1))[:, None]
        a1 = 1.0 / np.linalg.norm(w1, axis=1)
    finite = np.isfinite(a1) & np.all(np.isfinite(w1), axis=1) & np.isfinite(acc1)
    newly = ~finite & ~bad
    bad_pts[newly] = x1[newly]
    bad |= ~finite
    return x1, w1, acc1, a1, bad, bad_pts


def _initial(m: MetricField, x0: np.ndarray, u0: np.ndarray, form: str):
    inside = m.domain.contains(x0)
    if not np.all(inside):
        p = x0[np.argmin(inside)]
        raise DomainError(p, m.domain.first_violation(p))
    norms = np.linalg.norm(u0, axis=1)
    if np.any(~(norms > 0)):
        raise ValueError("initial direction must be nonzero")
    u = u0 / norms[:, None]
    a = np.sqrt(_quad(m._raw(x0), u))
    w = u if form == ALPHA_FORM else u / a[:, None]
    return u, w, a


def _integrate(m: MetricField, x0: np.ndarray, u0: np.ndarray, form: str, h: float,
               limit_kind: str, limit: float, max_steps: int = MAX_STEPS) -> list[dict]:
    n = len(x0)
    u, w, a = _initial(m, x0, u0, form)
    x = x0.copy()
    param = np.zeros(n)
    acc = np.zeros(n)
    # the limit is on the integration parameter (r for alpha_form, S for christoffel)
    on_param = (form == ALPHA_FORM) == (limit_kind == "r")

    xs, ws, params, accs, alphas = [x.copy()], [w.copy()], [param.copy()], [acc.copy()], [a.copy()]
    counts = np.ones(n, dtype=int)
    active = np.ones(n, dtype=bool)
    exited = np.zeros(n, dtype=bool)
    exit_pts = np.full_like(x, np.nan)
    k = 0
    while active.any():
        if k >= max_steps:
            raise RuntimeError(f"trace did not reach its limit within {max_steps} steps")
        idx = np.flatnonzero(active)
        final = np.zeros(idx.size, dtype=bool)
        if on_param:
            remaining = limit - k * h
            if remaining <= 1e-12 * max(limit, h):
                active[idx] = False
                break
            step = min(h, remaining)
            hv = np.full(idx.size, step)
            if step < h or (k + 1) * h >= limit * (1 - 1e-13):
                final[:] = True
            x1, w1, acc1, a1, bad, bpts = _rk4(m, form, x[idx], w[idx], acc[idx], hv)
            p1 = np.full(idx.size, limit if final.all() else (k + 1) * h)
        else:
            hv = np.full(idx.size, h)
            x1, w1, acc1, a1, bad, bpts = _rk4(m, form, x[idx], w[idx], acc[idx], hv)
            # landing within rounding of the limit counts as reaching it
            landed = ~bad & (np.abs(acc1 - limit) <= 1e-12 * max(limit, 1.0))
            final[landed] = True
            over = ~bad & ~landed & (acc1 > limit)
            if over.any():
                sub = np.flatnonzero(over)
                xs_, ws_, as_, a_sub, hp = _partial(m, form, x[idx[sub]], w[idx[sub]],
                                                    acc[idx[sub]], acc1[sub], h, limit)
                x1[sub], w1[sub], acc1[sub], a1[sub] = xs_, ws_, as_, a_sub
                final[sub] = True
                p1 = (k * h + np.where(over, 0.0, h))
                p1[sub] = k * h + hp
            else:
                p1 = np.full(idx.size, (k + 1) * h)
        if bad.any():
            gone = idx[bad]
            exited[gone] = True
            exit_pts[gone] = bpts[bad]
            active[gone] = False
        good = ~bad
        gi = idx[good]
        x[gi], w[gi], acc[gi], a[gi], param[gi] = x1[good], w1[good], acc1[good], a1[good], p1[good]
        counts[gi] += 1
        active[idx[good & final]] = False
        xs.append(x.copy())
        ws.append(w.copy())
        params.append(param.copy())
        accs.append(acc.copy())
        alphas.append(a.copy())
        k += 1

    X, W = np.stack(xs), np.stack(ws)
    P, A, AL = np.stack(params), np.stack(accs), np.stack(alphas)
    out = []
    for i in range(n):
        c = counts[i]
        wi = W[:c, i]
        if form == ALPHA_FORM:
            r_, S_, ui = P[:c, i], A[:c, i], wi
        else:
            r_, S_ = A[:c, i], P[:c, i]
            ui = wi / np.linalg.norm(wi, axis=1)[:, None]
        out.append(dict(r=r_.copy(), S=S_.copy(), x=X[:c, i].copy(), u=ui.copy(), alpha=AL[:c, i].copy(),
                        exited=bool(exited[i]), exit_point=exit_pts[i].copy() if exited[i] else None))
    return out


def _partial(m, form, x, w, acc, acc_full, h, limit, iters: int = 3):
    """Shortened final step hitting ``acc == limit``, solved by Newton on the step length."""
    hp = h * (limit - acc) / (acc_full - acc)
    for _ in range(iters):
        x1, w1, acc1, a1, bad, _ = _rk4(m, form, x, w, acc, hp)
        rate = a1 if form == ALPHA_FORM else np.linalg.norm(w1, axis=1)
        hp = np.clip(hp + (limit - acc1) / rate, 0.0, h)
    x1, w1, acc1, a1, bad, _ = _rk4(m, form, x, w, acc, hp)
    return x1, w1, acc1, a1, hp


# ---------------------------------------------------------------------------
# public API


def alpha(m: MetricField, x, u) -> float:
    """Stretch factor ``dS/dr`` along the unit chart direction ``u``."""
    x, u = _point_dir(m, x, u)
    return float(np.sqrt(_quad(m.batch(x[None]), u[None]))[0])


def alpha_gradient(m: MetricField, x, u) -> np.ndarray:
    """Spatial gradient of ``alpha(x, u)`` with ``u`` held fixed."""
    x, u = _point_dir(m, x, u)
    m.batch(x[None])
    rho, d = _metric_and_derivs(m, x[None])
    a = np.sqrt(_quad(rho, u[None]))[0]
    return np.einsum("ijk,i,j->k", d[0], u, u) / (2.0 * a)


def transverse_gradient(m: MetricField, x, u) -> np.ndarray:
    g = alpha_gradient(m, x, u)
    u = np.asarray(u, dtype=float)
    return g - (g @ u) * u


def _point_dir(m, x, u):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(u) - 1.0) > UNIT_TOL:
        raise ValueError(f"direction must be a unit vector (|u| = {np.linalg.norm(u):.12g})")
    if not m.domain.contains(x)[0]:
        raise DomainError(x, m.domain.first_violation(x))
    return x, u


def _single_step(m: MetricField, s: RayState, h: float, form: str) -> RayState:
    if not h > 0:
        raise ValueError("step size must be positive")
    x = np.asarray(s.x, dtype=float)[None]
    u = np.asarray(s.u, dtype=float)[None]
    _, w, _ = _initial(m, x, u, form)
    x1, w1, acc1, a1, bad, bpts = _rk4(m, form, x, w, np.array([s.S if form == ALPHA_FORM else s.r]),
                                       np.array([h]))
    if bad[0]:
        raise DomainExitError(bpts[0], m.domain.first_violation(bpts[0]) or 0,
                              f"step left the domain at {bpts[0].tolist()}")
    if form == ALPHA_FORM:
        return RayState(x1[0], w1[0], s.r + h, float(acc1[0]))
    return RayState(x1[0], w1[0] / np.linalg.norm(w1[0]), float(acc1[0]), s.S + h)


def step_alpha_form(m: MetricField, s: RayState, h: float) -> RayState:
    """Advance ``r`` by ``h``; ``S`` gains the Simpson-weighted RK4 integral of ``alpha``."""
    return _single_step(m, s, h, ALPHA_FORM)


def step_christoffel(m: MetricField, s: RayState, h: float) -> RayState:
    """Advance the metric arclength ``S`` by ``h``."""
    return _single_step(m, s, h, CHRISTOFFEL)


def trace_many(m: MetricField, x0s, u0s, form: str = ALPHA_FORM, h: float = 1e-3,
               max_S: Optional[float] = None, max_r: Optional[float] = None,
               threads: int = 1, max_steps: int = MAX_STEPS) -> list[GeodesicTrace]:
    """Trace several geodesics; rays are batched in fixed chunks of ``CHUNK``.

    Chunk composition does not depend on ``threads``, so results are
    bit-identical for any thread count.
    """
    if form not in FORMS:
        raise ValueError(f"unknown formulation {form!r}")
    if not (h > 0 and math.isfinite(h)):
        raise ValueError("step size must be positive and finite")
    if (max_S is None) == (max_r is None):
        raise ValueError("give exactly one of max_S or max_r")
    kind, limit = ("S", max_S) if max_S is not None else ("r", max_r)
    if not (limit > 0 and math.isfinite(limit)):
        raise ValueError("limit must be positive and finite")
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    u0s = np.atleast_2d(np.asarray(u0s, dtype=float))
    if x0s.shape[1] != m.dim or u0s.shape != x0s.shape:
        raise ValueError(f"points and directions must have shape (N, {m.dim})")
    chunks = [slice(i, i + CHUNK) for i in range(0, len(x0s), CHUNK)]

    def run(sl):
        return _integrate(m, x0s[sl], u0s[sl], form, h, kind, limit, max_steps)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(sl) for sl in chunks]
    return [GeodesicTrace(m.label, form, h, **d) for part in parts for d in part]


def trace(m: MetricField, x0, u0, form: str = ALPHA_FORM, h: float = 1e-3,
          max_S: Optional[float] = None, max_r: Optional[float] = None) -> GeodesicTrace:
    """Trace one geodesic until ``max_S`` or ``max_r``, or until it leaves the domain."""
    return trace_many(m, [x0], [u0], form, h, max_S=max_S, max_r=max_r)[0]


def tangent_angle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise angle between vectors, accurate near zero."""
    a = a / np.linalg.norm(a, axis=-1, keepdims=True)
    b = b / np.linalg.norm(b, axis=-1, keepdims=True)
    return 2.0 * np.arctan2(np.linalg.norm(a - b, axis=-1), np.linalg.norm(a + b, axis=-1))


def compare_traces(a: GeodesicTrace, b: GeodesicTrace, S_max: Optional[float] = None) -> DeviationReport:
    """Max chart distance and tangent angle between two traces at equal ``S``.

    Both traces are resampled at the union of their sample ``S`` values with
    cubic Hermite interpolation, so the comparison itself is fourth order.
    """
    lo = max(a.S[0], b.S[0])
    hi = min(a.S[-1], b.S[-1])
    if S_max is not None:
        hi = min(hi, S_max)
    if not hi > lo:
        raise ValueError(f"traces have disjoint S ranges ([{a.S[0]}, {a.S[-1]}] vs [{b.S[0]}, {b.S[-1]}])")
    grid = np.union1d(a.S[(a.S >= lo) & (a.S <= hi)], b.S[(b.S >= lo) & (b.S <= hi)])
    grid = np.union1d(grid, [lo, hi])
    sa, sb = a.spline(), b.spline()
    dist = np.linalg.norm(sa(grid) - sb(grid), axis=1)
    ang = tangent_angle(sa(grid, 1), sb(grid, 1))
    return DeviationReport(float(dist.max()), float(ang.max()), float(lo), float(hi), int(grid.size))


@dataclass
class ConvergenceRow:
    h: float
    max_distance: float
    max_angle: float
    order: Optional[float] = None
    ratio: Optional[float] = None
    plateau: bool = False


@dataclass
class ConvergenceTable:
    label: str
    rows: list[ConvergenceRow] = field(default_factory=list)
    verdict: str = ""

    def as_dict(self) -> dict:
        return {"label": self.label, "verdict": self.verdict,
                "rows": [vars(r) for r in self.rows]}


EXACT_TOL = 1e-12
PLATEAU_RATIO = 0.8


def convergence_study(m: MetricField, x0, u0, steps: Sequence[float], max_S: float) -> ConvergenceTable:
    """Deviation between the two formulations for a sequence of halving steps.

    ``order`` is ``log2(dev(2h) / dev(h))``.  A row is marked ``plateau`` when
    the deviation fails to drop below ``PLATEAU_RATIO`` of the previous one.
    Verdict is ``exact`` (all deviations within ``EXACT_TOL``), ``plateau`` or
    ``converging``.
    """
    steps = [float(s) for s in steps]
    if len(steps) < 3:
        raise ValueError("need at least three step sizes")
    for big, small in zip(steps, steps[1:]):
        if not math.isclose(big, 2 * small, rel_tol=1e-9):
            raise ValueError("each step size must halve the previous one")
    table = ConvergenceTable(m.label)
    for h in steps:
        ta = trace(m, x0, u0, ALPHA_FORM, h, max_S=max_S)
        tb = trace(m, x0, u0, CHRISTOFFEL, h, max_S=max_S)
        rep = compare_traces(ta, tb, S_max=max_S)
        table.rows.append(ConvergenceRow(h, rep.max_distance, rep.max_angle))
    devs = [r.max_distance for r in table.rows]
    if all(d <= EXACT_TOL for d in devs):
        table.verdict = "exact"
        return table
    for prev, row in zip(table.rows, table.rows[1:]):
        if prev.max_distance > 0 and row.max_distance > 0:
            row.ratio = row.max_distance / prev.max_distance
            row.order = math.log2(prev.max_distance / row.max_distance)
            row.plateau = row.ratio > PLATEAU_RATIO
    table.verdict = "plateau" if any(r.plateau for r in table.rows) else "converging"
    return table
