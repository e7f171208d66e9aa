"""Geodesic fans, wavefronts ``S = const`` and Huygens-style checks on them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import brentq

from .frames import frame_from_matrix
from .geodesic import ALPHA_FORM, GeodesicTrace, alpha, alpha_gradient, tangent_angle, trace_many
from .metric import DomainError, MetricField

FULL_CIRCLE = (0.0, 2.0 * math.pi)
MAX_NEIGHBOR_GAP = 0.1
REFUSAL_FRACTION = 0.1


class WavefrontError(ValueError):
    pass


def heading_to_direction(F):
    """Unit chart direction whose angle from the x2 axis is ``F``."""
    F = np.asarray(F, dtype=float)
    return np.stack([np.sin(F), np.cos(F)], axis=-1)


def direction_to_heading(u):
    u = np.asarray(u, dtype=float)
    return np.arctan2(u[..., 0], u[..., 1])


@dataclass
class GeodesicFan:
    metric: MetricField
    source: np.ndarray
    directions: np.ndarray
    traces: list[GeodesicTrace]
    max_S: float
    closed: bool
    headings: Optional[np.ndarray] = None

    @property
    def count(self) -> int:
        return len(self.traces)

    @property
    def flagged(self) -> np.ndarray:
        return np.array([t.exited for t in self.traces])

    @property
    def h(self) -> float:
        return self.traces[0].h

    @property
    def form(self) -> str:
        return self.traces[0].form


@dataclass
class LevelSet:
    S: float
    points: np.ndarray
    rays: np.ndarray
    tangents: np.ndarray
    alphas: np.ndarray
    closed: bool = False


@dataclass(frozen=True)
class PairEstimate:
    lam: float
    dr: float
    estimate: float
    reference: float

    @property
    def error(self) -> float:
        return abs(self.estimate - self.reference)


@dataclass
class TangencyReport:
    S1: float
    S2: float
    tol: float
    tol_polyline: float
    n_rays: int
    penetrations: int
    tangencies: int
    max_penetration: float
    max_touch_gap: float
    discs: list = field(default_factory=list)  # (center, radius) for plotting

    @property
    def passed(self) -> bool:
        return self.penetrations == 0 and self.tangencies == self.n_rays

    def as_dict(self) -> dict:
        d = {k: v for k, v in vars(self).items() if k != "discs"}
        d["passed"] = self.passed
        return d


def trace_fan(m: MetricField, x0, count: int, form: str = ALPHA_FORM, h: float = 1e-3,
              max_S: float = 1.0, window: tuple = FULL_CIRCLE, directions=None,
              seed: int = 0, threads: int = 1) -> GeodesicFan:
    """Launch ``count`` geodesics from ``x0``.

    In 2D headings are evenly spaced over ``window`` (endpoint excluded for a
    full circle).  Other dimensions take explicit ``directions`` or draw
    them from a seeded Gaussian.
    """
    x0 = np.asarray(x0, dtype=float)
    if not m.domain.contains(x0)[0]:
        raise DomainError(x0, m.domain.first_violation(x0))
    headings = None
    closed = False
    if directions is not None:
        dirs = np.atleast_2d(np.asarray(directions, dtype=float))
        dirs = dirs / np.linalg.norm(dirs, axis=1)[:, None]
    elif m.dim == 2:
        if count < 3:
            raise WavefrontError("a 2D fan needs at least 3 rays")
        lo, hi = window
        closed = math.isclose(hi - lo, 2 * math.pi)
        headings = np.linspace(lo, hi, count, endpoint=not closed)
        dirs = heading_to_direction(headings)
    else:
        rng = np.random.default_rng(seed)
        dirs = rng.standard_normal((count, m.dim))
        dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    if len(np.unique(np.round(dirs, 14), axis=0)) != len(dirs):
        raise WavefrontError("launch directions must be pairwise distinct")
    traces = trace_many(m, np.broadcast_to(x0, dirs.shape), dirs, form, h, max_S=max_S, threads=threads)
    return GeodesicFan(m, x0, dirs, traces, max_S, closed, headings)


def _crossing(tr: GeodesicTrace, S: float) -> tuple[int, float]:
    k = int(np.searchsorted(tr.S, S, side="right")) - 1
    k = min(max(k, 0), len(tr.S) - 2)
    dS = tr.S[k + 1] - tr.S[k]
    t = 0.0 if dS <= 0 else (S - tr.S[k]) / dS
    return k, t


def level_set(fan: GeodesicFan, S: float) -> LevelSet:
    """Wavefront ``S = const``: one linearly interpolated point per unflagged ray."""
    rays = [i for i, tr in enumerate(fan.traces) if not tr.exited and tr.S[0] <= S <= tr.S[-1]]
    if not rays:
        raise WavefrontError(f"S = {S} exceeds the range of every ray")
    unflagged = [i for i, tr in enumerate(fan.traces) if not tr.exited]
    if len(rays) != len(unflagged):
        raise WavefrontError(f"S = {S} lies outside the traced range (max_S = {fan.max_S})")
    pts, tan, al = [], [], []
    for i in rays:
        tr = fan.traces[i]
        k, t = _crossing(tr, S)
        pts.append((1 - t) * tr.x[k] + t * tr.x[k + 1])
        u = (1 - t) * tr.u[k] + t * tr.u[k + 1]
        tan.append(u / np.linalg.norm(u))
        al.append((1 - t) * tr.alpha[k] + t * tr.alpha[k + 1])
    closed = fan.closed and len(rays) == fan.count
    return LevelSet(float(S), np.array(pts), np.array(rays), np.array(tan), np.array(al), closed)


def _integral_between(tr: GeodesicTrace, S_a: float, S_b: float) -> float:
    """Integral of ``alpha dr`` between the crossings of ``S_a`` and ``S_b``, from samples only."""
    ka, ta = _crossing(tr, S_a)
    kb, tb = _crossing(tr, S_b)
    r_a = (1 - ta) * tr.r[ka] + ta * tr.r[ka + 1]
    r_b = (1 - tb) * tr.r[kb] + tb * tr.r[kb + 1]
    al_a = (1 - ta) * tr.alpha[ka] + ta * tr.alpha[ka + 1]
    al_b = (1 - tb) * tr.alpha[kb] + tb * tr.alpha[kb + 1]
    if ka == kb:
        return 0.5 * (al_a + al_b) * (r_b - r_a)
    head = 0.5 * (al_a + tr.alpha[ka + 1]) * (tr.r[ka + 1] - r_a)
    tail = 0.5 * (tr.alpha[kb] + al_b) * (r_b - tr.r[kb])
    mid = slice(ka + 1, kb + 1)
    body = simpson(tr.alpha[mid], x=tr.r[mid]) if kb > ka + 1 else 0.0
    return float(head + body + tail)


def equal_increment_check(fan: GeodesicFan, S_a: float, S_b: float) -> float:
    """Max over rays of ``|integral of alpha dr between the two wavefronts - (S_b - S_a)|``."""
    if not S_a < S_b:
        raise WavefrontError("need S_a < S_b")
    worst = 0.0
    for tr in fan.traces:
        if tr.exited:
            continue
        if not (tr.S[0] <= S_a and S_b <= tr.S[-1]):
            raise WavefrontError(f"[{S_a}, {S_b}] outside the traced range of a ray")
        worst = max(worst, abs(_integral_between(tr, S_a, S_b) - (S_b - S_a)))
    return worst


def alpha_max(fan: GeodesicFan, S_hi: Optional[float] = None) -> float:
    vals = [tr.alpha[tr.S <= (S_hi if S_hi is not None else np.inf)].max()
            for tr in fan.traces if not tr.exited]
    return float(max(vals))


def _neighbor_S(tr: GeodesicTrace, spline, p: np.ndarray, u: np.ndarray, S_guess: float):
    """Where ``tr`` crosses the chart line through ``p`` normal to ``u``: returns (offset, S)."""
    def f(s):
        return float((spline(s) - p) @ u)

    k, _ = _crossing(tr, S_guess)
    sgn = np.sign((tr.x - p) @ u)
    change = np.flatnonzero(sgn[:-1] != sgn[1:])
    if change.size == 0:
        raise WavefrontError("neighboring ray never crosses the normal line")
    # the crossing nearest to the neighbor's own wavefront point
    j = change[np.argmin(np.abs(change - k))]
    s = brentq(f, tr.S[j], tr.S[j + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return float((spline(s) - p) @ np.array([-u[1], u[0]])), s


def gradient_alignment_check(fan: GeodesicFan, S: float) -> float:
    """Max angle (radians) between the estimated gradient of ``S`` and the ray tangent.

    At each wavefront point the derivative of ``S`` along the ray is ``alpha``;
    the derivative across the ray comes from a quadratic fit of ``S`` where the
    two neighboring rays cross the chart normal line.  Both the gradient
    (covector) and the tangent are mapped into the local differential frame
    before measuring the angle.
    """
    if fan.metric.dim != 2:
        raise WavefrontError("gradient alignment check is 2D only")
    ls = level_set(fan, S)
    n = len(ls.rays)
    if n < 3:
        raise WavefrontError("need at least three rays")
    gaps = np.linalg.norm(np.diff(ls.points, axis=0), axis=1)
    if ls.closed:
        gaps = np.append(gaps, np.linalg.norm(ls.points[0] - ls.points[-1]))
    if gaps.max() > MAX_NEIGHBOR_GAP:
        raise WavefrontError(f"fan too sparse: neighboring rays {gaps.max():.3g} apart at S = {S}")
    splines = {i: fan.traces[i].spline() for i in ls.rays}
    worst = 0.0
    idx = range(n) if ls.closed else range(1, n - 1)
    for j in idx:
        i = ls.rays[j]
        p, u = ls.points[j], ls.tangents[j]
        nrm = np.array([-u[1], u[0]])
        ts, ss = [0.0], [S]
        for jj in ((j - 1) % n, (j + 1) % n):
            nb = ls.rays[jj]
            t, s = _neighbor_S(fan.traces[nb], splines[nb], p, u, S)
            ts.append(t)
            ss.append(s)
        dSdn = np.polyfit(np.array(ts), np.array(ss), 2)[1]
        a = alpha(fan.metric, p, u)
        grad = a * u + dSdn * nrm
        rho = fan.metric.batch(p[None])[0]
        fr = frame_from_matrix(rho, p)
        g_y = fr.A_star.T @ grad
        t_y = fr.A @ u
        worst = max(worst, float(tangent_angle(g_y, t_y)))
    return worst


def pair_turning_rate(m: MetricField, x, u, lam: float, dr: float) -> PairEstimate:
    """Turning rate from a pair of nearby geodesics separated by ``lam``.

    ``x'`` and ``x''`` sit at ``x +- (lam/2) n`` with ``n`` the chart normal to
    ``u`` pointing up the gradient of ``alpha``; ``x'`` is the one on the
    gradient side, so the estimate is positive.
    """
    if m.dim != 2:
        raise WavefrontError("pair turning rate is defined in 2D")
    if not (lam > 0 and dr > 0):
        raise WavefrontError("lam and dr must be positive")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    a = alpha(m, x, u)
    g = alpha_gradient(m, x, u)
    g_perp = g - (g @ u) * u
    nrm = np.array([-u[1], u[0]])
    if g_perp @ nrm < 0:
        nrm = -nrm
    x1 = x + 0.5 * lam * nrm
    x2 = x - 0.5 * lam * nrm
    for q in (x1, x2):
        if not m.domain.contains(q)[0]:
            raise DomainError(q, m.domain.first_violation(q))
    ratio = alpha(m, x1, u) / alpha(m, x2, u)
    s = dr * (ratio - 1.0) / lam
    if abs(s) > 1:
        raise WavefrontError(f"sin(dF) = {s:.3g} out of range; shrink dr")
    return PairEstimate(lam, dr, math.asin(s) / dr, float(np.linalg.norm(g_perp)) / a)


def pair_convergence(m: MetricField, x, u, lam: float, dr: float, halvings: int = 3) -> list[PairEstimate]:
    """Estimates with ``lam`` and ``dr`` halved together ``halvings`` times."""
    return [pair_turning_rate(m, x, u, lam / 2**k, dr / 2**k) for k in range(halvings + 1)]


def _point_segment_distance(c: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    t = np.clip(np.sum((c - a) * ab, axis=-1) / np.maximum(np.sum(ab * ab, axis=-1), 1e-300), 0.0, 1.0)
    return np.linalg.norm(a + t[..., None] * ab - c, axis=-1)


HIGHER_ORDER_ALLOWANCE = 1.5
CHORD_ALLOWANCE = 1.25


def huygens_tolerances(fan: GeodesicFan, ls1: LevelSet, ls2: LevelSet, radii: np.ndarray):
    """Per-ray touch tolerances and chord allowances.

    touch (ray i): twice the level-set interpolation error plus the
    second-order gap between a chart disc of radius ``dS/alpha`` and the true
    metric ball, ``0.5 (dS/a)^2 |grad alpha| / a`` with ``a`` and the gradient
    taken at the worse end of the ray segment, times
    ``HIGHER_ORDER_ALLOWANCE``.
    chord (ray i): depth ``R (1 - cos t)`` by which a polyline chord leaving
    the touch point at angle ``t`` to the wavefront line enters disc ``i``.
    """
    m = fan.metric
    dS = ls2.S - ls1.S
    grads = np.array([[np.linalg.norm(alpha_gradient(m, p, u)) for p, u in zip(ls.points, ls.tangents)]
                      for ls in (ls1, ls2)])
    a = np.minimum(ls1.alphas, ls2.alphas)
    kappa = grads.max(axis=0) / a
    chart_step = fan.h if fan.form == ALPHA_FORM else fan.h / float(a.min())
    ray_kappa = 0.0
    for i in ls1.rays:
        tr = fan.traces[i]
        if len(tr) > 2:
            seg = np.maximum(np.linalg.norm(np.diff(tr.x, axis=0), axis=1), 1e-300)
            ray_kappa = max(ray_kappa, float((tangent_angle(tr.u[1:], tr.u[:-1]) / seg).max()))
    interp = chart_step**2 * ray_kappa / 8.0
    roundoff = 64 * np.finfo(float).eps * max(1.0, float(np.abs(ls2.points).max()))
    touch = 2.0 * interp + HIGHER_ORDER_ALLOWANCE * 0.5 * (dS / a) ** 2 * kappa + roundoff

    pts, tn = ls2.points, ls2.tangents
    n = len(pts)
    sin_t = np.zeros(n)
    for step in (-1, 1):
        nb = np.arange(n) + step
        ok = np.ones(n, dtype=bool) if ls2.closed else (nb >= 0) & (nb < n)
        d = pts[nb[ok] % n] - pts[ok]
        d /= np.maximum(np.linalg.norm(d, axis=1), 1e-300)[:, None]
        # the wavefront line at the touch point is normal to the ray
        sin_t[ok] = np.maximum(sin_t[ok], np.abs(np.sum(d * tn[ok], axis=1)))
    chord = CHORD_ALLOWANCE * radii * (1.0 - np.sqrt(1.0 - np.minimum(sin_t, 1.0) ** 2))
    return touch, chord


def huygens_tangency_check(fan: GeodesicFan, S1: float, S2: float) -> TangencyReport:
    """Discs of chart radius ``dS/alpha`` on wavefront ``S1`` against wavefront ``S2``.

    Passes when the ``S2`` polyline enters no disc deeper than that disc's
    touch tolerance plus its chord allowance, and each ray's ``S2`` point lies on its
    own disc boundary within the touch tolerance.
    """
    if fan.metric.dim != 2:
        raise WavefrontError("Huygens check is 2D only")
    if not S2 > S1:
        raise WavefrontError("need S2 > S1")
    dS = S2 - S1
    ls1, ls2 = level_set(fan, S1), level_set(fan, S2)
    if not np.array_equal(ls1.rays, ls2.rays):
        raise WavefrontError("wavefronts S1 and S2 use different rays")
    radii = dS / np.array([alpha(fan.metric, p, u) for p, u in zip(ls1.points, ls1.tangents)])
    touch, chord = huygens_tolerances(fan, ls1, ls2, radii)
    if touch.max() > REFUSAL_FRACTION * dS:
        raise WavefrontError(
            f"dS = {dS:.3g} too large for the disc picture: tolerance {touch.max():.3g} exceeds "
            f"{REFUSAL_FRACTION:.0%} of dS; reduce S2 - S1 or h")
    centers = ls1.points
    pts = ls2.points
    if ls2.closed:
        a, b = pts, np.roll(pts, -1, axis=0)
    else:
        a, b = pts[:-1], pts[1:]
    penetrations = tangencies = 0
    max_pen = max_gap = 0.0
    for j, (c, R) in enumerate(zip(centers, radii)):
        pen = max(0.0, R - _point_segment_distance(c, a, b).min())
        max_pen = max(max_pen, pen)
        if pen > touch[j] + chord[j]:
            penetrations += 1
        gap = abs(np.linalg.norm(pts[j] - c) - R)
        max_gap = max(max_gap, gap)
        if gap <= touch[j]:
            tangencies += 1
    return TangencyReport(float(S1), float(S2), float(touch.max()), float((touch + chord).max()), len(centers),
                          penetrations, tangencies, float(max_pen), float(max_gap),
                          [(c.tolist(), float(R)) for c, R in zip(centers, radii)])
