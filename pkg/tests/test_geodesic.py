import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from georay.geodesic import (
    ALPHA_FORM,
    CHRISTOFFEL,
    FORMS,
    DomainExitError,
    RayState,
    alpha,
    alpha_gradient,
    compare_traces,
    convergence_study,
    step_alpha_form,
    step_christoffel,
    trace,
    trace_many,
    transverse_gradient,
)
from georay.metric import DomainError, builtin_metric, constant_metric, eval_metric

from conftest import LENS


def test_alpha_examples(flat, sphere, halfplane):
    assert alpha(flat, [3.0, 1.0], [0.6, 0.8]) == pytest.approx(1.0)
    assert alpha(sphere, [math.pi / 3, 0.0], [0.0, 1.0]) == pytest.approx(math.sin(math.pi / 3), abs=1e-15)
    assert alpha(halfplane, [0.0, 0.5], [0.6, -0.8]) == pytest.approx(2.0)
    with pytest.raises(ValueError, match="unit"):
        alpha(flat, [0, 0], [1.0, 1.0])
    with pytest.raises(DomainError):
        alpha(halfplane, [0.0, -1.0], [1.0, 0.0])


def test_alpha_gradient_examples(flat, halfplane, lens):
    assert not np.any(alpha_gradient(flat, [1, 2], [1, 0]))
    np.testing.assert_allclose(alpha_gradient(halfplane, [0.0, 1.0], [0.6, 0.8]), [0.0, -1.0], atol=1e-15)
    np.testing.assert_allclose(alpha_gradient(lens, [1.0, 0.0], [0.0, 1.0]), [-math.exp(-1.0), 0.0], atol=1e-15)
    g = transverse_gradient(halfplane, [0.0, 1.0], [0.0, 1.0])
    np.testing.assert_allclose(g, [0.0, 0.0], atol=1e-15)


def test_alpha_gradient_matches_finite_difference(sphere, rng):
    for _ in range(20):
        x = np.array([rng.uniform(0.3, 2.8), rng.uniform(-3, 3)])
        u = rng.standard_normal(2)
        u /= np.linalg.norm(u)
        e = 1e-6
        fd = [(alpha(sphere, x + e * d, u) - alpha(sphere, x - e * d, u)) / (2 * e) for d in np.eye(2)]
        np.testing.assert_allclose(alpha_gradient(sphere, x, u), fd, atol=1e-8)


def test_single_steps(flat, halfplane, lens):
    s = step_alpha_form(flat, RayState(np.zeros(2), np.array([1.0, 0.0])), 0.1)
    np.testing.assert_allclose(s.x, [0.1, 0.0])
    np.testing.assert_array_equal(s.u, [1.0, 0.0])
    assert (s.r, s.S) == pytest.approx((0.1, 0.1))
    h = 1e-4
    s = step_alpha_form(halfplane, RayState(np.array([0.0, 1.0]), np.array([1.0, 0.0])), h)
    np.testing.assert_allclose((s.u - [1.0, 0.0]) / h, [0.0, -1.0], atol=1e-3)
    s = step_alpha_form(lens, RayState(np.array([-3.0, 0.5]), np.array([1.0, 0.0])), 1e-2)
    assert s.u[1] < 0
    s = step_christoffel(flat, RayState(np.zeros(2), np.array([0.0, 1.0])), 0.5)
    np.testing.assert_allclose(s.x, [0.0, 0.5])
    assert s.S == 0.5


def test_step_leaving_domain(halfplane):
    with pytest.raises(DomainExitError) as err:
        step_alpha_form(halfplane, RayState(np.array([0.0, 0.01]), np.array([0.0, -1.0])), 0.05)
    assert err.value.point[1] <= 0


def test_flat_trace(flat):
    tr = trace(flat, [0, 0], [1, 0], ALPHA_FORM, 0.5, max_r=5)
    np.testing.assert_allclose(tr.x[-1], [5.0, 0.0])
    assert tr.S[-1] == pytest.approx(5.0)
    np.testing.assert_allclose(tr.r, 0.5 * np.arange(len(tr)), atol=1e-12)
    tr = trace(flat, [0, 0], [3, 4], CHRISTOFFEL, 0.1, max_S=1.0)  # direction normalized internally
    np.testing.assert_allclose(tr.x[-1], [0.6, 0.8], atol=1e-14)


def test_alpha_form_final_partial_step(flat):
    tr = trace(flat, [0, 0], [1, 0], ALPHA_FORM, 0.3, max_r=1.0)
    assert tr.r[-1] == pytest.approx(1.0, abs=1e-12)
    tr = trace(flat, [0, 0], [1, 0], ALPHA_FORM, 0.3, max_S=1.0)
    assert tr.S[-1] == pytest.approx(1.0, abs=1e-12)


def test_no_duplicate_final_sample(flat):
    # ten steps of 0.1 accumulate to 1 - 1e-16, which must count as reaching max_S
    tr = trace(flat, [0, 0], [0.6, 0.8], ALPHA_FORM, 0.1, max_S=1.0)
    assert len(tr) == 11 and np.all(np.diff(tr.S) > 0)


def test_sphere_equator(sphere):
    tr = trace(sphere, [math.pi / 2, 0.0], [0.0, 1.0], CHRISTOFFEL, 1e-3, max_S=math.pi)
    assert abs(tr.x[-1, 1] - math.pi) <= 1e-6
    assert np.max(np.abs(tr.x[:, 0] - math.pi / 2)) <= 1e-12


@pytest.mark.parametrize("form", FORMS)
def test_halfplane_semicircle(halfplane, form):
    tr = trace(halfplane, [0.0, 1.0], [1.0, 0.0], form, 1e-3, max_S=2.0)
    assert np.max(np.abs(np.hypot(tr.x[:, 0], tr.x[:, 1]) - 1)) <= 1e-5
    # closed form along the unit semicircle: x = tanh S, y = sech S
    np.testing.assert_allclose(tr.x[:, 0], np.tanh(tr.S), atol=1e-10)
    np.testing.assert_allclose(tr.x[:, 1], 1 / np.cosh(tr.S), atol=1e-10)


def test_halfplane_45_degrees(halfplane):
    # distance from the top of the unit semicircle to chart angle 45 deg
    S = math.log(1 / math.tan(math.pi / 8))
    tr = trace(halfplane, [0.0, 1.0], [1.0, 0.0], CHRISTOFFEL, 1e-3, max_S=S)
    np.testing.assert_allclose(tr.x[-1], [math.sqrt(0.5)] * 2, atol=1e-10)
    # and from 135 deg to 45 deg, which spans ln(tan(3 pi / 8) / tan(pi / 8))
    S = math.log(math.tan(3 * math.pi / 8) / math.tan(math.pi / 8))
    c = math.sqrt(0.5)
    tr = trace(halfplane, [-c, c], [c, c], CHRISTOFFEL, 1e-3, max_S=S)
    np.testing.assert_allclose(tr.x[-1], [c, c], atol=1e-10)


def test_alpha_form_semicircle_until_exit(halfplane):
    tr = trace(halfplane, [0.0, 1.0], [1.0, 0.0], ALPHA_FORM, 1e-3, max_r=4.0)
    assert tr.exited
    assert np.max(np.abs(np.hypot(tr.x[:, 0], tr.x[:, 1]) - 1)) <= 1e-5
    assert tr.exit_point[1] <= 0 < tr.x[-1, 1]
    assert np.all(np.diff(tr.S) > 0)


def test_straight_down_exits(halfplane):
    tr = trace(halfplane, [0.0, 1.0], [0.0, -1.0], ALPHA_FORM, 1e-2, max_r=2.0)
    assert tr.exited and tr.r[-1] < 1.0


def test_start_outside_domain(halfplane):
    with pytest.raises(DomainError):
        trace(halfplane, [0.0, -0.5], [1.0, 0.0], ALPHA_FORM, 1e-3, max_S=1.0)
    with pytest.raises(ValueError):
        trace(halfplane, [0.0, 1.0], [0.0, 0.0], ALPHA_FORM, 1e-3, max_S=1.0)
    with pytest.raises(ValueError):
        trace(halfplane, [0.0, 1.0], [1.0, 0.0], ALPHA_FORM, 0.0, max_S=1.0)
    with pytest.raises(ValueError):
        trace(halfplane, [0.0, 1.0], [1.0, 0.0], ALPHA_FORM, 1e-3, max_S=1.0, max_r=1.0)


@pytest.mark.parametrize("form", FORMS)
def test_normalization_and_parameters(lens, form):
    h = 1e-3
    tr = trace(lens, [-1.5, 0.3], [1.0, 0.2], form, h, max_S=2.0)
    assert np.max(np.abs(np.linalg.norm(tr.u, axis=1) - 1)) <= 1e-12
    assert tr.S[0] == 0 and np.all(np.diff(tr.S) > 0)
    rho = lens.batch(tr.x)
    np.testing.assert_allclose(tr.alpha, np.sqrt(np.einsum("ni,nij,nj->n", tr.u, rho, tr.u)), rtol=1e-12)
    dS, dr = np.diff(tr.S), np.diff(tr.r)
    C = np.max(np.abs(dS - 0.5 * (tr.alpha[1:] + tr.alpha[:-1]) * dr)) / h**2
    assert C < 1.0
    if form == ALPHA_FORM:
        np.testing.assert_allclose(tr.r[:-1], h * np.arange(len(tr) - 1), atol=1e-12)
    else:
        np.testing.assert_allclose(tr.S[:-1], h * np.arange(len(tr) - 1), atol=1e-12)


def test_christoffel_unit_metric_speed(sphere):
    tr = trace(sphere, [1.0, 0.0], [0.6, 0.8], CHRISTOFFEL, 1e-3, max_S=2.0)
    v = tr.u / tr.alpha[:, None]  # dx/ds
    speed = np.einsum("ni,nij,nj->n", v, sphere.batch(tr.x), v)
    assert np.max(np.abs(speed - 1)) <= 1e-8


def test_second_derivative_and_heading_rate(halfplane):
    """Along the semicircle the scalar and heading forms of the equation hold to O(h^2)."""
    h = 1e-3
    tr = trace(halfplane, [0.0, 1.0], [1.0, 0.0], ALPHA_FORM, h, max_r=2.0)
    k = np.arange(1, len(tr) - 2)
    x2dd = (tr.x[k + 1, 1] - 2 * tr.x[k, 1] + tr.x[k - 1, 1]) / h**2
    g = np.array([transverse_gradient(halfplane, tr.x[i], tr.u[i]) for i in k])
    a = tr.alpha[k]
    u2 = tr.u[k, 1]
    np.testing.assert_allclose(x2dd, g[:, 1] / a, atol=1e-5)
    np.testing.assert_allclose(np.abs(x2dd), np.linalg.norm(g, axis=1) / a * np.sqrt(1 - u2**2), atol=1e-5)
    F = np.unwrap(np.arctan2(tr.u[:, 0], tr.u[:, 1]))
    dF = (F[k + 1] - F[k - 1]) / (2 * h)
    signed = (tr.u[k, 1] * g[:, 0] - tr.u[k, 0] * g[:, 1]) / a
    np.testing.assert_allclose(dF, signed, atol=1e-6)
    np.testing.assert_allclose(dF, 1.0, atol=1e-6)  # unit circle: chart curvature 1


@pytest.mark.parametrize("name,params,x0,u0", [
    ("poincare_half_plane", {}, [0.0, 1.0], [1.0, 0.3]),
    ("isotropic_index", LENS, [-1.5, 0.3], [1.0, 0.0]),
    ("sphere", {}, [1.0, 0.0], [0.6, 0.8]),
])
@pytest.mark.parametrize("form", FORMS)
def test_reversibility(name, params, x0, u0, form):
    m = builtin_metric(name, params)
    fwd = trace(m, x0, u0, form, 1e-3, max_S=2.0)
    back = trace(m, fwd.x[-1], -fwd.u[-1], form, 1e-3, max_S=2.0)
    assert np.linalg.norm(back.x[-1] - np.asarray(x0)) <= 1e-6


@pytest.mark.parametrize("form", FORMS)
def test_constant_metric_gives_straight_lines(form):
    m = constant_metric([[2.0, 0.5], [0.5, 1.0]])
    tr = trace(m, [0.1, -0.2], [0.3, 1.0], form, 1e-2, max_S=3.0)
    d = tr.x[-1] - tr.x[0]
    d /= np.linalg.norm(d)
    rel = tr.x - tr.x[0]
    off = rel - np.outer(rel @ d, d)
    assert np.max(np.linalg.norm(off, axis=1)) <= 1e-10
    assert alpha(m, [0, 0], d) * np.linalg.norm(tr.x[-1] - tr.x[0]) == pytest.approx(3.0, rel=1e-12)


def test_compare_self_and_flat(flat, halfplane):
    tr = trace(halfplane, [0.0, 1.0], [1.0, 0.0], ALPHA_FORM, 1e-2, max_S=1.0)
    rep = compare_traces(tr, tr)
    assert rep.max_distance == 0 and rep.max_angle == 0
    a = trace(flat, [0, 0], [1, 1], ALPHA_FORM, 1e-2, max_S=2.0)
    b = trace(flat, [0, 0], [1, 1], CHRISTOFFEL, 1e-2, max_S=2.0)
    rep = compare_traces(a, b)
    assert rep.max_distance <= 1e-12 and rep.max_angle <= 1e-12
    assert min(rep.as_dict()["S_range"]) >= 0


def test_compare_halfplane(halfplane):
    a = trace(halfplane, [0.0, 1.0], [1.0, 0.0], ALPHA_FORM, 1e-3, max_S=2.0)
    b = trace(halfplane, [0.0, 1.0], [1.0, 0.0], CHRISTOFFEL, 1e-3, max_S=2.0)
    rep = compare_traces(a, b)
    assert rep.max_distance <= 1e-5 and rep.max_angle <= 1e-4
    assert (rep.S_lo, rep.S_hi) == pytest.approx((0.0, 2.0))


def test_compare_disjoint(flat):
    a = trace(flat, [0, 0], [1, 0], ALPHA_FORM, 0.1, max_S=1.0)
    b = trace(flat, [0, 0], [1, 0], ALPHA_FORM, 0.1, max_S=1.0)
    b.S = b.S + 5
    with pytest.raises(ValueError, match="disjoint"):
        compare_traces(a, b)


def test_convergence_study(flat, halfplane):
    table = convergence_study(flat, [0, 0], [1, 0], [4e-3, 2e-3, 1e-3], 1.0)
    assert table.verdict == "exact"
    assert all(r.order is None for r in table.rows)
    table = convergence_study(halfplane, [0.0, 1.0], [1.0, 0.0], [4e-3, 2e-3, 1e-3], 2.0)
    assert table.verdict == "converging"
    assert all(r.order >= 3.5 for r in table.rows[1:])
    with pytest.raises(ValueError):
        convergence_study(flat, [0, 0], [1, 0], [4e-3, 1e-3, 5e-4], 1.0)
    with pytest.raises(ValueError):
        convergence_study(flat, [0, 0], [1, 0], [2e-3, 1e-3], 1.0)


def test_sphere_mixed_heading_plateau(sphere):
    table = convergence_study(sphere, [math.pi / 3, 0.0], [0.6, 0.8], [4e-3, 2e-3, 1e-3], 2.0)
    assert table.verdict == "plateau"
    assert [r.plateau for r in table.rows] == [False, True, True]


def test_threads_do_not_change_results(lens):
    ang = np.linspace(0, 2 * np.pi, 70, endpoint=False)
    dirs = np.stack([np.sin(ang), np.cos(ang)], axis=1)
    x0 = np.broadcast_to([-1.0, 0.2], dirs.shape)
    one = trace_many(lens, x0, dirs, ALPHA_FORM, 1e-2, max_S=1.0, threads=1)
    four = trace_many(lens, x0, dirs, ALPHA_FORM, 1e-2, max_S=1.0, threads=4)
    for a, b in zip(one, four):
        assert a.x.tobytes() == b.x.tobytes() and a.S.tobytes() == b.S.tobytes()
    single = trace(lens, [-1.0, 0.2], dirs[5], ALPHA_FORM, 1e-2, max_S=1.0)
    np.testing.assert_allclose(single.x, one[5].x, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(x=st.floats(-2, 2), y=st.floats(-2, 2), heading=st.floats(0, 2 * math.pi))
def test_formulations_agree_on_lens(x, y, heading):
    m = builtin_metric("isotropic_index", LENS)
    u = [math.sin(heading), math.cos(heading)]
    a = trace(m, [x, y], u, ALPHA_FORM, 1e-2, max_S=0.5)
    b = trace(m, [x, y], u, CHRISTOFFEL, 1e-2, max_S=0.5)
    assert compare_traces(a, b).max_distance <= 1e-6
    assert np.max(np.abs(np.linalg.norm(a.u, axis=1) - 1)) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(theta=st.floats(0.5, 2.6), heading=st.floats(0, 2 * math.pi))
def test_sphere_trace_invariants(theta, heading):
    m = builtin_metric("sphere")
    tr = trace(m, [theta, 0.0], [math.sin(heading), math.cos(heading)], CHRISTOFFEL, 1e-2, max_S=0.5)
    assert tr.S[0] == 0 and np.all(np.diff(tr.S) > 0)
    # Clairaut: sin^2(theta) dphi/ds is conserved along great circles
    v = tr.u / tr.alpha[:, None]
    clairaut = np.sin(tr.x[:, 0]) ** 2 * v[:, 1]
    # RK4 global error, with h measured against the chart scale sin(theta) near the pole
    scale = np.sin(tr.x[:, 0]).min()
    assert np.ptp(clairaut) <= (1e-2 / scale) ** 4
    assert eval_metric(m, tr.x[-1]).shape == (2, 2)
