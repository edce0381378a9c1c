from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from willmore_lab.ambient import (
    AmbientManifold,
    ChartError,
    FrameError,
    euclidean,
    inner_h,
    make_ambient,
    perturbed_euclidean,
    poincare_ball,
    riem_apply,
    round_sphere,
)


def h_orthonormal(h, rng, k):
    """k vectors orthonormal for the SPD matrix h."""
    L = np.linalg.cholesky(h)
    Q, _ = np.linalg.qr(rng.normal(size=(h.shape[0], h.shape[0])))
    return np.linalg.solve(L.T, Q[:, :k]).T


def sphere_chart_distance(x, y):
    """Geodesic distance on the unit sphere between two stereographic chart points."""
    chord = 2 * np.linalg.norm(x - y) / np.sqrt((1 + x @ x) * (1 + y @ y))
    return 2 * np.arcsin(min(chord / 2, 1.0))


AMBIENTS = {
    "euclidean": lambda: euclidean(4),
    "sphere": lambda: round_sphere(4),
    "sphere_r2": lambda: round_sphere(3, 2.0),
    "hyperbolic": lambda: poincare_ball(3),
    "perturbed": lambda: perturbed_euclidean(3, eps=0.2, center=[0.1, -0.2, 0.3]),
    "anisotropic": lambda: perturbed_euclidean(3, eps=0.2, mode="anisotropic"),
}


@pytest.mark.parametrize("name", ["sphere", "sphere_r2", "hyperbolic"])
def test_closed_form_riemann_matches_coordinate_formula(name):
    amb = AMBIENTS[name]()
    rng = np.random.default_rng(7)
    x = 0.4 * rng.uniform(-1, 1, (50, amb.dim)) / np.sqrt(amb.dim)
    closed = amb.riemann(x)
    coord = amb.riemann_from_christoffel(x)
    assert np.max(np.abs(closed - coord)) < 1e-6 * (1 + np.max(np.abs(closed)))


def test_flat_christoffel_and_riemann_vanish():
    amb = euclidean(5)
    x = np.random.default_rng(0).normal(size=(7, 5))
    assert np.all(amb.christoffel(x) == 0)
    assert np.all(amb.riemann(x) == 0)


def test_sphere_christoffel_zero_at_origin():
    assert np.allclose(round_sphere(3).christoffel(np.zeros(3)), 0, atol=1e-15)


@pytest.mark.parametrize("name", ["sphere", "hyperbolic", "perturbed"])
def test_closed_form_derivatives_match_fd_fallback(name):
    amb = AMBIENTS[name]()
    fd = AmbientManifold(amb.dim, amb.metric, fd_scale=amb.fd_scale)
    x = np.array([0.21, -0.13, 0.3] + [0.05] * (amb.dim - 3))
    assert np.allclose(fd.christoffel(x), amb.christoffel(x), atol=1e-9)
    assert np.allclose(fd.riemann(x), amb.riemann(x), atol=1e-5)


@pytest.mark.parametrize("name", list(AMBIENTS))
def test_riemann_symmetries_and_bianchi(name):
    amb = AMBIENTS[name]()
    rng = np.random.default_rng(1)
    x = 0.3 * rng.uniform(-1, 1, size=(5, amb.dim))
    G = amb.christoffel(x)
    assert np.allclose(G, np.swapaxes(G, -1, -2), atol=1e-12)
    Rm = amb.riemann_lower(x)  # [w, l, a, b]
    assert np.allclose(Rm, -np.swapaxes(Rm, -1, -2), atol=1e-9)
    assert np.allclose(Rm, -np.swapaxes(Rm, -3, -4), atol=1e-6)
    bianchi = Rm + np.einsum("...wlab->...wabl", Rm) + np.einsum("...wlab->...wbla", Rm)
    assert np.max(np.abs(bianchi)) < 1e-8


@pytest.mark.parametrize("m", [3, 4, 5])
def test_unit_sphere_sectional_curvature_is_one(m):
    amb = round_sphere(m)
    rng = np.random.default_rng(m)
    for _ in range(20):
        x = rng.normal(size=m)
        u, v = rng.normal(size=(2, m))
        assert abs(amb.sectional(x, u, v) - 1.0) < 1e-8


def test_hyperbolic_sectional_curvature():
    amb = poincare_ball(3)
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = 0.6 * rng.uniform(-1, 1, 3) / np.sqrt(3)
        u, v = rng.normal(size=(2, 3))
        assert abs(amb.sectional(x, u, v) + 1.0) < 1e-8


@pytest.mark.parametrize("name,K", [("sphere", 1.0), ("sphere_r2", 0.25), ("hyperbolic", -1.0), ("euclidean", 0.0)])
def test_constant_curvature_identity(name, K):
    amb = AMBIENTS[name]()
    rng = np.random.default_rng(3)
    pts = 0.4 * rng.uniform(-1, 1, size=(10, amb.dim)) / np.sqrt(amb.dim)
    Kfit, defect = amb.constant_curvature_defect(pts, rng)
    assert abs(Kfit - K) < 1e-8
    assert defect < 1e-7


@pytest.mark.parametrize("name", ["sphere", "sphere_r2", "hyperbolic"])
def test_space_form_endomorphisms(name):
    amb = AMBIENTS[name]()
    K = amb.constant_curvature
    rng = np.random.default_rng(4)
    for _ in range(100):
        x = 0.4 * rng.uniform(-1, 1, amb.dim) / np.sqrt(amb.dim)
        e1, e2, n = h_orthonormal(amb.metric(x), rng, 3)
        H = rng.normal() * n
        Rt, Rperp, Kbar = amb.curvature_endomorphisms(x, e1, e2, H)
        assert np.sqrt(inner_h(amb.metric(x), Rt + 2 * K * H, Rt + 2 * K * H)) < 1e-7
        assert np.sqrt(inner_h(amb.metric(x), Rperp, Rperp)) < 1e-7
        assert abs(Kbar - K) < 1e-8


def test_endomorphism_frame_validation():
    amb = round_sphere(3)
    with pytest.raises(FrameError):
        amb.curvature_endomorphisms(np.zeros(3), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 0.5]))
    e = 0.5 * np.eye(3)  # orthonormal for h = 4 * identity at the origin
    with pytest.raises(FrameError):
        amb.curvature_endomorphisms(np.zeros(3), e[0], e[1], e[0])


def test_flat_endomorphisms_zero():
    amb = euclidean(4)
    rng = np.random.default_rng(5)
    e1, e2, n1, _ = h_orthonormal(np.eye(4), rng, 4)
    Rt, Rperp, Kbar = amb.curvature_endomorphisms(rng.normal(size=4), e1, e2, 0.7 * n1)
    assert np.all(Rt == 0) and np.all(Rperp == 0) and Kbar == 0


def test_frak_r_and_dr_constant_and_flat():
    rng = np.random.default_rng(6)
    sff = rng.normal(size=(2, 2, 3))
    sff = 0.5 * (sff + np.swapaxes(sff, 0, 1))
    frak, DR = euclidean(3).frak_R_and_DR(np.zeros(3), np.eye(3)[0], np.eye(3)[1], sff)
    assert np.all(frak == 0) and np.all(DR == 0)
    amb = round_sphere(3)
    x = np.array([0.2, 0.1, -0.3])
    e1, e2, _ = h_orthonormal(amb.metric(x), rng, 3)
    _, DR = amb.frak_R_and_DR(x, e1, e2, sff)
    assert np.max(np.abs(DR)) < 1e-6


def test_dr_matches_parallel_transport_oracle():
    """(D_c Riem)(e1,e2,e1,e2) from a centred difference with parallel-transported frames."""
    amb = perturbed_euclidean(3, eps=1e-2, center=[0.1, 0.0, -0.1], width=0.5)
    x = np.array([0.3, -0.25, 0.2])
    rng = np.random.default_rng(7)
    e1, e2, _ = h_orthonormal(amb.metric(x), rng, 3)
    _, DR = amb.frak_R_and_DR(x, e1, e2, np.zeros((2, 2, 3)))
    G = amb.christoffel(x)
    t = 1e-3
    form = np.zeros(3)
    for c in range(3):
        vals = []
        for s in (1, -1):
            X = e1 - s * t * G[:, c, :] @ e1
            Y = e2 - s * t * G[:, c, :] @ e2
            y = x.copy()
            y[c] += s * t
            Rm = amb.riemann_lower(y)
            vals.append(np.einsum("wlab,w,l,a,b->", Rm, Y, X, X, Y))
        form[c] = (vals[0] - vals[1]) / (2 * t)
    oracle = np.linalg.solve(amb.metric(x), form)
    assert np.linalg.norm(DR - oracle) / np.linalg.norm(oracle) < 1e-4


def test_exp_map_flat_and_zero():
    amb = euclidean(3)
    p, v = np.array([0.3, 1.0, -2.0]), np.array([0.5, -0.1, 0.2])
    assert np.allclose(amb.exp_map(p, v), p + v, atol=1e-14)
    s = round_sphere(3)
    assert np.array_equal(s.exp_map(p, np.zeros(3)), p)


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.floats(-0.8, 0.8), min_size=3, max_size=3),
    st.lists(st.floats(-1, 1), min_size=3, max_size=3),
    st.floats(0.05, 1.2),
)
def test_exp_map_sphere_distance(p, direction, length):
    amb = round_sphere(3)
    p = np.array(p)
    d = np.array(direction)
    if np.linalg.norm(d) < 1e-3:
        return
    # unit speed for h(p), then scaled
    d = d / np.sqrt(inner_h(amb.metric(p), d, d))
    q = amb.exp_map(p, length * d)
    assert abs(sphere_chart_distance(p, q) - length) < 1e-8


def test_exp_map_sphere_closed_form_from_origin():
    amb = round_sphere(3)
    v = np.array([0.3, -0.4, 1.2])
    r = np.sqrt(inner_h(amb.metric(np.zeros(3)), v, v))
    expected = np.tan(r / 2) * v / np.linalg.norm(v)
    assert np.allclose(amb.exp_map(np.zeros(3), v), expected, atol=1e-10)


def test_exp_map_fourth_order():
    amb = round_sphere(3)
    p = np.array([0.1, 0.2, -0.1])
    v = 0.3 * np.array([0.9, 0.4, -0.7])
    exact = amb.exp_map(p, v, tol=1e-14)
    errs = [np.linalg.norm(amb.exp_map_fixed(p, v, n) - exact) for n in (4, 8, 16)]
    assert errs[0] / errs[1] >= 14 and errs[1] / errs[2] >= 14


def test_exp_map_leaves_chart():
    # h-length 3.2 > pi: the great circle passes the antipode, which the stereographic chart sends to infinity
    with pytest.raises(ChartError):
        round_sphere(3).exp_map(np.zeros(3), np.array([1.6, 0, 0]))
    # hyperbolic geodesics never leave the ball
    q = poincare_ball(3).exp_map(np.zeros(3), np.array([1.0, 0, 0]))
    assert np.isclose(q[0], np.tanh(1.0))


@pytest.mark.parametrize("m", [3, 4, 5])
def test_r_p_of_S_unit_sphere(m):
    amb = round_sphere(m)
    rng = np.random.default_rng(m)
    for _ in range(5):
        x = rng.normal(size=m)
        S = h_orthonormal(amb.metric(x), rng, 3)
        assert abs(amb.r_p_of_S(x, S) - 6.0) < 1e-6


def test_r_p_of_S_flat_hyperbolic_and_validation():
    rng = np.random.default_rng(8)
    assert euclidean(4).r_p_of_S(np.zeros(4), np.eye(4)[:3]) == 0
    amb = poincare_ball(3)
    x = np.array([0.2, 0.1, 0.0])
    S = h_orthonormal(amb.metric(x), rng, 3)
    assert abs(amb.r_p_of_S(x, S) + 6.0) < 1e-8
    with pytest.raises(FrameError):
        amb.r_p_of_S(x, np.eye(3))


def test_metric_compatibility_fd():
    """D h = 0: d_c h_ab = Gamma_{a,cb} + Gamma_{b,ca} with lowered first index."""
    for amb in (round_sphere(3), poincare_ball(3), perturbed_euclidean(3, eps=0.3, mode="anisotropic")):
        x = np.array([0.15, -0.2, 0.1])
        eta = 1e-5
        dh = np.stack([(amb.metric(x + eta * e) - amb.metric(x - eta * e)) / (2 * eta) for e in np.eye(3)])
        Gl = np.einsum("ak,kcb->acb", amb.metric(x), amb.christoffel(x))
        pred = np.einsum("acb->cab", Gl) + np.einsum("bca->cab", Gl)
        assert np.max(np.abs(dh - pred)) < 1e-8


def test_make_ambient_specs():
    assert make_ambient({"kind": "sphere", "dim": 3, "radius": 1.0}).constant_curvature == 1.0
    assert make_ambient({"kind": "hyperbolic", "dim": 4}).dim == 4
    with pytest.raises(ValueError):
        make_ambient({"kind": "torus"})
    with pytest.raises(ValueError):
        make_ambient({"kind": "sphere", "colour": "blue"})


def test_chart_and_spd_errors():
    amb = poincare_ball(3)
    with pytest.raises(ChartError):
        amb.check_chart(np.array([1.2, 0, 0]))
    bad = AmbientManifold(2, lambda x: -np.ones(x.shape[:-1] + (2, 2)) * np.eye(2))
    with pytest.raises(ChartError):
        bad.christoffel(np.zeros(2))


def test_riem_apply_convention_sphere():
    """Riem(u, v)v has positive component along u on the sphere: <Riem(u,v)v,u> = +|u^v|^2."""
    amb = round_sphere(3)
    x = np.zeros(3)
    u, v = 0.5 * np.eye(3)[:2]
    R = amb.riemann(x)
    assert np.isclose(inner_h(amb.metric(x), riem_apply(R, u, v, v), u), 1.0)
