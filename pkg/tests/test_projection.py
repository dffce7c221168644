import math
import warnings
from dataclasses import replace

import numpy as np
import pytest

from umbra import bodies
from umbra.bodies import Pose, chart_at, sample_boundary_points
from umbra.errors import (
    DomainError,
    InteriorPointError,
    OverlapError,
    ParameterError,
    RankDeficiencyError,
    SeedError,
)
from umbra import projection as pj
from umbra.counterexamples import cantor_contact_pair

import oracles


def coaxial_pair():
    lam = bodies.translated_ball([0.0, 0.0, 0.0], 1.0)
    om = bodies.translated_ball([0.0, 0.0, 3.0], 1.0)
    return om, lam


def quartic_flat_body():
    """Contact body with a flat tangent direction at (0, 0, 2).

    The quartic term kills the curvature along the axis, so the boundary
    map's Jacobian drops rank at the constructed contact configuration.
    """
    return bodies.ImplicitBody(
        dim=3,
        value=lambda p: (p[0] - 1.0) ** 2 + p[1] ** 2 + (p[2] - 2.0) ** 4 - 1.0,
        gradient=lambda p: np.array(
            [2.0 * (p[0] - 1.0), 2.0 * p[1], 4.0 * (p[2] - 2.0) ** 3]
        ),
        hessian=lambda p: np.diag([2.0, 2.0, 12.0 * (p[2] - 2.0) ** 2]),
        bounding_radius=1.0,
        center=np.array([1.0, 0.0, 2.0]),
        convexity=bodies.Convexity.convex(),
        smoothness=bodies.Smoothness.smooth(),
        name="quartic-flat",
    )


# ---------------------------------------------------------------------------
# projection of a point


def test_project_point_radial():
    _, lam = coaxial_pair()
    assert np.allclose(pj.project_point(lam, [2.0, 0.0, 0.0]), [1.0, 0.0, 0.0], atol=1e-10)


def test_project_point_boundary_fixed_point():
    _, lam = coaxial_pair()
    y = np.array([0.0, 1.0, 0.0])
    assert np.allclose(pj.project_point(lam, y), y)


def test_project_point_interior_errors():
    _, lam = coaxial_pair()
    with pytest.raises(InteriorPointError):
        pj.project_point(lam, [0.1, 0.0, 0.0])


def test_project_point_matches_grid_argmin(rng):
    body = bodies.ellipsoid([2.0, 1.0, 1.0])
    x = np.array([4.0, 0.3, 0.0])
    y = pj.project_point(body, x)
    pts, _ = oracles.ellipsoid_boundary_grid([2.0, 1.0, 1.0], np.eye(3), np.zeros(3), 1000, 1000)
    pts = pts.reshape(-1, 3)
    d = np.linalg.norm(pts - x, axis=1)
    best = pts[np.argmin(d)]
    spacing = math.pi * 2.0 / 1000
    assert np.linalg.norm(y - best) <= 2 * spacing
    # KKT: x - y is along the outward normal
    g = body.gradient_at(y)
    cosang = np.dot(x - y, g) / (np.linalg.norm(x - y) * np.linalg.norm(g))
    assert cosang == pytest.approx(1.0, abs=1e-9)


# ---------------------------------------------------------------------------
# ray hitting


def test_first_hit_coaxial():
    om, _ = coaxial_pair()
    t = pj.first_hitting_time(om, np.zeros(3), [0.0, 0.0, 1.0])
    assert t == pytest.approx(2.0, abs=1e-10)


def test_first_hit_miss_returns_none():
    om, _ = coaxial_pair()
    assert pj.first_hitting_time(om, np.zeros(3), [0.0, 0.0, -1.0]) is None


def test_first_hit_matches_quadratic_formula(rng):
    om, _ = coaxial_pair()
    A, c = oracles.quadric_of_ellipsoid([1.0, 1.0, 1.0], None, [0.0, 0.0, 3.0])
    hits = 0
    while hits < 50:
        y = rng.normal(size=3)
        y = 1.2 * y / np.linalg.norm(y)
        nu = np.array([0.0, 0.0, 3.0]) - y + 0.3 * rng.normal(size=3)
        nu /= np.linalg.norm(nu)
        want = oracles.ray_quadric_first_hit(y, nu, A, c)
        got = pj.first_hitting_time(om, y, nu)
        if want is None:
            assert got is None
        else:
            assert got == pytest.approx(want, abs=1e-10)
            hits += 1


# ---------------------------------------------------------------------------
# shadow membership


def test_in_projection_shadow_trivials():
    om, lam = coaxial_pair()
    assert pj.in_projection_shadow(om, lam, [0.0, 0.0, 1.0])
    assert not pj.in_projection_shadow(om, lam, [0.0, 0.0, -1.0])
    with pytest.raises(DomainError):
        pj.in_projection_shadow(om, lam, [0.0, 0.0, 0.5])


def test_membership_flip_at_tangency_angle():
    om, lam = coaxial_pair()
    theta_star = oracles.coaxial_tangency_angle(3.0, 1.0, 1.0)

    def member(theta):
        y = np.array([math.sin(theta), 0.0, math.cos(theta)])
        return pj.in_projection_shadow(om, lam, y)

    lo, hi = 0.0, math.pi / 2
    assert member(lo) and not member(hi)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if member(mid):
            lo = mid
        else:
            hi = mid
    assert abs(0.5 * (lo + hi) - theta_star) < 1e-6


# ---------------------------------------------------------------------------
# boundary solving


def test_solve_lands_on_tangency_circle():
    om, lam = coaxial_pair()
    seed = pj.seed_boundary(om, lam)
    pt = pj.solve_boundary_point(om, lam, seed)
    theta_star = oracles.coaxial_tangency_angle(3.0, 1.0, 1.0)
    ang = math.acos(pt.y[2] / np.linalg.norm(pt.y))
    assert abs(ang - theta_star) < 1e-8
    assert abs(np.linalg.norm(pt.y) - 1.0) < 1e-10
    assert pt.t > 0


def test_solve_fixed_point_costs_no_iterations():
    om, lam = coaxial_pair()
    pt = pj.solve_boundary_point(om, lam, pj.seed_boundary(om, lam))
    again = pj.solve_boundary_point(om, lam, pt.state)
    assert again.iterations <= 1
    assert np.allclose(again.state, pt.state, atol=1e-9)


def test_solve_certifies_orthogonality_and_colinearity():
    om = bodies.ellipsoid([1.0, 0.8, 0.6], Pose(np.eye(3), np.array([0.0, 0.0, 3.0])))
    lam = bodies.translated_ball([0.0, 0.0, 0.0], 1.0)
    pt = pj.solve_boundary_point(om, lam, pj.seed_boundary(om, lam))
    gG = om.gradient_at(pt.x)
    gF = lam.gradient_at(pt.y)
    assert abs(np.dot(gG, gF)) <= 1e-10
    assert np.abs(pt.y + pt.t * gF - pt.x).max() <= 1e-10
    assert pt.residual <= 1e-10


def test_seed_boundary_coaxial_accuracy():
    om, lam = coaxial_pair()
    x0, y0, t0 = pj.seed_boundary(om, lam)
    theta_star = oracles.coaxial_tangency_angle(3.0, 1.0, 1.0)
    ang = math.acos(np.clip(y0[2] / np.linalg.norm(y0), -1, 1))
    assert abs(ang - theta_star) < 1e-6
    assert t0 > 0


def test_seed_boundary_patch_miss_errors():
    om, lam = coaxial_pair()
    with pytest.raises(SeedError):
        pj.seed_boundary(om, lam, patch_center=[0.0, 0.0, -1.0], patch_angle=0.5)


def test_seed_boundary_random_poses(rng):
    for _ in range(3):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        om = bodies.ellipsoid(
            rng.uniform(0.5, 1.0, 3), Pose(oracles.random_rotation(rng), 3.5 * d)
        )
        lam = bodies.ellipsoid(rng.uniform(0.8, 1.3, 3), Pose(oracles.random_rotation(rng), np.zeros(3)))
        seed = pj.seed_boundary(om, lam, rng=rng)
        pt = pj.solve_boundary_point(om, lam, seed)
        assert pt.residual <= 1e-10


# ---------------------------------------------------------------------------
# tracing


def test_trace_closes_on_analytic_circle():
    om, lam = coaxial_pair()
    start = pj.solve_boundary_point(om, lam, pj.seed_boundary(om, lam))
    trace = pj.trace_boundary(om, lam, start, step=0.02, max_steps=2000)
    assert trace.closed
    theta_star = oracles.coaxial_tangency_angle(3.0, 1.0, 1.0)
    Y = trace.y_points()
    # distance from each traced point to the analytic tangency circle
    rho = math.sin(theta_star)
    d_circle = np.hypot(np.hypot(Y[:, 0], Y[:, 1]) - rho, Y[:, 2] - math.cos(theta_star))
    assert d_circle.max() < 1e-6
    # the trace wraps the whole circle: every circle point has a nearby sample
    angles = np.sort(np.arctan2(Y[:, 1], Y[:, 0]))
    gaps = np.diff(np.concatenate([angles, [angles[0] + 2 * math.pi]]))
    assert gaps.max() * rho < 3 * trace.step


def test_trace_zero_steps():
    om, lam = coaxial_pair()
    start = pj.solve_boundary_point(om, lam, pj.seed_boundary(om, lam))
    trace = pj.trace_boundary(om, lam, start, step=0.02, max_steps=0)
    assert len(trace) == 1 and not trace.closed


def test_trace_straddle_consistency(rng):
    om, lam = coaxial_pair()
    start = pj.solve_boundary_point(om, lam, pj.seed_boundary(om, lam))
    trace = pj.trace_boundary(om, lam, start, step=0.05, max_steps=400)
    Y = trace.y_points()
    for i in rng.integers(1, len(Y) - 1, size=12):
        y = Y[i]
        tangent = Y[i + 1] - Y[i - 1]
        n_lam = lam.unit_normal(y)
        w = np.cross(tangent, n_lam)
        w /= np.linalg.norm(w)
        delta = 0.03
        results = []
        for s in (+1.0, -1.0):
            y_off = bodies.boundary_point_along(lam, y + s * delta * w - lam.center)
            results.append(pj.in_projection_shadow(om, lam, y_off))
        assert results[0] != results[1]


def _creased_ball():
    # C^{1,1} but not C^2: the gradient is Lipschitz, the curvature jumps
    # across the plane x_1 = 0
    def crease_val(p):
        return float(np.dot(p, p)) - 1.0 + 0.1 * p[0] * abs(p[0])

    def crease_grad(p):
        return 2.0 * p + np.array([0.2 * abs(p[0]), 0.0, 0.0])

    return bodies.ImplicitBody(
        dim=3,
        value=crease_val,
        gradient=crease_grad,
        hessian=None,
        bounding_radius=1.1,
        center=np.zeros(3),
        convexity=bodies.Convexity.uniformly_convex(1.8),
        smoothness=bodies.Smoothness("C1_1"),
        name="creased-ball",
    )


def test_trace_c11_crease_converges_and_flags_crease_samples():
    lam = _creased_ball()
    om, _ = coaxial_pair()

    # boundary point of the shadow exactly on the crease plane: bisect the
    # membership flip along the boundary arc inside {x_1 = 0}
    def y_of(theta):
        return bodies.boundary_point_along(lam, [0.0, math.sin(theta), math.cos(theta)])

    lo, hi = 0.0, math.pi / 2
    assert pj.in_projection_shadow(om, lam, y_of(lo))
    assert not pj.in_projection_shadow(om, lam, y_of(hi))
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if pj.in_projection_shadow(om, lam, y_of(mid)):
            lo = mid
        else:
            hi = mid
    y0 = y_of(lo)
    t_hit = pj.first_hitting_time(om, y0, lam.unit_normal(y0))
    x0 = y0 + t_hit * lam.unit_normal(y0)
    t0 = float(np.linalg.norm(x0 - y0)) / np.linalg.norm(lam.gradient_at(y0))

    on_crease = pj.solve_boundary_point(om, lam, (x0, y0, t0))
    assert on_crease.residual <= 1e-10  # corrector converges at the crease
    assert abs(on_crease.y[0]) < 1e-5

    # the two-step consistency probe fires exactly when the stencil
    # straddles the crease
    h = bodies.FD_HESSIAN_STEP * lam.bounding_radius
    sliver = bodies.boundary_point_along(lam, [h / 3.0, y0[1], y0[2]])
    assert lam.fd_hessian_consistency(sliver) > 1e-3
    clean = bodies.boundary_point_along(lam, [0.5, y0[1], y0[2]])
    assert lam.fd_hessian_consistency(clean) < 1e-6

    # a tiny continuation step lands inside the sliver and gets flagged
    mini = pj.trace_boundary(om, lam, on_crease, step=4e-6, max_steps=1)
    assert len(mini) == 2
    assert 0 < abs(mini.points[1].y[0]) < h
    assert mini.points[1].hessian_inconsistent

    # tracing across the crease still closes, generic samples stay clean
    trace = pj.trace_boundary(om, lam, on_crease, step=0.05, max_steps=400)
    assert trace.closed
    assert max(p.residual for p in trace.points) <= 1e-10
    assert not all(p.hessian_inconsistent for p in trace.points)


# ---------------------------------------------------------------------------
# rank certification


def test_certify_rank_full_on_coaxial():
    om, lam = coaxial_pair()
    pt = pj.solve_boundary_point(om, lam, pj.seed_boundary(om, lam))
    rank, smin = pj.certify_rank(om, lam, pt)
    assert rank == 6
    assert smin > 1e-6


def test_certify_rank_detects_flat_direction():
    om = quartic_flat_body()
    lam = bodies.translated_ball([0.0, 0.0, 0.0], 1.0)
    x = np.array([0.0, 0.0, 2.0])
    y = np.array([0.0, 0.0, 1.0])
    state = np.concatenate([x, y, [0.5]])
    assert np.abs(pj.boundary_map(om, lam, state)).max() == 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pt = pj.solve_boundary_point(om, lam, (x, y, 0.5))
    rank, smin = pj.certify_rank(om, lam, pt)
    assert rank < 6
    assert smin < 1e-8
    # the flat direction is exactly the tangency ray: grad F^T D2G grad F = 0
    gF = lam.gradient_at(pt.y)
    assert abs(gF @ om.hessian_at(pt.x) @ gF) < 1e-12


def test_certify_rank_scale_invariance():
    om, lam = coaxial_pair()
    pt = pj.solve_boundary_point(om, lam, pj.seed_boundary(om, lam))
    om2 = bodies.translated_ball([0.0, 0.0, 6.0], 2.0)
    lam2 = bodies.translated_ball([0.0, 0.0, 0.0], 2.0)
    pt2 = pj.solve_boundary_point(om2, lam2, (2 * pt.x, 2 * pt.y, pt.t))
    rank, _ = pj.certify_rank(om, lam, pt)
    rank2, _ = pj.certify_rank(om2, lam2, pt2)
    assert rank == rank2 == 6


def test_trace_raises_rank_deficiency_near_flat_contact():
    om = bodies.kiselman(3, clamp_radius=0.45)
    lam = bodies.translated_ball([0.0, -3.0, 0.0], 1.0)
    seed = pj.seed_boundary(
        om, lam, n_samples=256, patch_center=[0.0, 1.0, 0.0], patch_angle=0.2
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        start = pj.solve_boundary_point(om, lam, seed)
        with pytest.raises(RankDeficiencyError):
            pj.trace_boundary(om, lam, start, step=0.02, max_steps=3000)


# ---------------------------------------------------------------------------
# Jacobian correctness


def test_jacobian_matches_finite_differences(rng):
    om = bodies.ellipsoid([1.0, 0.8, 0.6], Pose(np.eye(3), np.array([0.0, 0.0, 3.0])))
    lam = bodies.ellipsoid([1.3, 1.0, 0.9])
    for _ in range(25):
        x = sample_boundary_points(om, rng, 1)[0]
        y = sample_boundary_points(lam, rng, 1)[0]
        t = rng.uniform(0.1, 2.0)
        z = np.concatenate([x, y, [t]])
        J = pj.boundary_jacobian(om, lam, z)
        J_fd = oracles.fd_jacobian(lambda w: pj.boundary_map(om, lam, w), z, 1e-6)
        scale = max(1.0, np.abs(J).max())
        assert np.abs(J - J_fd).max() <= 1e-5 * scale


# ---------------------------------------------------------------------------
# disjointness and barriers


def test_assert_disjoint_coaxial_gap():
    om, lam = coaxial_pair()
    assert pj.assert_disjoint(om, lam) == pytest.approx(1.0, abs=1e-8)


def test_assert_disjoint_rejects_cantor_pair():
    pair = cantor_contact_pair(1e-4, 2)
    with pytest.raises(OverlapError):
        pj.assert_disjoint(pair.omega, pair.lam)


def test_hitting_time_bound_coaxial():
    om, lam = coaxial_pair()
    # distance 1 plus twice the larger diameter bound
    t_star = pj.hitting_time_bound(om, lam)
    assert t_star == pytest.approx(1.0 + 2.0 * 2.0, abs=1e-6)


def test_barrier_flat_chart():
    flat = bodies.ConcaveChart(
        dim_domain=2,
        phi=lambda z: 0.0,
        grad_phi=lambda z: np.zeros(2),
        hess_phi=lambda z: np.zeros((2, 2)),
        domain_radius=1.0,
    )
    z = np.array([0.3, -0.4])
    assert pj.barrier_psi(flat, 1.0, z) == pytest.approx(-0.5 * float(np.dot(z, z)))
    bc = pj.barrier_chart(flat, 1.0)
    assert bc.concavity_theta == pytest.approx(1.0)
    assert np.allclose(bc.hess_phi(z), -np.eye(2))
    with pytest.raises(ParameterError):
        pj.barrier_psi(flat, 0.0, z)


def test_barrier_bounds_shadow_in_chart_frame(rng):
    # around a solved boundary point, the shadow in chart coordinates stays
    # below the one-sided Lipschitz graph built from the barrier
    om, lam = coaxial_pair()
    start = pj.solve_boundary_point(om, lam, pj.seed_boundary(om, lam))
    chart = pj.shadow_chart_frame(om, lam, start, domain_radius=0.5)
    t_star = pj.hitting_time_bound(om, lam, chart_radius=chart.domain_radius)

    checked = 0
    margin_fail = 0
    for _ in range(1000):
        z = rng.normal(size=2)
        z *= rng.random() * 0.35 * chart.domain_radius / np.linalg.norm(z)
        w = chart.to_world(z)
        if not pj.in_projection_shadow(om, lam, w):
            continue
        checked += 1
        gamma_bar = pj.barrier_gamma_bar(chart, t_star, z[:-1])
        if z[-1] > gamma_bar + 1e-8:
            margin_fail += 1
    assert checked >= 200
    assert margin_fail == 0
