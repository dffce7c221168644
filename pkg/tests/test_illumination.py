import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from umbra import bodies
from umbra.bodies import ConcaveChart, chart_at, sample_boundary_points
from umbra.errors import (
    BoundaryNotInChartError,
    DomainError,
    EmptyCurveError,
    NotStrictlyConvexError,
    ParameterError,
)
from umbra.illumination import (
    Direction,
    ShadowCurve,
    align_chart,
    is_in_shadow,
    normal_from_superdifferential,
    shadow_boundary_gamma,
    shadow_boundary_sweep,
)

import oracles


def sphere_chart(p, r=0.6):
    ball = bodies.translated_ball([0.0, 0.0, 0.0], 1.0)
    return chart_at(ball, p, domain_radius=r)


# ---------------------------------------------------------------------------
# normals from graph slopes


def test_normal_flat_tangent():
    assert np.allclose(normal_from_superdifferential([0.0, 0.0]), [0, 0, 1])


def test_normal_paper_substitution():
    got = normal_from_superdifferential([1.0, 0.0])
    assert np.allclose(got, np.array([-1.0, 0.0, 1.0]) / math.sqrt(2.0))


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=5))
def test_normal_unit_and_pairing_identity(w):
    w = np.array(w)
    nu = normal_from_superdifferential(w)
    assert np.linalg.norm(nu) == pytest.approx(1.0, abs=1e-12)
    # pairing with (w, -1) is minus the normalizer
    val = float(np.dot(nu, np.append(w, -1.0)))
    assert val == pytest.approx(-math.sqrt(float(np.dot(w, w)) + 1.0), rel=1e-12)


# ---------------------------------------------------------------------------
# membership


def test_south_pole_membership():
    ch = sphere_chart([0.0, 0.0, -1.0])
    assert is_in_shadow(ch, Direction(np.array([0.0, 0.0, -1.0])), [0.0, 0.0])
    assert not is_in_shadow(ch, Direction(np.array([0.0, 0.0, 1.0])), [0.0, 0.0])


def test_membership_outside_domain_errors():
    ch = sphere_chart([0.0, 0.0, -1.0], r=0.5)
    with pytest.raises(DomainError):
        is_in_shadow(ch, Direction(np.array([1.0, 0.0, 0.0])), [0.6, 0.0])


def test_sphere_membership_against_normal_oracle(rng):
    # the unit sphere's outward normal at x is x itself, so membership in
    # the shadow for direction u is exactly <x, u> > 0
    u = Direction(np.array([1.0, 0.0, 0.0]))
    checked = 0
    for p in (np.array([0, 1.0, 0]), np.array([0, -1.0, 0]), np.array([0, 0, -1.0])):
        ch = sphere_chart(p)
        while checked < 1000:
            xp = rng.normal(size=2)
            xp *= rng.random() * 0.75 * ch.domain_radius / np.linalg.norm(xp)
            w = ch.to_world(xp)
            want = float(np.dot(w, u.u)) > 0
            assert is_in_shadow(ch, u, xp) == want
            checked += 1
            if checked % 340 == 0:
                break
    assert checked >= 1000 or checked % 340 == 0


# ---------------------------------------------------------------------------
# the boundary graph


def test_sphere_silhouette_is_great_circle():
    ch = sphere_chart([0.0, 1.0, 0.0])
    u = Direction(np.array([1.0, 0.0, 0.0]))
    curve = shadow_boundary_sweep(ch, u, np.linspace(-0.3, 0.3, 21))
    world = curve.world_points()
    assert np.abs(world[:, 0]).max() < 1e-8
    assert np.abs(np.linalg.norm(world, axis=1) - 1.0).max() < 1e-9


def test_kiselman_boundary_heights():
    # shadow boundary of the strip profile is exactly |x|^(2/q)
    for q in (3, 5, 7):
        body = bodies.kiselman(q)
        ch = chart_at(body, [0.0, 0.0, 0.0], domain_radius=0.48)
        u = Direction(np.array([0.0, 1.0, 0.0]))
        for k in range(4, 11):
            for s in (1.0, -1.0):
                x = s * 2.0**-k
                g, resid = shadow_boundary_gamma(ch, u, [x])
                assert abs(g - abs(x) ** (2.0 / q)) < 1e-6
                assert abs(resid) <= 1e-10 * 1.0001


def test_ellipsoid_silhouette_plane():
    body = bodies.ellipsoid([2.0, 1.0, 1.0])
    ch = chart_at(body, [0.0, 1.0, 0.0], domain_radius=0.5)
    u = Direction(np.array([1.0, 0.0, 0.0]))
    curve = shadow_boundary_sweep(ch, u, np.linspace(-0.25, 0.25, 17))
    world = curve.world_points()
    assert np.abs(world[:, 0]).max() < 1e-8


def test_sweep_basic_contract():
    ch = sphere_chart([0.0, 1.0, 0.0])
    u = Direction(np.array([1.0, 0.0, 0.0]))
    curve = shadow_boundary_sweep(ch, u, np.linspace(-0.3, 0.3, 64))
    assert len(curve) == 64
    assert np.abs(curve.residual).max() <= curve.tol_root


def test_sweep_empty_grid_errors():
    ch = sphere_chart([0.0, 1.0, 0.0])
    with pytest.raises(EmptyCurveError):
        shadow_boundary_sweep(ch, Direction(np.array([1.0, 0.0, 0.0])), [])


def test_sweep_all_points_failing_errors():
    # light along the chart normal: no fiber has a boundary bracket
    ch = sphere_chart([0.0, 1.0, 0.0])
    with pytest.raises((EmptyCurveError, BoundaryNotInChartError)):
        shadow_boundary_sweep(ch, Direction(np.array([0.0, 1.0, 0.0])), np.linspace(-0.3, 0.3, 8))


def test_gamma_direction_parallel_normal_errors():
    ch = sphere_chart([0.0, 1.0, 0.0])
    with pytest.raises(BoundaryNotInChartError):
        shadow_boundary_gamma(ch, Direction(np.array([0.0, 1.0, 0.0])), [0.1])


def test_not_strictly_concave_detected():
    # a convex graph masquerading as a chart flips the fiber monotonicity
    bad = ConcaveChart(
        dim_domain=2,
        phi=lambda z: 0.5 * float(np.dot(z, z)),
        grad_phi=lambda z: np.asarray(z, float),
        hess_phi=None,
        domain_radius=1.0,
    )
    with pytest.raises(NotStrictlyConvexError):
        shadow_boundary_gamma(bad, Direction(np.array([0.0, 1.0, 0.1]) / math.sqrt(1.01)), [0.2])


def test_zero_direction_rejected():
    with pytest.raises(ParameterError):
        Direction.normalized([0.0, 0.0, 0.0])
    with pytest.raises(ParameterError):
        Direction(np.array([0.0, 0.5, 0.0]))


# ---------------------------------------------------------------------------
# structural properties


def _feasible_case(rng, body, chart):
    """Direction and fiber whose boundary height is known by construction.

    Choosing the threshold as the chart slope at a sampled interior point
    makes that point's fiber coordinate the exact boundary height.
    """
    m = chart.dim_domain
    xi = rng.normal(size=m)
    xi *= rng.random() * 0.55 * chart.domain_radius / np.linalg.norm(xi)
    that = rng.normal(size=m)
    that /= np.linalg.norm(that)
    slope = float(np.dot(chart.gradient(xi), that))
    u_chart = np.append(that, slope)
    u_chart /= np.linalg.norm(u_chart)
    u_world = chart.pose.rotate_to_world(u_chart) if chart.pose else u_chart
    # aligned coordinates: components of xi along/orthogonal to that
    t_star = float(np.dot(xi, that))
    return Direction(u_world), xi, that, t_star


def test_vertical_monotonicity_and_sign_structure(rng):
    charts = []
    for spec in ([1.5, 1.0, 0.8], [1.0, 1.0, 1.0], [2.2, 1.3, 0.9]):
        body = bodies.ellipsoid(spec)
        p = sample_boundary_points(body, rng, 2)
        charts.append((body, chart_at(body, p[0])))
    violations = 0
    for body, chart in charts:
        for _ in range(300):
            u, xi, that, t_star = _feasible_case(rng, body, chart)
            frame = align_chart(chart, u)
            # aligned chart coordinates of the constructed root point
            world = chart.pose.to_world(np.append(xi, chart.value(xi)))
            z = frame.chart.pose.to_local(world)[:-1]
            t0 = z[-1]
            zpp = z[:-1]
            T = math.sqrt(frame.chart.domain_radius**2 - float(np.dot(zpp, zpp)))
            # membership is monotone upward along the fiber
            t = rng.uniform(-0.95 * T, 0.95 * T)
            delta = rng.uniform(0.0, max(0.95 * T - t, 0.0))
            in_low = frame.slope(zpp, t) < 0
            in_high = frame.slope(zpp, t + delta) < 0
            if in_low and not in_high:
                violations += 1
            # sign structure around the constructed root t0
            if t > t0 + 1e-9 and frame.slope(zpp, t) >= 1e-9:
                violations += 1
            if t < t0 - 1e-9 and frame.slope(zpp, t) <= -1e-9:
                violations += 1
    assert violations == 0


def test_rotation_equivariance(rng):
    Q = oracles.random_rotation(rng)
    semiaxes = [1.8, 1.1, 0.9]
    body = bodies.ellipsoid(semiaxes)
    body_rot = bodies.ellipsoid(semiaxes, bodies.Pose(Q, np.zeros(3)))
    # chart based on the silhouette of the light direction e_1
    p = np.array([0.0, semiaxes[1], 0.0])
    u = np.array([1.0, 0.0, 0.0])

    ch = chart_at(body, p, domain_radius=0.4)
    ch_rot = chart_at(body_rot, Q @ p, domain_radius=0.4)
    grid = np.linspace(-0.15, 0.15, 9)
    c1 = shadow_boundary_sweep(ch, Direction(u), grid)
    c2 = shadow_boundary_sweep(ch_rot, Direction(Q @ u), grid)
    assert len(c1) == len(c2)
    assert np.abs(c1.gamma - c2.gamma).max() < 1e-9
    assert np.abs(c1.residual - c2.residual).max() < 1e-9


def test_continuity_jump_bound(rng):
    # refined grids shrink jumps, quantitatively controlled by L/theta
    from umbra.regularity import chart_constants

    body = bodies.ellipsoid([1.6, 1.0, 0.9])
    ch = chart_at(body, [0.0, 1.0, 0.0], domain_radius=0.4)
    L, theta = chart_constants(ch, n_samples=2000, rng=rng)
    u = Direction(np.array([1.0, 0.0, 0.0]))
    prev_jump = None
    for n in (17, 33, 65):
        grid = np.linspace(-0.12, 0.12, n)
        curve = shadow_boundary_sweep(ch, u, grid)
        jumps = np.abs(np.diff(curve.gamma))
        spacing = grid[1] - grid[0]
        assert jumps.max() <= (L / theta) * spacing * 1.05 + 1e-12
        if prev_jump is not None:
            assert jumps.max() <= prev_jump + 1e-12
        prev_jump = jumps.max()


def test_solved_samples_satisfy_sign_conditions():
    body = bodies.ellipsoid([1.5, 1.0, 0.8])
    ch = chart_at(body, [0.0, 1.0, 0.0], domain_radius=0.4)
    u = Direction(np.array([1.0, 0.0, 0.0]))
    frame = align_chart(ch, u)
    for x in np.linspace(-0.1, 0.1, 7):
        g, _ = shadow_boundary_gamma(ch, u, [x])
        assert frame.slope(np.array([x]), g + 0.02) < 0
        assert frame.slope(np.array([x]), g - 0.02) > 0


def test_curve_csv_roundtrip(tmp_path):
    ch = sphere_chart([0.0, 1.0, 0.0])
    u = Direction(np.array([1.0, 0.0, 0.0]))
    curve = shadow_boundary_sweep(ch, u, np.linspace(-0.3, 0.3, 16))
    path = tmp_path / "curve.csv"
    curve.to_csv(path)
    again = ShadowCurve.from_csv(path)
    assert np.allclose(again.ypp, curve.ypp)
    assert np.allclose(again.gamma, curve.gamma)
    assert np.allclose(again.residual, curve.residual)


def test_samples_stay_in_domain():
    ch = sphere_chart([0.0, 1.0, 0.0], r=0.5)
    u = Direction(np.array([1.0, 0.0, 0.0]))
    curve = shadow_boundary_sweep(ch, u, np.linspace(-0.45, 0.45, 31))
    radii = np.sqrt(curve.ypp[:, 0] ** 2 + curve.gamma**2)
    assert np.all(radii < ch.domain_radius)
