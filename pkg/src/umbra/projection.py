"""Shadows generated by orthogonally projecting one convex body onto another.

The projection of a body onto a convex body travels along the target's
outward normals, so a boundary point ``y`` of the target is shadowed exactly
when the outward-normal ray from ``y`` hits the projected body.  The
boundary of that shadow is, for smooth bodies, the zero set of the map

    Phi(x, y, t) = (G(x), F(y), grad G(x) . grad F(y), y + t grad F(y) - x)

from R^(2n+1) to R^(n+3): x runs over the projected body's boundary, y over
the target's boundary, the third component forces tangency of the hitting
ray, and the last block forces colinearity with hitting parameter t > 0.
Solving is done with least-norm Gauss-Newton steps (the solution set is an
(n-2)-manifold, not a point), curves are traced in R^3 by predictor steps
along the one-dimensional null space of DPhi, and full rank n+3 of DPhi is
certified through its singular values.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import illumination
from .bodies import ConcaveChart, ImplicitBody, boundary_point_along, chart_at
from .errors import (
    ChartError,
    DomainError,
    InteriorPointError,
    NoConvergenceError,
    OverlapError,
    ParameterError,
    RankDeficiencyError,
    RankDeficiencyWarning,
    SeedError,
)

TOL_ROOT = 1e-10
TOL_BOUNDARY = 1e-10
SIGMA_RANK_TOL = 1e-8  # relative threshold for rank counting
SIGMA_TRACE_TOL = 1e-6  # relative health threshold while tracing
NEAR_SINGULAR_TOL = 1e-3  # conditioning collapse classifying step failures
MAX_SOLVE_ITER = 50
FD_CONSISTENCY_TOL = 1e-3


# ---------------------------------------------------------------------------
# elementary projection operations


def _tangential_descent_projection(body: ImplicitBody, x, y0, max_iter: int = 400):
    """Nearest-point fallback needing only boundary re-rooting.

    Walks the boundary (radial re-rooting keeps iterates on it, the body
    being star-shaped around its center) in the direction that shrinks
    ``|x - y|``; halves the step on non-decrease.  Convexity of the distance
    makes monotone descent converge to the argmin even across gradient
    kinks, where the stationarity system has no smooth root.
    """
    y = np.asarray(y0, float)
    dist = float(np.linalg.norm(x - y))
    scale = max(1.0, body.bounding_radius)
    step = 0.25 * scale
    it = 0
    while step > 1e-12 * scale and it < max_iter:
        it += 1
        d = x - y
        g = body.gradient_at(y)
        nrm = np.linalg.norm(g)
        if nrm < 1e-300:
            break
        nhat = g / nrm
        d_tan = d - float(np.dot(d, nhat)) * nhat
        nt = float(np.linalg.norm(d_tan))
        if nt < 1e-14 * scale:
            break
        try:
            y_try = boundary_point_along(body, y + min(step, nt) * d_tan / nt - body.center)
        except (ChartError, ParameterError):
            step *= 0.5
            continue
        d_try = float(np.linalg.norm(x - y_try))
        if d_try < dist:
            y, dist = y_try, d_try
            step *= 1.3
        else:
            step *= 0.5
    return y


def project_point(body: ImplicitBody, x, tol: float = TOL_ROOT) -> np.ndarray:
    """Nearest point of the body to ``x`` (unique by convexity).

    Solves the stationarity system ``F(y) = 0``, ``x - y = s grad F(y)`` with
    s >= 0 by damped Newton from a ray-crossing seed; when Newton stalls
    (the argmin can sit on a gradient kink of a piecewise-smooth body) a
    monotone tangential-descent fallback finds the argmin instead.  Points
    already on the boundary project to themselves; interior points raise
    InteriorPointError since the disjoint-body machinery never needs them.
    """
    x = np.asarray(x, float)
    fx = body.value_at(x)
    scale = max(1.0, body.bounding_radius)
    if abs(fx) <= TOL_BOUNDARY * scale:
        return x.copy()
    if fx < 0:
        raise InteriorPointError("point lies inside the body; projection is itself")

    n = body.dim
    y = boundary_point_along(body, x - body.center)
    g = body.gradient_at(y)
    s = float(np.dot(x - y, g)) / max(float(np.dot(g, g)), 1e-300)
    s = max(s, 1e-12)

    def residual(y, s):
        return np.concatenate([[body.value_at(y)], (x - y) - s * body.gradient_at(y)])

    r = residual(y, s)
    best = (float(np.abs(r).max()), y.copy(), s)
    for _ in range(100):
        if float(np.abs(r).max()) <= tol * scale:
            break
        g = body.gradient_at(y)
        H = body.hessian_at(y)
        J = np.zeros((n + 1, n + 1))
        J[0, :n] = g
        J[1:, :n] = -np.eye(n) - s * H
        J[1:, n] = -g
        try:
            step = np.linalg.lstsq(J, -r, rcond=None)[0]
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        for _ in range(30):
            y_new = y + lam * step[:n]
            s_new = max(s + lam * step[n], 1e-14)
            r_new = residual(y_new, s_new)
            if float(np.abs(r_new).max()) < float(np.abs(r).max()):
                y, s, r = y_new, s_new, r_new
                break
            lam *= 0.5
        else:
            break
        if float(np.abs(r).max()) < best[0]:
            best = (float(np.abs(r).max()), y.copy(), s)
    if best[0] <= tol * scale:
        return best[1]

    y = _tangential_descent_projection(body, x, best[1])
    g = body.gradient_at(y)
    s = float(np.dot(x - y, g)) / max(float(np.dot(g, g)), 1e-300)
    kkt = float(np.abs(residual(y, max(s, 0.0))).max())
    near_kink = body.kink_margin is not None and body.kink_margin(y) < 1e-4 * scale
    if kkt > tol * scale and not near_kink:
        raise NoConvergenceError(
            f"projection residual {min(best[0], kkt):.3g} above tolerance {tol * scale:.3g}"
        )
    return y


def first_hitting_time(
    body: ImplicitBody, y, nu, t_max: float | None = None, n_march: int = 64
) -> float | None:
    """Smallest t >= 0 with ``y + t nu`` on the body boundary, or None.

    Coarse march for the common transversal hit, then an exact grazing
    check: G is convex along the ray, so its minimum is found by ternary
    search and the ray misses exactly when that minimum is positive.  The
    march spans twice the bounding span unless ``t_max`` is given.
    """
    y = np.asarray(y, float)
    nu = np.asarray(nu, float)
    nn = np.linalg.norm(nu)
    if nn < 1e-14:
        raise ParameterError("zero ray direction")
    nu = nu / nn
    if body.value_at(y) < -TOL_BOUNDARY * max(1.0, body.bounding_radius):
        raise ParameterError("ray origin lies inside the body")
    if t_max is None:
        t_max = 2.0 * (float(np.linalg.norm(y - body.center)) + body.bounding_radius)

    g = lambda t: body.value_at(y + t * nu)
    if g(0.0) <= 0:
        return 0.0

    def first_crossing(lo, hi):
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if g(mid) <= 0:
                hi = mid
            else:
                lo = mid
            if hi - lo < 1e-14 * max(1.0, t_max):
                break
        return 0.5 * (lo + hi)

    ts = np.linspace(0.0, t_max, n_march + 1)
    prev_t = 0.0
    for t in ts[1:]:
        if g(float(t)) <= 0:
            return first_crossing(prev_t, float(t))
        prev_t = float(t)

    # no sign change on the march: locate the convex minimum exactly
    lo, hi = 0.0, t_max
    for _ in range(200):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if g(m1) <= g(m2):
            hi = m2
        else:
            lo = m1
        if hi - lo < 1e-14 * max(1.0, t_max):
            break
    t_min = 0.5 * (lo + hi)
    if g(t_min) > 0:
        return None
    return first_crossing(0.0, t_min)


def in_projection_shadow(omega: ImplicitBody, lam: ImplicitBody, y) -> bool:
    """Whether the target boundary point ``y`` is shadowed by ``omega``.

    True exactly when the outward-normal ray of the target at y hits the
    closure of omega.  y must lie on the target's boundary.
    """
    y = np.asarray(y, float)
    if abs(lam.value_at(y)) > 10 * TOL_BOUNDARY * max(1.0, lam.bounding_radius):
        raise DomainError("y is not on the target boundary")
    nu = lam.unit_normal(y)
    return first_hitting_time(omega, y, nu) is not None


# ---------------------------------------------------------------------------
# the boundary-defining map and its Jacobian


def boundary_map(omega: ImplicitBody, lam: ImplicitBody, z) -> np.ndarray:
    """The (n+3)-vector Phi(x, y, t) whose zero set is the shadow boundary."""
    n = omega.dim
    x, y, t = z[:n], z[n : 2 * n], z[2 * n]
    gG = omega.gradient_at(x)
    gF = lam.gradient_at(y)
    return np.concatenate(
        [
            [omega.value_at(x), lam.value_at(y), float(np.dot(gG, gF))],
            y + t * gF - x,
        ]
    )


def boundary_jacobian(omega: ImplicitBody, lam: ImplicitBody, z) -> np.ndarray:
    """Analytic (n+3) x (2n+1) Jacobian of the boundary-defining map."""
    n = omega.dim
    x, y, t = z[:n], z[n : 2 * n], z[2 * n]
    gG = omega.gradient_at(x)
    gF = lam.gradient_at(y)
    HG = omega.hessian_at(x)
    HF = lam.hessian_at(y)
    J = np.zeros((n + 3, 2 * n + 1))
    J[0, :n] = gG
    J[1, n : 2 * n] = gF
    J[2, :n] = HG @ gF
    J[2, n : 2 * n] = HF @ gG
    J[3:, :n] = -np.eye(n)
    J[3:, n : 2 * n] = np.eye(n) + t * HF
    J[3:, 2 * n] = gF
    return J


@dataclass(frozen=True)
class ProjectionPoint:
    """Solved boundary configuration: contact x, shadow point y, ray scale t.

    ``residual`` is the max-norm of the defining map, ``sigma_min`` the
    smallest of the n+3 singular values of its Jacobian there.
    ``hessian_inconsistent`` flags points where finite-difference Hessians
    at two step sizes disagree (boundary not twice differentiable there).
    """

    x: np.ndarray
    y: np.ndarray
    t: float
    residual: float
    sigma_min: float
    iterations: int = 0
    hessian_inconsistent: bool = False

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, float))
        object.__setattr__(self, "y", np.asarray(self.y, float))

    @property
    def state(self) -> np.ndarray:
        return np.concatenate([self.x, self.y, [self.t]])


def certify_rank(
    omega: ImplicitBody, lam: ImplicitBody, point: ProjectionPoint, sigma_tol: float = SIGMA_RANK_TOL
):
    """Rank of the defining Jacobian at a solved point, by SVD.

    Returns ``(rank, sigma_min)`` where rank counts singular values above
    ``sigma_tol * sigma_max`` and sigma_min is the smallest of the n+3
    singular values.  Full rank n+3 certifies that the boundary is locally a
    smooth (n-2)-manifold; a drop flags a flat contact direction.
    """
    J = boundary_jacobian(omega, lam, point.state)
    sv = np.linalg.svd(J, compute_uv=False)
    sigma_max = float(sv[0])
    rank = int(np.sum(sv > sigma_tol * sigma_max)) if sigma_max > 0 else 0
    return rank, float(sv[-1])


def solve_boundary_point(
    omega: ImplicitBody,
    lam: ImplicitBody,
    seed,
    tol: float = TOL_ROOT,
    max_iter: int = MAX_SOLVE_ITER,
    check_hessian_consistency: bool | None = None,
) -> ProjectionPoint:
    """Gauss-Newton solve of the boundary-defining map from a seed (x, y, t).

    Uses least-norm steps (pseudoinverse) so iterates stay near the seed on
    the solution manifold.  At convergence the hitting parameter is
    cross-checked against |x - y| / |grad F(y)| and the smallest singular
    value of the Jacobian is reported, with a RankDeficiencyWarning when it
    falls under the rank threshold.
    """
    n = omega.dim
    if isinstance(seed, tuple) and len(seed) == 3:
        z = np.concatenate(
            [np.asarray(seed[0], float), np.asarray(seed[1], float), [float(seed[2])]]
        )
    else:
        z = np.asarray(seed, float).ravel()
    if z.shape[0] != 2 * n + 1:
        raise ParameterError(f"seed must have 2n+1 = {2 * n + 1} components")
    scale = max(1.0, omega.bounding_radius, lam.bounding_radius)

    r = boundary_map(omega, lam, z)
    if not np.all(np.isfinite(r)):
        raise ParameterError("seed residual is not finite")
    iters = 0
    for iters in range(max_iter + 1):
        if float(np.abs(r).max()) <= tol:
            break
        J = boundary_jacobian(omega, lam, z)
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        ns = float(np.linalg.norm(step))
        if ns > 0.5 * scale:
            step *= 0.5 * scale / ns
        lam_ls = 1.0
        improved = False
        r_norm = float(np.abs(r).max())
        for _ in range(25):
            z_new = z + lam_ls * step
            r_new = boundary_map(omega, lam, z_new)
            if np.all(np.isfinite(r_new)) and float(np.abs(r_new).max()) < r_norm:
                z, r = z_new, r_new
                improved = True
                break
            lam_ls *= 0.5
        if not improved:
            break
    if float(np.abs(r).max()) > tol:
        raise NoConvergenceError(
            f"boundary solve stalled at residual {float(np.abs(r).max()):.3g} "
            f"after {iters} iterations"
        )

    x, y, t = z[:n], z[n : 2 * n], float(z[2 * n])
    if t <= 0:
        raise NoConvergenceError(f"solve converged to nonpositive hitting scale t = {t:.3g}")
    gF = lam.gradient_at(y)
    t_implied = float(np.linalg.norm(x - y)) / max(float(np.linalg.norm(gF)), 1e-300)
    if abs(t - t_implied) > 1e-8 * max(1.0, t):
        raise NoConvergenceError(
            f"hitting-parameter cross-check failed: t = {t:.12g} vs |x-y|/|grad F| = "
            f"{t_implied:.12g}"
        )

    J = boundary_jacobian(omega, lam, z)
    sv = np.linalg.svd(J, compute_uv=False)
    sigma_min = float(sv[-1])
    if sigma_min < SIGMA_RANK_TOL * float(sv[0]):
        warnings.warn(
            f"Jacobian nearly rank deficient at solved point (sigma_min = {sigma_min:.3g})",
            RankDeficiencyWarning,
            stacklevel=2,
        )

    inconsistent = False
    if check_hessian_consistency is None:
        check_hessian_consistency = not (omega.has_analytic_hessian and lam.has_analytic_hessian)
    if check_hessian_consistency:
        for body, pt in ((omega, x), (lam, y)):
            if not body.has_analytic_hessian and body.fd_hessian_consistency(pt) > FD_CONSISTENCY_TOL:
                inconsistent = True

    return ProjectionPoint(
        x=x,
        y=y,
        t=t,
        residual=float(np.abs(r).max()),
        sigma_min=sigma_min,
        iterations=iters,
        hessian_inconsistent=inconsistent,
    )


# ---------------------------------------------------------------------------
# disjointness and closest pairs


def closest_pair(omega: ImplicitBody, lam: ImplicitBody, max_iter: int = 500, tol: float = 1e-12):
    """Closest boundary points via alternating projections.

    Returns ``(x, z, distance)`` with x on omega and z on lam.  Raises
    OverlapError when an iterate lands inside the other body or the gap
    closes, which is exactly the disjointness failure mode.
    """
    scale = max(1.0, omega.bounding_radius, lam.bounding_radius)
    try:
        z = project_point(lam, omega.center)
        x = project_point(omega, z)
    except InteriorPointError as exc:
        raise OverlapError(f"bodies overlap: {exc}") from exc
    dist = float(np.linalg.norm(x - z))
    for _ in range(max_iter):
        try:
            z_new = project_point(lam, x)
            x_new = project_point(omega, z_new)
        except InteriorPointError as exc:
            raise OverlapError(f"bodies overlap: {exc}") from exc
        d_new = float(np.linalg.norm(x_new - z_new))
        move = max(
            float(np.linalg.norm(x_new - x)), float(np.linalg.norm(z_new - z))
        )
        x, z, dist = x_new, z_new, d_new
        if move < tol * scale:
            break
    if dist <= 1e-9 * scale:
        raise OverlapError(f"bodies touch or overlap (closest gap {dist:.3g})")
    return x, z, dist


def assert_disjoint(omega: ImplicitBody, lam: ImplicitBody) -> float:
    """Validate disjoint closures; returns the separation distance.

    Runs the alternating-projection closest-pair search and confirms a
    separating hyperplane along the closest-pair direction by checking both
    support values.  Overlapping or touching bodies raise OverlapError.
    """
    x, z, dist = closest_pair(omega, lam)
    d = (x - z) / dist
    # support check: omega lies at <d, .> >= <d, x>, lam at <= <d, z>, up to
    # curvature-limited slack from the finitely converged pair
    sep = float(np.dot(d, x) - np.dot(d, z))
    if sep <= 0:
        raise OverlapError("support-hyperplane check failed: no positive separation")
    return dist


def hitting_time_bound(omega: ImplicitBody, lam: ImplicitBody, chart_radius: float | None = None) -> float:
    """Upper bound for hitting times from a chart patch of the target.

    distance between the bodies plus twice the larger of the projected
    body's diameter and the chart-patch diameter.
    """
    _, _, dist = closest_pair(omega, lam)
    diam_patch = 2.0 * (chart_radius if chart_radius is not None else lam.bounding_radius)
    return dist + 2.0 * max(omega.diameter_bound(), diam_patch)


# ---------------------------------------------------------------------------
# seeding


def _boundary_on_ray(lam: ImplicitBody, d: np.ndarray) -> np.ndarray:
    return boundary_point_along(lam, d)


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    ct = 1.0 - 2.0 * i / n
    st = np.sqrt(1.0 - ct**2)
    return np.column_stack([st * np.cos(phi), st * np.sin(phi), ct])


def seed_boundary(
    omega: ImplicitBody,
    lam: ImplicitBody,
    n_samples: int = 64,
    rng=None,
    patch_center=None,
    patch_angle: float | None = None,
):
    """Seed (x0, y0, t0) near the shadow boundary on the target.

    Samples target boundary points along rays from its center, classifies
    them by shadow membership, and bisects the membership flip along the
    great arc between an inside and an outside sample.  ``patch_center`` and
    ``patch_angle`` optionally restrict sampling to a cap of directions.
    Raises SeedError when the sampled patch is entirely inside or entirely
    outside the shadow.
    """
    rng = np.random.default_rng(rng)
    if patch_center is not None:
        c = np.asarray(patch_center, float)
        c = c / np.linalg.norm(c)
        ang = patch_angle if patch_angle is not None else math.pi / 4
        if lam.dim == 3:
            # Fibonacci points on the cap around c of the given angular radius
            i = np.arange(n_samples) + 0.5
            az = math.pi * (3.0 - math.sqrt(5.0)) * i
            ct = 1.0 - (1.0 - math.cos(ang)) * i / n_samples
            st = np.sqrt(np.clip(1.0 - ct**2, 0.0, None))
            cap = np.column_stack([st * np.cos(az), st * np.sin(az), ct])
            from .bodies import rotation_with_last_axis

            dirs = cap @ rotation_with_last_axis(c).T
        else:
            dirs = c + math.tan(ang) * rng.normal(size=(n_samples, lam.dim))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            dirs = dirs[dirs @ c >= math.cos(ang)]
            if len(dirs) == 0:
                raise SeedError("direction patch is empty")
    elif lam.dim == 3:
        dirs = _fibonacci_sphere(n_samples)
    else:
        dirs = rng.normal(size=(n_samples, lam.dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    if patch_center is None:
        # the target point closest to the projected body is always shadowed
        # (its outward normal ray ends at the closest point of omega), so it
        # anchors the inside class even when the shadow cap is tiny
        _, z_close, _ = closest_pair(omega, lam)
        d_close = z_close - lam.center
        d_close = d_close / np.linalg.norm(d_close)
        dirs = np.vstack([d_close, dirs])

    members = []
    for d in dirs:
        y = _boundary_on_ray(lam, d)
        members.append((d, in_projection_shadow(omega, lam, y)))
    inside = [d for d, m in members if m]
    outside = [d for d, m in members if not m]
    if not inside or not outside:
        kind = "inside" if not outside else "outside"
        raise SeedError(
            f"all {len(members)} sampled directions are {kind} the shadow; "
            "cannot bracket its boundary on this patch"
        )

    # closest in/out pair, then arc bisection of the membership flip
    best = None
    for di in inside:
        for do in outside:
            gap = float(np.dot(di, do))
            if best is None or gap > best[0]:
                best = (gap, di, do)
    _, d_in, d_out = best

    def slerp(a, b, s):
        v = (1 - s) * a + s * b
        return v / np.linalg.norm(v)

    lo, hi = 0.0, 1.0  # lo side in shadow
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        y = _boundary_on_ray(lam, slerp(d_in, d_out, mid))
        if in_projection_shadow(omega, lam, y):
            lo = mid
        else:
            hi = mid
    y_in = _boundary_on_ray(lam, slerp(d_in, d_out, lo))
    y0 = _boundary_on_ray(lam, slerp(d_in, d_out, 0.5 * (lo + hi)))
    t_in = first_hitting_time(omega, y_in, lam.unit_normal(y_in))
    if t_in is None:
        raise SeedError("in-shadow sample lost its ray hit during bisection")
    x0 = y_in + t_in * lam.unit_normal(y_in)
    gF = lam.gradient_at(y0)
    t0 = float(np.linalg.norm(x0 - y0)) / max(float(np.linalg.norm(gF)), 1e-300)
    return x0, y0, t0


# ---------------------------------------------------------------------------
# tracing


@dataclass(frozen=True)
class BoundaryTrace:
    """Ordered solved points along one component of the shadow boundary."""

    points: list
    closed: bool
    arc_length: float
    step: float
    diagnostics: str = ""

    def __len__(self):
        return len(self.points)

    def y_points(self) -> np.ndarray:
        return np.array([p.y for p in self.points])

    def x_points(self) -> np.ndarray:
        return np.array([p.x for p in self.points])

    def to_csv(self, path):
        n = self.points[0].y.shape[0]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [f"x_{i + 1}" for i in range(n)]
                + [f"y_{i + 1}" for i in range(n)]
                + ["t", "residual", "sigma_min"]
            )
            for p in self.points:
                writer.writerow(
                    [f"{v:.17g}" for v in p.x]
                    + [f"{v:.17g}" for v in p.y]
                    + [f"{p.t:.17g}", f"{p.residual:.17g}", f"{p.sigma_min:.17g}"]
                )

    def to_json(self, path, metadata: dict | None = None):
        doc = {
            "closed": self.closed,
            "n_points": len(self.points),
            "arc_length": self.arc_length,
            "step": self.step,
            "diagnostics": self.diagnostics,
            "min_sigma_min": min(p.sigma_min for p in self.points),
            "max_residual": max(p.residual for p in self.points),
        }
        if metadata:
            doc.update(metadata)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)

    @staticmethod
    def read_trace_csv(path) -> np.ndarray:
        """Columns of a trace CSV as an array; validates the header shape."""
        with open(path, "r", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[-3:] != ["t", "residual", "sigma_min"] or (len(header) - 3) % 2:
                raise ParameterError(f"not a boundary-trace CSV header: {header}")
            rows = [[float(v) for v in row] for row in reader if row]
        if not rows:
            raise ParameterError("trace CSV has no rows")
        return np.array(rows)


def _null_direction(J: np.ndarray) -> np.ndarray:
    _, _, vt = np.linalg.svd(J)
    return vt[-1]


def trace_boundary(
    omega: ImplicitBody,
    lam: ImplicitBody,
    start: ProjectionPoint,
    step: float,
    max_steps: int,
    tol: float = TOL_ROOT,
    rank_tol: float = SIGMA_TRACE_TOL,
) -> BoundaryTrace:
    """Predictor-corrector continuation of the shadow boundary curve (n = 3).

    The predictor walks along the one-dimensional null space of the defining
    Jacobian; the corrector is the least-norm Gauss-Newton solve.  The step
    halves on corrector failure, doubles after three easy successes, and is
    clamped to [step/16, step].  Tracing stops on closure (returning within
    step/2 of the start after at least 10 steps), on ``max_steps``, or with
    RankDeficiencyError when sigma_min falls under ``rank_tol * sigma_max``.
    """
    if omega.dim != 3:
        raise ParameterError("curve tracing is implemented for dimension 3 only")
    if step <= 0:
        raise ParameterError("step must be positive")
    points = [start]
    if max_steps <= 0:
        return BoundaryTrace([start], False, 0.0, step, "max_steps = 0")

    J = boundary_jacobian(omega, lam, start.state)
    sv = np.linalg.svd(J, compute_uv=False)
    if sv[-1] < rank_tol * sv[0]:
        raise RankDeficiencyError(
            f"start point is rank deficient (sigma_min/sigma_max = {sv[-1] / sv[0]:.3g})"
        )

    h = step
    h_min, h_max = step / 16.0, step
    tangent = _null_direction(J)
    easy = 0
    closed = False
    diagnostics = ""
    z = start.state
    arc = 0.0
    for k in range(max_steps):
        predictor = z + h * tangent
        try:
            pt = solve_boundary_point(omega, lam, predictor, tol=tol)
            jump = float(np.linalg.norm(pt.state - z))
            if jump > 3.0 * h + 1e-12:
                raise NoConvergenceError(f"corrector jumped {jump:.3g} for step {h:.3g}")
        except (NoConvergenceError, InteriorPointError) as exc:
            if h <= h_min * 1.0001:
                # certify the failure region: a flat contact direction shows
                # up as collapsed conditioning at the predictor or at the
                # last corrected point
                rel = []
                for state in (predictor, z):
                    sv = np.linalg.svd(
                        boundary_jacobian(omega, lam, state), compute_uv=False
                    )
                    rel.append(sv[-1] / sv[0] if sv[0] > 0 else 0.0)
                if min(rel) < max(rank_tol, NEAR_SINGULAR_TOL):
                    raise RankDeficiencyError(
                        "corrector failed at minimal step near a rank-deficient "
                        f"configuration (sigma_min/sigma_max = {min(rel):.3g})"
                    ) from exc
                diagnostics = f"truncated: corrector failed at minimal step ({exc})"
                break
            h = max(h / 2.0, h_min)
            easy = 0
            continue

        sv = np.linalg.svd(boundary_jacobian(omega, lam, pt.state), compute_uv=False)
        if sv[-1] < rank_tol * sv[0]:
            raise RankDeficiencyError(
                f"rank drop along the trace (sigma_min/sigma_max = {sv[-1] / sv[0]:.3g})"
            )

        arc += float(np.linalg.norm(pt.y - points[-1].y))
        points.append(pt)
        new_tangent = _null_direction(boundary_jacobian(omega, lam, pt.state))
        if float(np.dot(new_tangent, tangent)) < 0:
            new_tangent = -new_tangent
        tangent = new_tangent
        z = pt.state

        if pt.iterations <= 3:
            easy += 1
            if easy >= 3:
                h = min(2.0 * h, h_max)
                easy = 0
        else:
            easy = 0

        if k >= 10 and float(np.linalg.norm(pt.y - start.y)) < step / 2.0:
            closed = True
            arc += float(np.linalg.norm(pt.y - start.y))
            break
    else:
        diagnostics = diagnostics or "max_steps reached without closure"

    return BoundaryTrace(points, closed, arc, step, diagnostics)


# ---------------------------------------------------------------------------
# barrier construction on target charts


def barrier_chart(chart: ConcaveChart, t_star: float) -> ConcaveChart:
    """Uniformly concave barrier chart ``psi = phi - |z'|^2 / (2 t*)``.

    Subtracting the paraboloid turns any concave chart into one with
    concavity modulus at least ``1/t*``, which is what makes the shadow
    boundary of the barrier a Lipschitz graph.
    """
    if t_star <= 0:
        raise ParameterError("t_star must be positive")
    inv = 1.0 / t_star
    psi = lambda z: chart.phi(z) - 0.5 * inv * float(np.dot(z, z))
    grad = lambda z: np.asarray(chart.grad_phi(z), float) - inv * np.asarray(z, float)
    hess = None
    if chart.hess_phi is not None:
        hess = lambda z: np.asarray(chart.hess_phi(z), float) - inv * np.eye(chart.dim_domain)
    theta = (chart.concavity_theta or 0.0) + inv
    L = (chart.holder_L + inv) if chart.holder_L is not None else None
    return replace(
        chart,
        phi=psi,
        grad_phi=grad,
        hess_phi=hess,
        concavity_theta=theta,
        holder_L=L,
        holder_alpha=1.0 if chart.holder_alpha in (None, 1.0) else chart.holder_alpha,
    )


def barrier_psi(chart: ConcaveChart, t_star: float, z_prime) -> float:
    """Value of the barrier ``phi(z') - |z'|^2 / (2 t*)`` at ``z'``."""
    if t_star <= 0:
        raise ParameterError("t_star must be positive")
    z = np.atleast_1d(np.asarray(z_prime, float))
    return chart.value(z) - float(np.dot(z, z)) / (2.0 * t_star)


def barrier_gamma_bar(chart: ConcaveChart, t_star: float, zpp, tol_root: float | None = None) -> float:
    """One-sided Lipschitz bound ``max(gamma_tilde, 0)`` for the shadow.

    ``gamma_tilde`` solves ``d psi / d z_{n-1} (z'', t) = 0`` on the barrier
    chart; the chart's (n-1)-st tangent axis must already point along the
    tangential normal direction of the projected body (build the chart with
    that ``tangent_hint``).
    """
    bc = barrier_chart(chart, t_star)
    m = bc.dim_domain
    u_chart = np.zeros(m + 1)
    u_chart[m - 1] = 1.0
    u_world = bc.pose.rotate_to_world(u_chart) if bc.pose is not None else u_chart
    gamma_tilde, _ = illumination.shadow_boundary_gamma(
        bc, illumination.Direction(u_world), zpp, tol_root
    )
    return max(gamma_tilde, 0.0)


def shadow_chart_frame(
    omega: ImplicitBody, lam: ImplicitBody, point: ProjectionPoint, domain_radius: float | None = None
) -> ConcaveChart:
    """Chart of the target at a solved boundary point, axes adapted to the
    barrier construction: the (n-1)-st tangent axis is the outward normal of
    the projected body at the contact point (tangent to the target there by
    the orthogonality equation)."""
    nu_omega = omega.unit_normal(point.x)
    return chart_at(lam, point.y, domain_radius=domain_radius, tangent_hint=nu_omega)
