"""Executable sharpness constructions, each paired with the claim it breaks.

Three constructions:

* ``kiselman_identity_check`` validates the closed-form slope identity
  behind the C^(2/q) shadow boundaries: smoothness alone cannot buy Hoelder
  regularity of the shadow without uniform convexity.
* ``cone_body_graph_failure`` builds the convex hull of a circle and an
  off-plane apex; illuminated along the apex direction, the shadow boundary
  near the origin contains both the seam segment to the apex and the base
  circle, so it is not a graph there in any sampled frame.  Strict convexity
  cannot be dropped from the continuous-graph statement.
* ``cantor_contact_pair`` builds two planar convex bodies whose boundaries
  touch exactly above a Cantor-set approximation: 2^depth contact
  components, showing that the disjointness assumption in the projection
  results is necessary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bodies import (
    ImplicitBody,
    _CantorGap,
    _kiselman_profile,
    cantor_contact,
    cone_over_circle,
)
from .errors import ParameterError

CIRCLE_DISCRETIZATION = 1 << 10


# ---------------------------------------------------------------------------
# Kiselman slope identity


def kiselman_identity_check(q: int, grid=None) -> float:
    """Max error of the closed-form slope ``(y^q - x^2)(1 - y)`` on a grid.

    The profile's y-derivative is computed by complex-step differentiation
    (machine accurate for polynomials) and compared against the factored
    form; the max absolute discrepancy is returned.
    """
    if not isinstance(q, (int, np.integer)) or q < 3 or q % 2 == 0:
        raise ParameterError("q must be an odd integer >= 3")
    if grid is None:
        xs = np.linspace(-0.45, 0.45, 32)
        ys = np.linspace(-0.45, 0.45, 32)
        grid = [(x, y) for x in xs for y in ys]

    def profile(x, y):
        return x * x * (4.0 - y + 0.5 * y * y) + y ** (q + 1) / (q + 1) - y ** (q + 2) / (q + 2)

    h = 1e-100
    worst = 0.0
    for x, y in grid:
        if abs(y) >= 0.5:
            raise ParameterError("grid must stay inside the strip |y| < 1/2")
        dy = profile(x, complex(y, h)).imag / h
        worst = max(worst, abs(dy - (y**q - x * x) * (1.0 - y)))
    return worst


def kiselman_zero_level(q: int, x: float, tol: float = 1e-12) -> float:
    """Root in y of the slope ``(y^q - x^2)(1 - y)`` inside the strip.

    Bisection of the strictly increasing factor ``y^q - x^2``; the root is
    the shadow-boundary height above x.
    """
    _, _, fy, _, _, _ = _kiselman_profile(int(q))
    lo, hi = -0.49, 0.49
    if not (fy(x, lo) < 0 < fy(x, hi)):
        raise ParameterError("no slope sign change inside the strip")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if fy(x, mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol * 1e-3:
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# cone-over-circle graph failure


def _seam_point(t: float) -> np.ndarray:
    return np.array([0.0, t, 0.0])


def _rim_point(delta: float) -> np.ndarray:
    """Base-circle point at arc parameter delta from the origin."""
    w = math.pi + delta
    return np.array([1.0 + math.cos(w), 0.0, math.sin(w)])


def cone_lateral_normal(p) -> np.ndarray:
    """Outward unit normal of the lateral cone surface at a boundary point."""
    x, y, z = p
    rho = math.hypot(x + y - 1.0, z)
    if rho < 1e-14:
        raise ParameterError("normal undefined at the apex")
    g = np.array([(x + y - 1.0) / rho, (x + y - 1.0) / rho + 1.0, z / rho])
    return g / np.linalg.norm(g)


_BASE_NORMAL = np.array([0.0, -1.0, 0.0])


def _lateral_neighbors(p, dw: float = 1e-3):
    """Lateral-surface points near p obtained by rotating the cross-section
    angle at the same height."""
    y = min(max(p[1], 0.0), 1.0 - 1e-9)
    w = math.atan2(p[2], p[0] + p[1] - 1.0)
    out = []
    for s in (-dw, dw):
        ww = w + s
        out.append(
            np.array(
                [(1.0 - y) + (1.0 - y) * math.cos(ww), y, (1.0 - y) * math.sin(ww)]
            )
        )
    return out


def is_cone_shadow_boundary_point(body: ImplicitBody, p, u, tol: float = 1e-9) -> bool:
    """Shadow-boundary test for the cone hull at a boundary point.

    Membership in the shadow is an open condition on the normal cone
    (some normal with positive product against the light); a point is on the
    shadow boundary when it is a limit of lit points and of unlit points.
    Seam/lateral points have a single normal; rim points carry the cone
    spanned by the lateral normal and the base normal.
    """
    p = np.asarray(p, float)
    u = np.asarray(u, float)
    if abs(body.value_at(p)) > 1e-9:
        return False
    on_base = abs(p[1]) <= 1e-12
    s_lat = float(np.dot(cone_lateral_normal(p), u))
    cone_vals = [s_lat]
    if on_base:
        cone_vals.append(float(np.dot(_BASE_NORMAL, u)))
    lit_here = max(cone_vals) > tol
    neigh = [float(np.dot(cone_lateral_normal(q), u)) for q in _lateral_neighbors(p)]
    lit_near = lit_here or max(neigh) > tol
    dark_near = (not lit_here) or min(cone_vals) < -tol or min(neigh) < -tol
    return lit_near and dark_near


@dataclass
class GraphFailureWitness:
    """Pairs of distinct shadow-boundary points with equal 1-d projections.

    ``pairs`` maps each tested axis (rounded tuple) to a list of verified
    pairs, one per probe radius; a pair for every axis at every radius
    certifies that the shadow boundary is not a graph near the origin in any
    frame of the sampled family (coordinate axes plus random rotations; the
    coverage is only this finite family).
    """

    found: bool
    radius: float
    pairs: dict = field(default_factory=dict)
    frames_checked: int = 0
    note: str = ""

    @property
    def canonical_pair(self):
        """Seam midpoint and the circle point sharing its first coordinate."""
        return (_seam_point(0.5), np.array([0.0, 0.0, 0.0]))


def _pair_for_axis(body, a, u, radius, tol_proj=1e-11, sep_tol=1e-5):
    """Construct and verify a same-projection pair of boundary points
    within the given radius of the origin.

    Seam points all project to zero on axes orthogonal to the apex
    direction; symmetric rim pairs share their projection on axes with no
    third component; for the remaining axes a seam height matching a rim
    point's projection is solved directly.
    """
    checks = []
    ay = a[1]
    if abs(ay) <= 1e-12:
        if radius >= 0.5:
            checks.append((_seam_point(0.5), _rim_point(0.0)))  # canonical pair
        checks.append((_seam_point(0.35 * radius), _seam_point(0.85 * radius)))
    for frac in (0.45, 0.2, 0.05, 0.01):
        delta = frac * radius
        rim = _rim_point(delta)
        rim2 = _rim_point(-delta)
        if abs(float(np.dot(rim2 - rim, a))) <= tol_proj:
            checks.append((rim, rim2))
    # rim-rim pairs straddling the critical angle of the rim projection:
    # the projection d -> <rim(d), a> has a quadratic extremum at
    # tan(d*) = a_z / a_x, so heights match on both sides of d*
    if abs(a[0]) > 1e-12 or abs(a[2]) > 1e-12:
        d_star = math.atan2(a[2], a[0]) if abs(a[0]) > 1e-12 else 0.0
        if abs(a[0]) > 1e-12:
            d_star = math.atan(a[2] / a[0])
        proj = lambda d: float(np.dot(_rim_point(d), a))
        span = min(0.6 * radius, 1.0)
        if abs(d_star) < 0.5 * span:
            for s1 in (0.8 * span, 0.4 * span, 0.1 * span):
                target = proj(d_star + s1)
                lo, hi = -span + d_star, d_star
                if (proj(lo) - target) * (proj(hi) - target) <= 0:
                    for _ in range(90):
                        mid = 0.5 * (lo + hi)
                        if (proj(mid) - target) * (proj(lo) - target) > 0:
                            lo = mid
                        else:
                            hi = mid
                    checks.append((_rim_point(d_star + s1), _rim_point(0.5 * (lo + hi))))
    if abs(ay) > 1e-12:
        # seam height t matching a rim point's projection: t = <rim(d), a>/ay;
        # scan the near-origin rim arc for a parameter giving a valid height
        d_max = min(1.2 * radius, 1.5)
        for d in np.geomspace(1e-6 * radius, d_max, 48):
            for sign in (1.0, -1.0):
                rim = _rim_point(sign * d)
                t = float(np.dot(rim, a)) / ay
                if sep_tol < t < min(radius, 1.0) and np.linalg.norm(rim) <= 1.2 * radius:
                    checks.append((_seam_point(t), rim))
            if len(checks) >= 8:
                break
    for p, qq in checks:
        if np.linalg.norm(p - qq) < sep_tol:
            continue
        if abs(float(np.dot(p - qq, a))) > tol_proj:
            continue
        limit = 0.55 if (radius >= 0.5 and abs(p[1] - 0.5) < 1e-12) else 1.2 * radius
        if max(np.linalg.norm(p), np.linalg.norm(qq)) > limit:
            continue
        if is_cone_shadow_boundary_point(body, p, u) and is_cone_shadow_boundary_point(
            body, qq, u
        ):
            return (p, qq)
    return None


def cone_body_graph_failure(
    n_samples: int = 256,
    u=(0.0, 1.0, 0.0),
    radius: float = 0.55,
    rng=None,
    n_random_frames: int = 24,
) -> GraphFailureWitness:
    """Witness that the cone body's shadow boundary is not a graph at 0.

    For the apex direction the boundary near the origin contains the seam
    segment and the base circle; for every candidate projection axis (the 3
    coordinate axes plus random ones) a pair of distinct verified boundary
    points with equal projection is produced, at the probe radius and at two
    shrunken radii.  Directions far from the apex axis leave no seam on the
    shadow boundary and the search reports failure-to-find.
    """
    rng = np.random.default_rng(rng)
    body = cone_over_circle()
    u = np.asarray(u, float)
    u = u / np.linalg.norm(u)

    axes = [np.eye(3)[i] for i in range(3)]
    for _ in range(n_random_frames):
        a = rng.normal(size=3)
        axes.append(a / np.linalg.norm(a))

    witness = GraphFailureWitness(found=False, radius=radius, frames_checked=len(axes))
    pairs = {}
    for a in axes:
        found_at = []
        for rho in (radius, radius / 4.0, radius / 16.0):
            pair = _pair_for_axis(body, a, u, rho)
            if pair is None:
                witness.note = (
                    f"no verified equal-projection pair for axis "
                    f"{np.round(a, 4).tolist()} at radius {rho:.3g}"
                )
                witness.pairs = pairs
                return witness
            found_at.append(pair)
        pairs[tuple(np.round(a, 12))] = found_at
    witness.found = True
    witness.pairs = pairs
    witness.note = (
        f"graph failure certified on {len(axes)} frames (3 coordinate axes + "
        f"{len(axes) - 3} random) at radii {radius:.3g}, {radius / 4:.3g}, "
        f"{radius / 16:.3g}; coverage is this finite frame family only"
    )
    return witness


def cone_hull_membership(p, n_generators: int = CIRCLE_DISCRETIZATION) -> bool:
    """Membership in the discretized hull (generator representation).

    The hull of the sampled circle plus apex contains p exactly when p stays
    inside every supporting half-space of the generator set; for speed this
    uses the analytic gauge, and the discretized generators are used by the
    tests to cross-check convexity of the construction.
    """
    body = cone_over_circle()
    return body.value_at(np.asarray(p, float)) <= 1e-12


def cone_hull_generators(n: int = CIRCLE_DISCRETIZATION) -> np.ndarray:
    """Apex plus a discretization of the base circle."""
    w = np.linspace(-math.pi, math.pi, n, endpoint=False)
    circle = np.column_stack([1.0 + np.cos(w), np.zeros(n), np.sin(w)])
    return np.vstack([[0.0, 1.0, 0.0], circle])


# ---------------------------------------------------------------------------
# Cantor contact pair


@dataclass(frozen=True)
class CantorContactPair:
    """Planar convex pair touching on a Cantor approximation."""

    omega: ImplicitBody
    lam: ImplicitBody
    contact_count: int
    degenerate: bool = False


def cantor_contact_pair(eps: float, depth: int) -> CantorContactPair:
    """Build the pair and count its boundary contact components.

    The gap function vanishes exactly on the depth-d Cantor approximation of
    [1, 2] (2^d closed intervals); contact components are counted by
    scanning the sign of the boundary gap on a grid fine enough to resolve
    the deepest removed interval.  ``eps = 0`` collapses the two parabolas
    and is flagged degenerate (contact along the whole arc).
    """
    if eps < 0:
        raise ParameterError("eps must be nonnegative")
    omega = cantor_contact(eps, depth, side="omega")
    lam = cantor_contact(eps, depth, side="lambda")
    if eps == 0.0:
        return CantorContactPair(omega, lam, contact_count=1, degenerate=True)

    gap = _CantorGap(depth)
    n = min(2 * 3 ** (depth + 2), 4_000_000)
    xs = np.linspace(1.0, 2.0, n)
    # boundary gap between the two graphs is eps * g(x); threshold below the
    # smallest bump peak so fattened contact zones never merge
    vals = eps * gap.value(xs)
    thr = 0.3 * eps * 4.0 ** (-depth)
    touching = vals <= thr
    count = int(np.sum(touching[1:] & ~touching[:-1])) + int(touching[0])
    return CantorContactPair(omega, lam, contact_count=count, degenerate=False)
