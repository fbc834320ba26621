"""Nullcones: membership, graph form, position field, and containment tests.

A future local nullcone at (t*, x*) is the set where ∫_{t*}^{t} 1/f equals
the fibre distance to x* (past cones mirror the time integral). Away from a
vertex collar the cone is the graph of h(x) = C⁻¹(±d_F(x*, x); t*), which
feeds all the hypersurface machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fibre as fib
from .errors import ChartDomainError, HypothesisError, QuadratureRangeError
from .fields import ScalarField
from .grw import (GrwSpace, NullGeodesicRecord, SpacetimePoint,
                  SpacetimeTangent, null_geodesic_quadrature)
from .nullhyp import GraphHypersurface

VERTEX_COLLAR = 1e-3  # minimal base-quadrature value kept away from a vertex


@dataclass(eq=False)
class NullCone:
    space: GrwSpace
    t_star: float
    x_star: "fib.FibrePoint"
    orientation: str = "future"
    d_max: float = None

    def __post_init__(self):
        self.space.warping.require_inside(self.t_star)
        if self.orientation not in ("future", "past"):
            raise ValueError("orientation must be 'future' or 'past'")
        sign = 1.0 if self.orientation == "future" else -1.0
        self.sign = sign
        bound = self.space.fibre.injectivity_bound(self.x_star)
        c_lo, c_hi = self.space.warping.C_range(self.t_star)
        reach = c_hi if sign > 0 else -c_lo
        if self.d_max is None:
            self.d_max = min(bound, 0.999 * reach if math.isfinite(reach) else bound)
            if not math.isfinite(self.d_max):
                self.d_max = 10.0
        elif self.d_max > min(bound, reach):
            raise ChartDomainError(
                f"cone bound {self.d_max} exceeds the normal neighborhood "
                f"({bound}) or the time reach ({reach})")

    def generator(self, u, s_max=None) -> NullGeodesicRecord:
        return null_geodesic_quadrature(self.space, self.t_star, self.x_star, u,
                                        orientation=self.orientation,
                                        s_max=s_max, d_max=self.d_max)


def cone_contains(cone: NullCone, point: SpacetimePoint, tol=1e-8):
    """Membership via |±C(t; t*) − d_F(x*, x)| ≤ tol; returns (bool, residual)."""
    t, x = point.t, point.x
    d = cone.space.fibre.distance(cone.x_star, x)
    if d > cone.d_max + tol:
        raise ChartDomainError(f"point at fibre distance {d} outside the cone "
                               f"validity bound {cone.d_max}")
    c_value = cone.sign * cone.space.warping.C(t, cone.t_star)
    residual = abs(c_value - d)
    oriented = cone.sign * (t - cone.t_star) >= -tol
    return (residual <= tol and oriented), residual


def cone_as_graph(cone: NullCone, collar=VERTEX_COLLAR) -> GraphHypersurface:
    """The cone as a null graph h(x) = C⁻¹(±d_F(x*, x); t*) off the vertex."""
    space = cone.space
    model = space.fibre
    x_star = cone.x_star
    sign = cone.sign

    def h_value(coords):
        d = model.distance(x_star, model.point(coords))
        return space.warping.invert_C(sign * d, cone.t_star)

    def h_grad(coords):
        # ∇d_F is the unit radial field: f(h) d(x*,·) has gradient sign*f·radial
        x = model.point(coords)
        pos = fib.position_field(model, x_star, x)
        d = model.distance(x_star, x)
        g = model.metric_matrix(coords)
        unit_radial_flat = g @ (pos.components / d)
        t = h_value(coords)
        return sign * space.warping.f(t) * unit_radial_flat

    h = ScalarField.from_callable(h_value, model.dim, grad_fn=h_grad,
                                  label="cone-graph")

    def mask(coords):
        d = model.distance(x_star, model.point(coords))
        return collar <= d <= cone.d_max

    domain = _cone_domain_box(cone, collar)
    label = f"{cone.orientation}-cone@t={cone.t_star:g}"
    return GraphHypersurface(space, domain, h, mask=mask, label=label)


def _cone_domain_box(cone: NullCone, collar):
    """Chart box around the vertex; the annulus mask (collar ≤ d ≤ d_max)
    governs membership, so the box just has to contain the ball and respect
    the chart. Half-widths are metric-scaled per coordinate."""
    model = cone.space.fibre
    x = cone.x_star.coords
    g = model.metric_matrix(x)
    box = []
    for i, b in enumerate(model.box):
        w = 1.001 * cone.d_max / math.sqrt(g[i, i])
        box.append((max(x[i] - w, b[0]), min(x[i] + w, b[1])))
    return box


def position_field_cone(cone: NullCone, point: SpacetimePoint,
                        tol=1e-8) -> SpacetimeTangent:
    """Radial position vector at a cone point.

    Value: (a/f) ∂_t + (a / (f² c)) P_F with a = ∫ f and c = ∫ 1/f from the
    vertex time; equals s γ'(s) along the generating geodesic.
    """
    contained, residual = cone_contains(cone, point, tol=tol)
    if not contained:
        raise ChartDomainError(f"point not on the cone (residual {residual:.3e})")
    t = point.t
    w = cone.space.warping
    a = w.A(t, cone.t_star)
    c = w.C(t, cone.t_star)
    f = w.f(t)
    pos_fibre = fib.position_field(cone.space.fibre, cone.x_star, point.x)
    dx = (a / (f**2 * c)) * pos_fibre.components
    return cone.space.tangent(point, a / f, dx)


def position_field_cone_geodesic(cone: NullCone, point: SpacetimePoint
                                 ) -> SpacetimeTangent:
    """Independent route: P = s γ'(s) on the generator through the point."""
    v = fib.log_map(cone.space.fibre, cone.x_star, point.x)
    d = float(np.sqrt(v.components @ cone.space.fibre.metric_matrix(
        cone.x_star.coords) @ v.components))
    u = v.components / d
    s_star = cone.sign * cone.space.warping.A(point.t, cone.t_star)
    rec = cone.generator(u, s_max=s_star)
    vel = rec.velocity(s_star)
    return cone.space.tangent(point, s_star * vel.dt,
                              s_star * vel.dx.components)


# ---------------------------------------------------------------------------
# constant-curvature closed form for the umbilicity factor
# ---------------------------------------------------------------------------

def rw_cone_rho(k, profile, t_star, t, orientation="future"):
    """Umbilicity factor of a nullcone over a constant-curvature fibre.

    ρ(t) = (1/f²) (f' + √k·cot(√k c)), with the k = 0 and k < 0 limits
    1/c and √(−k)·coth(√(−k) c); c = ±∫_{t*}^{t} 1/f.
    """
    sign = 1.0 if orientation == "future" else -1.0
    c = sign * profile.C(t, t_star)
    if c <= VERTEX_COLLAR * 1e-3:
        raise ChartDomainError(f"too close to the vertex: c = {c:.3e}")
    f = profile.f(t)
    fp = profile.fp(t)
    if k > 0:
        root = math.sqrt(k)
        if root * c >= math.pi:
            raise ChartDomainError("past the focal distance of the round fibre")
        radial = root / math.tan(root * c)
    elif k == 0:
        radial = 1.0 / c
    else:
        root = math.sqrt(-k)
        radial = root / math.tanh(root * c)
    return sign * (fp + sign * radial) / f**2


def vertex_divergence_limit(cone: NullCone, c_start=0.2, levels=6):
    """Richardson limit of ρ(t)·c(t) as the vertex is approached.

    The limit is 1/f(t*)²; with f(t*) = 1 it is 1. Uses the measured trace
    of B on the cone graph at a geometric sequence of base values.
    """
    from .nullhyp import rho_at_point

    graph = cone_as_graph(cone)
    w = cone.space.warping
    u = _reference_direction(cone)
    values = []
    cs = [c_start * 2.0**-j for j in range(levels)]
    for c in cs:
        x = fib.exp_map(cone.space.fibre, cone.x_star, c * u)
        rho = rho_at_point(graph, x.coords)
        values.append(rho * c)
    return _richardson(cs, values), list(zip(cs, values))


def _reference_direction(cone: NullCone):
    model = cone.space.fibre
    g = model.metric_matrix(cone.x_star.coords)
    u = np.zeros(model.dim)
    u[0] = 1.0
    return u / math.sqrt(u @ g @ u)


def _richardson(hs, values):
    """Neville-style extrapolation to h → 0 for a geometric step sequence."""
    hs = np.asarray(hs, dtype=float)
    table = [np.asarray(values, dtype=float)]
    for level in range(1, len(values)):
        prev = table[-1]
        cur = np.empty(len(values) - level)
        for i in range(len(cur)):
            h0, h1 = hs[i], hs[i + level]
            cur[i] = (h0 * prev[i + 1] - h1 * prev[i]) / (h0 - h1)
        table.append(cur)
    return float(table[-1][0])


# ---------------------------------------------------------------------------
# containment criteria
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class ContainmentVerdict:
    contained: bool
    vertex_estimate: SpacetimePoint = None
    diagnostics: dict = None


def containment_by_gradient(surface: GraphHypersurface, x_star, t_star,
                            grid=None, directions=4, levels=6, r_start=0.12,
                            angle_tol=1e-8, limit_tol=1e-4) -> ContainmentVerdict:
    """Vertex test: ∇h parallel to the radial position field, and h → t* at x*.

    The limit is extrapolated along radial geodesics over a geometric radius
    sequence (ratio 1/2).
    """
    model = surface.space.fibre
    if not isinstance(x_star, fib.FibrePoint):
        x_star = model.point(x_star)
    if grid is None:
        grid = surface.grid(3)
    worst_angle = 0.0
    for coords in grid:
        dh = surface.h.gradient(coords)
        g = model.metric_matrix(coords)
        grad = np.linalg.solve(g, dh)
        try:
            pos = fib.position_field(model, x_star, model.point(coords))
        except ChartDomainError as err:
            return ContainmentVerdict(False, None, {
                "reason": "radial field unavailable", "detail": str(err)})
        num = float(grad @ g @ pos.components)
        den = float((grad @ g @ grad) * (pos.components @ g @ pos.components))
        if den <= 0:
            return ContainmentVerdict(False, None,
                                      {"reason": "degenerate direction data"})
        angle_res = abs(1.0 - num**2 / den)
        worst_angle = max(worst_angle, angle_res)
    if worst_angle > angle_tol:
        return ContainmentVerdict(False, None, {
            "reason": "gradient not radial", "angle_residual": worst_angle})

    g_star = model.metric_matrix(x_star.coords)
    collar = getattr(surface, "mask", None)
    worst_limit = 0.0
    for d in range(directions):
        u = np.zeros(model.dim)
        u[d % model.dim] = 1.0
        if d >= model.dim:
            u[:] = 1.0
        u = u / math.sqrt(u @ g_star @ u)
        radii, values = [], []
        for j in range(levels):
            r = r_start * 2.0**-j
            try:
                point = fib.exp_map(model, x_star, r * u)
                if not surface.contains(point.coords):
                    continue
                values.append(surface.h(point.coords))
                radii.append(r)
            except ChartDomainError:
                continue
        if len(values) < 3:
            return ContainmentVerdict(False, None, {
                "reason": "cannot sample toward the candidate vertex",
                "direction": d})
        limit = _richardson(radii, values)
        worst_limit = max(worst_limit, abs(limit - t_star))
    if worst_limit > limit_tol:
        return ContainmentVerdict(False, None, {
            "reason": "graph limit misses the vertex time",
            "limit_residual": worst_limit, "angle_residual": worst_angle})
    vertex = SpacetimePoint(float(t_star), x_star)
    return ContainmentVerdict(True, vertex, {
        "angle_residual": worst_angle, "limit_residual": worst_limit})


def containment_by_twist(space: GrwSpace, decomposition, t0,
                         orientation="future", z_samples=3, levels=6,
                         mu_limit_tol=1e-3) -> ContainmentVerdict:
    """Cone containment from a twisted decomposition of the fibre.

    Future case: μ(s, z) → 0 as s → a⁺ for all leaf samples, and the base
    endpoint a is reachable by the time quadrature: ∃ t* with
    ∫_{t0}^{t*} 1/f = a. (Past case mirrored at b.)
    """
    a, b = decomposition.interval
    endpoint = a if orientation == "future" else b
    diagnostics = {"endpoint": endpoint}
    if not math.isfinite(endpoint):
        diagnostics["reason"] = "unbounded base interval"
        return ContainmentVerdict(False, None, diagnostics)

    # condition 1: the leaf scale collapses at the endpoint
    span = (b - a) if math.isfinite(b - a) else 1.0
    start = endpoint + (0.25 * span if orientation == "future" else -0.25 * span)
    worst = 0.0
    for z_index in range(z_samples):
        ss, vals = [], []
        for j in range(levels):
            s = endpoint + (start - endpoint) * 2.0**-j
            vals.append(decomposition.mu_sample(s, z_index))
            ss.append(abs(s - endpoint))
        worst = max(worst, abs(_richardson(ss, vals)))
    diagnostics["mu_limit"] = worst
    if worst > mu_limit_tol:
        diagnostics["reason"] = "leaf scale does not collapse at the endpoint"
        return ContainmentVerdict(False, None, diagnostics)

    # condition 2: the endpoint is reachable by the time quadrature
    try:
        t_star = space.warping.invert_C(endpoint, t0)
    except QuadratureRangeError as err:
        diagnostics["reason"] = "vertex time unreachable"
        diagnostics["range"] = err.valid_range
        return ContainmentVerdict(False, None, diagnostics)
    diagnostics["t_star"] = t_star
    vertex_x = decomposition.vertex_fibre_point(endpoint)
    vertex = SpacetimePoint(t_star, vertex_x) if vertex_x is not None else \
        SpacetimePoint(t_star, None)
    return ContainmentVerdict(True, vertex, diagnostics)


def classify_umbilic_sphere_fibre(surface: GraphHypersurface, anchor=None,
                                  umbilic_tol=1e-6, vertex_tol=1e-5):
    """Locate the vertex of an umbilic null hypersurface over a round fibre.

    Requires fibre = round sphere, n > 3, and total ∫_I 1/f > π; refuses
    otherwise. Reconstructs the warped decomposition at the anchor, fits the
    offset angle from μ and solves the reachability condition at whichever
    endpoint collapses within reach.
    """
    from . import twist

    space = surface.space
    model = space.fibre
    if getattr(model, "kind", "") != "sphere":
        raise HypothesisError("classification requires a round-sphere fibre")
    if space.n <= 3:
        raise HypothesisError("classification requires dimension > 3")
    c_lo, c_hi = space.warping.C_range(0.0 if space.warping.interval[0] < 0
                                       < space.warping.interval[1]
                                       else sum(space.warping.interval) / 2)
    total = c_hi - c_lo
    if not total > math.pi + 1e-9:
        raise HypothesisError(
            f"time quadrature range {total:.6f} does not exceed π; "
            "umbilic hypersurfaces need not be cone pieces here")

    if anchor is None:
        anchor = np.array([0.5 * (lo + hi) for lo, hi in surface.domain])
    anchor = np.asarray(anchor, dtype=float)
    nullhyp_umbilic_guard(surface, anchor, umbilic_tol)
    t0 = surface.h(anchor)
    recon = twist.reconstruct_decomposition(surface, (t0, anchor),
                                            s_halfwidth=0.25, z_samples=3)
    mu0p = recon.mu_s_at_anchor()
    radius = model.radius
    # warped presentation of the round fibre: μ(s) = cos(s/R + θ)/cos(θ),
    # so θ follows from the measured μ'(0) = −tan(θ)/R
    theta = math.atan(-mu0p * radius)
    a = (-math.pi / 2 - theta) * radius
    b = (math.pi / 2 - theta) * radius
    results = []
    for orientation, endpoint in (("future", a), ("past", b)):
        try:
            t_star = space.warping.invert_C(endpoint, t0)
        except QuadratureRangeError:
            continue
        # vertex fibre point: run the unit gradient direction to the endpoint
        data_grad = recon.anchor_direction
        x_star = fib.exp_map(model, model.point(anchor), endpoint * data_grad)
        results.append((orientation, SpacetimePoint(t_star, x_star)))
    if not results:
        return ContainmentVerdict(False, None, {
            "reason": "no reachable collapsing endpoint", "theta": theta})
    orientation, vertex = results[0]
    cone = NullCone(space, vertex.t, vertex.x, orientation=orientation)
    worst = 0.0
    for coords in surface.grid(3):
        p = surface.point(coords)
        try:
            _, residual = cone_contains(cone, p, tol=np.inf)
        except ChartDomainError:
            continue
        worst = max(worst, residual)
    return ContainmentVerdict(worst <= vertex_tol, vertex, {
        "orientation": orientation, "theta": theta,
        "membership_residual": worst,
        "candidates": [o for o, _ in results]})


def nullhyp_umbilic_guard(surface, anchor, tol):
    from .nullhyp import umbilicity_test

    probe = [anchor]
    report = umbilicity_test(surface, probe, tol=tol)
    if not report.passed:
        raise HypothesisError(
            f"surface is not umbilic at the anchor "
            f"(residual {report.max_residual:.3e} > {tol})")
    return report
