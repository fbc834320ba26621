"""Umbilic null hypersurfaces ↔ twisted decompositions of the fibre.

An umbilic null graph induces, near any of its points, a presentation of the
fibre as (J × S, ds² + μ(s,z)² g_S): the base runs along the unit gradient
field E = ∇h/|∇h|, the leaves are the level sets of h, and

    μ(s, z) = f(t0)/f(t(s)) · exp( ∫_0^s H · f(t)²/(n−2) dr ),

with t(s) = C⁻¹(s; t0) the time at which the graph crosses the s-leaf.
Conversely a twisted fibre produces the umbilic graph {s = C(t; t0)} with
null mean curvature (n−2)(f' + μ_s/μ)/f². Reversing the base parameter
produces the dual hypersurface through the anchor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import PchipInterpolator

from . import fibre as fib
from . import geometry, nullhyp
from .errors import (ChartDomainError, HypothesisError, QuadratureRangeError,
                     UmbilicityError)
from .fields import ScalarField
from .grw import GrwSpace, WarpingProfile
from .nullhyp import GraphHypersurface


# ---------------------------------------------------------------------------
# decomposition data
# ---------------------------------------------------------------------------

class TwistedDecomposition:
    """Base interval J ∋ 0, leaf scale μ(s, z), optional explicit leaf model.

    ``mu`` is either a ScalarField / expression text (explicit fixtures) or a
    SampledMu (reconstructions). μ(0, ·) = 1 is the anchoring normalization.
    """

    def __init__(self, interval, mu, leaf=None, vertex_map=None, label=""):
        self.interval = (float(interval[0]), float(interval[1]))
        if not self.interval[0] < 0 < self.interval[1]:
            raise ValueError("the base interval must contain 0 (the anchor leaf)")
        if isinstance(mu, str):
            mu = ScalarField.from_expression(mu, ["s"])
        self.mu = mu
        self.leaf = leaf
        self._vertex_map = vertex_map
        self.label = label

    def mu_sample(self, s, z_index=0):
        if isinstance(self.mu, SampledMu):
            return self.mu.at(s, z_index)
        if isinstance(self.mu, ScalarField):
            if self.mu.nvars == 1:
                return self.mu(np.array([s]))
            coords = np.zeros(self.mu.nvars)
            coords[0] = s
            return self.mu(coords)
        return float(self.mu(s, z_index))

    def vertex_fibre_point(self, endpoint):
        if self._vertex_map is None:
            return None
        return self._vertex_map(endpoint)

    def normalization_residual(self, z_indices=(0, 1, 2)):
        vals = [abs(self.mu_sample(0.0, z) - 1.0) for z in z_indices]
        return max(vals)

    def to_fibre_model(self, injectivity=None):
        if self.leaf is None:
            raise ValueError("decomposition has no explicit leaf model")
        return fib.twisted(self.interval, self.leaf, self.mu,
                           injectivity=injectivity)


class SampledMu:
    """μ stored on an s-grid per leaf sample, shape-preserving cubic in s."""

    def __init__(self, s_grid, values):
        self.s_grid = np.asarray(s_grid, dtype=float)
        self.values = np.asarray(values, dtype=float)  # (n_z, n_s)
        self._splines = [PchipInterpolator(self.s_grid, row)
                         for row in self.values]

    @property
    def n_z(self):
        return self.values.shape[0]

    def at(self, s, z_index=0):
        z_index = min(int(z_index), self.n_z - 1)
        return float(self._splines[z_index](s))

    def derivative(self, s, z_index=0):
        z_index = min(int(z_index), self.n_z - 1)
        return float(self._splines[z_index].derivative()(s))

    def z_spread(self):
        return float(np.max(self.values.max(axis=0) - self.values.min(axis=0)))


# ---------------------------------------------------------------------------
# reconstruction: umbilic graph -> decomposition
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class ReconstructionResult:
    surface: GraphHypersurface
    t0: float
    anchor: np.ndarray
    s_grid: np.ndarray
    leaf_points: list                  # fibre coords of the anchor-leaf samples
    flow_points: np.ndarray            # (n_z, n_s, dim) flow line positions
    decomposition: TwistedDecomposition
    anchor_direction: np.ndarray       # unit E at the anchor (chart components)
    graph_residual: float              # max |h(flow(s)) − t(s)|
    leaf_metric_residual: float        # flow-metric vs μ² cross-check
    mu_prime_anchor: float = 0.0       # exact μ_s(0) from the anchor H value
    diagnostics: dict = field(default_factory=dict)

    def mu_s_at_anchor(self):
        return self.mu_prime_anchor

    def graph_time(self, s):
        return self.surface.space.warping.invert_C(s, self.t0)

    def mu_max_rel_error(self, reference):
        """Max relative error of μ against ``reference(s, z_index)``."""
        worst = 0.0
        mu = self.decomposition.mu
        for z in range(mu.n_z):
            for s in self.s_grid:
                want = reference(float(s), z)
                got = mu.at(s, z)
                worst = max(worst, abs(got - want) / max(abs(want), 1e-12))
        return worst


def _unit_gradient(surface, coords):
    model = surface.space.fibre
    g = model.metric_matrix(coords)
    grad = np.linalg.solve(g, surface.h.gradient(coords))
    norm = math.sqrt(max(grad @ g @ grad, 0.0))
    if norm < 1e-14:
        raise ChartDomainError("degenerate graph point: ∇h vanishes")
    return grad / norm


def _leaf_correct(surface, coords, t0, max_iter=12):
    """Slide along the unit gradient flow until h returns to t0."""
    coords = np.asarray(coords, dtype=float)
    for _ in range(max_iter):
        value = surface.h(coords)
        miss = value - t0
        if abs(miss) <= 1e-12 * (1 + abs(t0)):
            return coords
        f = surface.space.warping.f(value)
        step = -miss / f  # dh/ds = f along the unit-gradient flow
        sol = solve_ivp(lambda _s, c: _unit_gradient(surface, c),
                        (0.0, step), coords, method="RK45",
                        rtol=1e-10, atol=1e-12)
        coords = sol.y[:, -1]
    raise ChartDomainError("anchor-leaf projection did not converge")


def reconstruct_decomposition(surface: GraphHypersurface, anchor,
                              s_range=None, s_halfwidth=0.3, z_samples=3,
                              leaf_radius=0.08, umbilic_tol=1e-5,
                              n_s=81, rtol=1e-9) -> ReconstructionResult:
    """Rebuild the twisted decomposition induced by an umbilic null graph.

    ``anchor`` is (t0, fibre coords); t0 must be the graph time there. Flow
    lines exiting the graph domain raise rather than extrapolate.
    """
    t0, x0 = anchor
    x0 = np.asarray(x0, dtype=float)
    surface.require_inside(x0)
    if t0 is None:
        t0 = surface.h(x0)
    elif abs(surface.h(x0) - t0) > 1e-9 * (1 + abs(t0)):
        raise ValueError(f"anchor time {t0} is not the graph time "
                         f"{surface.h(x0)} at the anchor point")

    report = nullhyp.umbilicity_test(surface, [x0], tol=umbilic_tol)
    if not report.passed:
        raise UmbilicityError(
            f"surface not umbilic at the anchor within {umbilic_tol} "
            f"(residual {report.max_residual:.3e})")

    space = surface.space
    model = space.fibre
    n = space.n
    if s_range is None:
        s_range = (-s_halfwidth, s_halfwidth)
    s_lo, s_hi = float(s_range[0]), float(s_range[1])
    if not s_lo < 0 < s_hi:
        raise ValueError("s_range must contain 0")

    # anchor-leaf samples: the anchor plus offsets along the screen directions
    frame = nullhyp.screen_basis(surface, x0)
    f0 = space.warping.f(t0)
    leaf_dirs = frame.vectors * f0  # g_F-orthonormal leaf tangents
    leaf_points = [x0.copy()]
    k = 0
    while len(leaf_points) < z_samples:
        direction = leaf_dirs[k % len(leaf_dirs)]
        scale = leaf_radius * (1 + k // (2 * len(leaf_dirs)))
        sign = 1.0 if (k // len(leaf_dirs)) % 2 == 0 else -1.0
        seed = fib.exp_map(model, model.point(x0), sign * scale * direction)
        leaf_points.append(_leaf_correct(surface, seed.coords, t0))
        k += 1

    s_grid = np.linspace(s_lo, s_hi, n_s)
    dim = model.dim
    flow_points = np.empty((len(leaf_points), n_s, dim))
    mu_values = np.empty((len(leaf_points), n_s))
    graph_residual = 0.0

    def rhs(s, y):
        coords = y[:dim]
        e = _unit_gradient(surface, coords)
        h_mean = nullhyp.mean_curvature(surface, coords)
        t = surface.h(coords)
        dlog = h_mean * space.warping.f(t) ** 2 / (n - 2)
        return np.concatenate([e, [dlog]])

    for zi, start in enumerate(leaf_points):
        y0 = np.concatenate([start, [0.0]])
        dense = {}
        for lo, hi in ((0.0, s_hi), (0.0, s_lo)):
            if lo == hi:
                continue
            sol = solve_ivp(rhs, (lo, hi), y0, method="DOP853",
                            dense_output=True, rtol=rtol, atol=1e-12)
            if not sol.success:
                raise ChartDomainError(
                    f"gradient flow left the domain: {sol.message}")
            dense[np.sign(hi - lo)] = sol.sol
        for si, s in enumerate(s_grid):
            y = y0 if s == 0.0 else dense[np.sign(s)](s)
            coords = y[:dim]
            flow_points[zi, si] = coords
            t_s = space.warping.invert_C(s, t0)
            mu_values[zi, si] = (f0 / space.warping.f(t_s)) * math.exp(y[dim])
            graph_residual = max(graph_residual,
                                 abs(surface.h(coords) - t_s))

    sampled = SampledMu(s_grid, mu_values)
    decomposition = TwistedDecomposition((s_lo, s_hi), sampled,
                                         label=f"reconstructed:{surface.label}")
    leaf_residual = _leaf_metric_residual(surface, x0, s_grid, sampled)
    # μ_s(0) exactly: d(log μ)/ds = H f²/(n−2) − f'(t), evaluated at s = 0
    h0 = nullhyp.mean_curvature(surface, x0)
    mu_prime = h0 * f0**2 / (n - 2) - space.warping.fp(t0)
    return ReconstructionResult(
        surface, float(t0), x0, s_grid, leaf_points, flow_points,
        decomposition, _unit_gradient(surface, x0), float(graph_residual),
        leaf_residual, float(mu_prime),
        diagnostics={"umbilicity_residual": report.max_residual,
                     "z_spread": sampled.z_spread()})


def _leaf_metric_residual(surface, x0, s_grid, sampled, n_checks=7):
    """Secondary validation: propagate a leaf tangent J along the flow by the
    linearized equation dJ/ds = ∇_J E and compare |J(s)|/|J(0)| with μ."""
    space = surface.space
    model = space.fibre
    dim = model.dim
    frame = nullhyp.screen_basis(surface, x0)
    j0 = frame.vectors[0] * space.warping.f(surface.h(x0))

    def rhs(s, y):
        coords, j = y[:dim], y[dim:]
        step = 1e-6 * (1 + float(np.linalg.norm(coords)))
        de = np.empty((dim, dim))  # de[k, i] = ∂_k E^i
        for kk in range(dim):
            up, dn = coords.copy(), coords.copy()
            up[kk] += step
            dn[kk] -= step
            de[kk] = (_unit_gradient(surface, up) - _unit_gradient(surface, dn)) \
                / (2 * step)
        e = _unit_gradient(surface, coords)
        gamma = model.christoffel(coords)
        dj = j @ de + np.einsum("kij,i,j->k", gamma, e, j)
        return np.concatenate([e, dj])

    g0 = model.metric_matrix(x0)
    j0_norm2 = float(j0 @ g0 @ j0)
    worst = 0.0
    for end in (s_grid[-1], s_grid[0]):
        if end == 0.0:
            continue
        sol = solve_ivp(rhs, (0.0, float(end)), np.concatenate([x0, j0]),
                        method="DOP853", dense_output=True,
                        rtol=1e-9, atol=1e-12)
        if not sol.success:
            raise ChartDomainError(f"leaf transport failed: {sol.message}")
        for target in np.linspace(end / n_checks, end, n_checks):
            y = sol.sol(target)
            coords, j = y[:dim], y[dim:]
            g = model.metric_matrix(coords)
            ratio = math.sqrt((j @ g @ j) / j0_norm2)
            worst = max(worst, abs(ratio - sampled.at(target, 0)))
    return float(worst)


# ---------------------------------------------------------------------------
# construction: twisted fibre -> umbilic graph
# ---------------------------------------------------------------------------

def construct_hypersurface(space: GrwSpace, t0, s_window=None,
                           label=None) -> GraphHypersurface:
    """The umbilic null graph {s = C(t; t0)} over a twisted fibre model."""
    model = space.fibre
    if getattr(model, "kind", "") != "twisted":
        raise ValueError("construct_hypersurface needs a twisted fibre model")
    space.warping.require_inside(t0)
    c_lo, c_hi = space.warping.C_range(t0)
    a, b = model.interval
    lo = max(a, c_lo * 0.999 if math.isfinite(c_lo) else a)
    hi = min(b, c_hi * 0.999 if math.isfinite(c_hi) else b)
    if s_window is not None:
        lo, hi = max(lo, s_window[0]), min(hi, s_window[1])
    if not lo < hi:
        raise QuadratureRangeError(
            f"time quadrature range {(c_lo, c_hi)} does not reach the base "
            f"interval {(a, b)}")

    def h_value(coords):
        return space.warping.invert_C(coords[0], t0)

    def h_grad(coords):
        t = h_value(coords)
        out = np.zeros(model.dim)
        out[0] = space.warping.f(t)
        return out

    h = ScalarField.from_callable(h_value, model.dim, grad_fn=h_grad,
                                  label="twisted-graph")
    domain = [(lo, hi)] + [_clip_box(bb) for bb in model.leaf.box]
    return GraphHypersurface(space, domain, h,
                             label=label or f"umbilic-graph@t0={t0:g}")


def _clip_box(b, span=2.0):
    lo = b[0] if math.isfinite(b[0]) else -span
    hi = b[1] if math.isfinite(b[1]) else span
    return (lo, hi)


def construct_mean_curvature_formula(space: GrwSpace, t0, coords):
    """(n−2)/f² (f' + μ_s/μ) at a point of the constructed graph."""
    model = space.fibre
    t = space.warping.invert_C(coords[0], t0)
    f = space.warping.f(t)
    fp = space.warping.fp(t)
    mu = model.mu_value(coords)
    mu_s = model.mu_partial(coords, 0)
    return (space.n - 2) * (fp + mu_s / mu) / f**2


# ---------------------------------------------------------------------------
# duality
# ---------------------------------------------------------------------------

def dual_hypersurface(surface: GraphHypersurface, anchor, umbilic_tol=1e-5,
                      range_margin=1e-9) -> GraphHypersurface:
    """Reverse the base parameter of the induced decomposition.

    The dual graph through (t0, x0) is h̃ = C⁻¹(−C(h(·); t0); t0): pointwise
    computable from h alone, since the base coordinate of a fibre point is
    s = C(h(x); t0).
    """
    t0, x0 = anchor
    x0 = np.asarray(x0, dtype=float)
    if t0 is None:
        t0 = surface.h(x0)
    report = nullhyp.umbilicity_test(surface, [x0], tol=umbilic_tol)
    if not report.passed:
        raise UmbilicityError(
            f"dual construction needs umbilicity at the anchor "
            f"(residual {report.max_residual:.3e})")
    space = surface.space
    c_lo, c_hi = space.warping.C_range(t0)

    def h_dual(coords):
        s = space.warping.C(surface.h(coords), t0)
        return space.warping.invert_C(-s, t0)

    def h_dual_grad(coords):
        t = surface.h(coords)
        t_dual = h_dual(coords)
        scale = -space.warping.f(t_dual) / space.warping.f(t)
        return scale * surface.h.gradient(coords)

    def mask(coords):
        if surface.mask is not None and not surface.mask(coords):
            return False
        s = space.warping.C(surface.h(coords), t0)
        return c_lo + range_margin < -s < c_hi - range_margin

    h = ScalarField.from_callable(h_dual, space.fibre.dim, grad_fn=h_dual_grad,
                                  label=f"dual:{surface.label}")
    return GraphHypersurface(space, surface.domain, h, mask=mask,
                             label=f"dual:{surface.label}")


def dual_mean_curvature_formula(surface: GraphHypersurface,
                                dual: GraphHypersurface, coords):
    """(n−2)/f(t̃)² (f'(t̃) − μ_s/μ), with μ_s/μ read off the primal graph."""
    space = surface.space
    n = space.n
    t = surface.h(coords)
    t_dual = dual.h(coords)
    h_mean = nullhyp.mean_curvature(surface, coords)
    q = h_mean * space.warping.f(t) ** 2 / (n - 2) - space.warping.fp(t)
    f_dual = space.warping.f(t_dual)
    return (n - 2) * (space.warping.fp(t_dual) - q) / f_dual**2


# ---------------------------------------------------------------------------
# the cosh-warped sphere trichotomy
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class DualClassification:
    kind: str                      # past_cone | future_cone_antipode |
    #                                totally_geodesic | boundary
    t0: float
    delta: float
    t_critical: float
    vertex_time: float = None
    vertex_coords: np.ndarray = None
    residual: float = None
    details: dict = field(default_factory=dict)


def classify_cosh_sphere_dual(space: GrwSpace, vertex_time, x_star, t0,
                              geodesic_tol=1e-9, boundary_tol=1e-6,
                              grid_counts=3) -> DualClassification:
    """Classify the dual of a future cone in the cosh-warped round-sphere
    spacetime, through the anchor at time t0 on the cone.

    The boundary anchor time satisfies C(t_c; vertex) = (π/4)·R; below it the
    dual is a past cone at the original spatial vertex, above it a future
    cone at the antipode, exactly at it a totally geodesic graph.
    """
    from .cone import NullCone, cone_as_graph

    model = space.fibre
    if getattr(model, "kind", "") != "sphere":
        raise HypothesisError("the trichotomy fixture needs a round fibre")
    radius = model.radius
    quarter = math.pi * radius / 4.0
    w = space.warping
    t_c = w.invert_C(quarter, vertex_time)
    delta = w.C(t0, vertex_time)
    if not isinstance(x_star, fib.FibrePoint):
        x_star = model.point(x_star)

    cone = NullCone(space, vertex_time, x_star, orientation="future")
    surface = cone_as_graph(cone)
    g_star = model.metric_matrix(x_star.coords)
    u = np.zeros(model.dim)
    u[0] = 1.0
    u = u / math.sqrt(u @ g_star @ u)
    x0 = fib.exp_map(model, x_star, delta * u)
    dual = dual_hypersurface(surface, (t0, x0.coords))
    # verify along radial samples in a moderate annulus, clear of the vertex
    # collar and of chart-edge corners
    grid = []
    g_inv_diag = 1.0 / np.sqrt(np.diag(g_star))
    for axis in range(model.dim):
        direction = np.zeros(model.dim)
        direction[axis] = g_inv_diag[axis]
        for frac in np.linspace(0.15, 0.85, max(grid_counts, 3)):
            try:
                p = fib.exp_map(model, x_star, frac * cone.d_max * direction)
            except ChartDomainError:
                continue
            if surface.contains(p.coords) and dual.contains(p.coords):
                grid.append(p.coords)
    if not grid:
        raise HypothesisError("no verification points available on the cone")

    if abs(delta - quarter) <= geodesic_tol:
        worst = max(abs(nullhyp.mean_curvature(dual, c)) for c in grid)
        return DualClassification("totally_geodesic", t0, delta, t_c,
                                  residual=worst)
    if abs(delta - quarter) <= boundary_tol:
        return DualClassification("boundary", t0, delta, t_c,
                                  details={"margin": abs(delta - quarter)})
    if delta < quarter:
        t_s = w.invert_C(delta, t0)
        worst = 0.0
        for c in grid:
            want = w.invert_C(-model.distance(x_star, model.point(c)), t_s)
            worst = max(worst, abs(dual.h(c) - want))
        return DualClassification("past_cone", t0, delta, t_c,
                                  vertex_time=t_s, vertex_coords=x_star.coords,
                                  residual=worst)
    t_l = w.invert_C(delta - math.pi * radius, t0)
    antipode = model.chart_from_embedding(-model.embed(x_star.coords))
    worst = 0.0
    for c in grid:
        d_anti = model.distance(model.point(antipode), model.point(c))
        worst = max(worst, abs(w.C(dual.h(c), t_l) - d_anti))
    return DualClassification("future_cone_antipode", t0, delta, t_c,
                              vertex_time=t_l, vertex_coords=antipode,
                              residual=worst)


# ---------------------------------------------------------------------------
# curvature obstruction
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class ObstructionReport:
    point: np.ndarray
    directions: np.ndarray      # (m, dim) g-unit direction samples
    spreads: np.ndarray         # sup-minus-inf of K over planes per direction
    min_spread: float
    note: str = ("necessary-condition scan: a small spread along some "
                 "direction does not certify a twisted decomposition")


def direction_spread(model: fib.FibreModel, coords, v):
    """Exact max − min of sectional curvatures over planes containing v.

    The curvature of span(v, w) is a generalized Rayleigh quotient in w, so
    the extremes are generalized eigenvalues on the g-orthogonal complement.
    """
    coords = np.asarray(coords, dtype=float)
    v = np.asarray(v, dtype=float)
    g = model.metric_matrix(coords)
    riem = model.curvature(coords)
    m = model.dim
    v = v / math.sqrt(v @ g @ v)
    # A_ij = g(R(e_i, v)v, e_j); B = |v|² g − (gv)(gv)^T
    rv = np.einsum("lijk,j,k->li", riem, v, v)  # R(e_i, v)v components: [l, i]
    amat = rv.T @ g                              # A[i, j]
    amat = 0.5 * (amat + amat.T)
    gv = g @ v
    bmat = g - np.outer(gv, gv)
    # restrict to a basis of the g-orthogonal complement of v
    basis = geometry.gram_schmidt(g, [v] + list(np.eye(m)))[1:]
    a_r = basis @ amat @ basis.T
    b_r = basis @ bmat @ basis.T
    from scipy.linalg import eigh
    eigs = eigh(a_r, b_r, eigvals_only=True)
    return float(eigs[-1] - eigs[0])


def obstruction_scan(model: fib.FibreModel, coords, directions=200,
                     plane_samples=16, seed=0) -> ObstructionReport:
    """Scan seeded random directions for the plane-curvature spread.

    A twisted decomposition with one-dimensional base forces equal sectional
    curvature on every plane containing the base direction, so
    min_spread ≫ 0 rules such decompositions out at this point.
    """
    if model.dim < 3:
        raise HypothesisError("the obstruction scan is vacuous below dim 3")
    coords = np.asarray(coords, dtype=float)
    rng = np.random.default_rng(seed)
    g = model.metric_matrix(coords)
    dirs = np.empty((directions, model.dim))
    spreads = np.empty(directions)
    for i in range(directions):
        v = rng.normal(size=model.dim)
        v = v / math.sqrt(v @ g @ v)
        dirs[i] = v
        spreads[i] = direction_spread(model, coords, v)
    del plane_samples  # the eigen route is exact over all planes
    return ObstructionReport(coords, dirs, spreads, float(spreads.min()))


def sphere_warped_uniqueness_probe(mu, interval, tol=1e-8, samples=201):
    """True iff μ″μ − μ′² + 1 vanishes on the interval (constant curvature,
    so alternative decompositions may exist); False means the warped
    decomposition with round leaves is the only one."""
    if isinstance(mu, str):
        mu = ScalarField.from_expression(mu, ["s"])
    from .fields import Profile1D

    profile = mu if isinstance(mu, Profile1D) else Profile1D(mu, var="s")
    lo, hi = float(interval[0]), float(interval[1])
    pad = 1e-9 * (hi - lo)
    worst = 0.0
    for s in np.linspace(lo + pad, hi - pad, samples):
        value = profile(s)
        residual = profile.d2(s) * value - profile.d1(s) ** 2 + 1.0
        worst = max(worst, abs(residual))
    return worst <= tol, worst
