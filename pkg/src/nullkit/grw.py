"""Warped-product spacetimes over a one-dimensional time base.

A space is I ×_f F with metric −dt² + f(t)² g_F. The two antiderivatives
that run everything are A(t; t0) = ∫ f and C(t; t0) = ∫ 1/f; both are cached
with their monotone inverses. Expressions matching a small catalog
(constants, cosh, cos, exp, powers of t) get exact antiderivatives; anything
else is integrated adaptively on a working window and refined per query from
the nearest cached node, so values stay at quadrature accuracy rather than
interpolation accuracy.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from . import expressions as ex
from . import geometry
from .errors import ChartDomainError, QuadratureRangeError
from .fibre import FibreModel, FibrePoint, TangentVec
from .fields import Profile1D, ScalarField

QUAD_ABS = 1e-12
QUAD_REL = 1e-10
EVAL_LIMIT = 700.0  # clip for evaluating antiderivative limits toward ±inf
NUMERIC_WINDOW = 30.0
NUMERIC_NODES = 801


# ---------------------------------------------------------------------------
# antiderivative catalog
# ---------------------------------------------------------------------------

def _gudermann(t):
    return 2.0 * math.atan(math.tanh(t / 2.0))


def _inv_gudermann_integrand(t):  # antiderivative of 1/cos on (-pi/2, pi/2)
    return 2.0 * math.atanh(math.tan(t / 2.0))


def _safe(fn):
    def wrapped(t):
        try:
            return fn(t)
        except OverflowError:
            return math.copysign(math.inf, t)
    return wrapped


def _match_catalog(expr, var):
    """Return (antideriv of f, antideriv of 1/f) callables, or None."""
    if isinstance(expr, ex.Num):
        c = expr.value
        if c <= 0:
            return None
        return (lambda t: c * t), (lambda t: t / c)
    if isinstance(expr, ex.Var) and expr.name == var:
        return (lambda t: 0.5 * t * t), math.log
    if isinstance(expr, ex.Call) and len(expr.args) == 1 \
            and expr.args[0] == ex.Var(var):
        if expr.fn == "cosh":
            return _safe(math.sinh), _gudermann
        if expr.fn == "cos":
            return math.sin, _inv_gudermann_integrand
        if expr.fn == "exp":
            return _safe(math.exp), _safe(lambda t: -math.exp(-t))
    if isinstance(expr, ex.Bin) and expr.op == "^" \
            and expr.left == ex.Var(var) and isinstance(expr.right, ex.Num):
        p = expr.right.value
        fwd = (math.log if p == -1 else (lambda t, p=p: t ** (p + 1) / (p + 1)))
        inv = (math.log if p == 1 else (lambda t, p=p: t ** (1 - p) / (1 - p)))
        return fwd, inv
    if isinstance(expr, ex.Bin) and expr.op == "*" \
            and isinstance(expr.left, ex.Num) and expr.left.value > 0:
        inner = _match_catalog(expr.right, var)
        if inner is not None:
            c = expr.left.value
            fa, ga = inner
            return (lambda t: c * fa(t)), (lambda t: ga(t) / c)
    return None


class _ExactAntiderivative:
    def __init__(self, fn, interval):
        self.fn = fn
        self.interval = interval

    def value(self, t):
        return float(self.fn(t))

    def endpoint(self, t):
        return float(self.fn(float(np.clip(t, -EVAL_LIMIT, EVAL_LIMIT))))


class _NumericAntiderivative:
    """Cumulative adaptive quadrature on a node grid, refined per query."""

    def __init__(self, integrand, window):
        self.integrand = integrand
        self.lo, self.hi = window
        self.nodes = np.linspace(self.lo, self.hi, NUMERIC_NODES)
        # per-segment budget far below the global target so ~800 segment
        # errors stack to < 1e-11
        segs = np.empty(NUMERIC_NODES - 1)
        with warnings.catch_warnings():
            # near-singular endpoint segments are best-effort by design
            warnings.simplefilter("ignore", IntegrationWarning)
            for i in range(NUMERIC_NODES - 1):
                segs[i], _ = quad(integrand, self.nodes[i], self.nodes[i + 1],
                                  epsabs=1e-14, epsrel=1e-12, limit=200)
        # accumulate outward from the mid node: interior values stay O(1)
        # and keep full precision even when an endpoint is singular
        mid = NUMERIC_NODES // 2
        values = np.zeros(NUMERIC_NODES)
        for i in range(mid, NUMERIC_NODES - 1):
            values[i + 1] = values[i] + segs[i]
        for i in range(mid - 1, -1, -1):
            values[i] = values[i + 1] - segs[i]
        self.values = values
        self.interp = PchipInterpolator(self.nodes, values)

    def value(self, t):
        t = float(t)
        if t < self.lo - 1e-12 or t > self.hi + 1e-12:
            raise QuadratureRangeError(
                f"{t} outside cached window [{self.lo}, {self.hi}]",
                value=t, valid_range=(self.lo, self.hi))
        idx = int(np.clip(np.searchsorted(self.nodes, t), 1, NUMERIC_NODES - 1))
        node = self.nodes[idx - 1] if abs(t - self.nodes[idx - 1]) <= abs(self.nodes[idx] - t) \
            else self.nodes[idx]
        base = self.values[idx - 1] if node == self.nodes[idx - 1] else self.values[idx]
        seg, _ = quad(self.integrand, node, t,
                      epsabs=QUAD_ABS, epsrel=QUAD_REL, limit=200)
        return float(base + seg)

    def endpoint(self, t):
        return self.value(float(np.clip(t, self.lo, self.hi)))


class WarpingProfile:
    """Positive profile f on an open interval with cached ∫f and ∫1/f."""

    def __init__(self, f, interval=(-math.inf, math.inf), var="t",
                 window_halfwidth=NUMERIC_WINDOW):
        if isinstance(f, str):
            f = ex.parse(f)
        if isinstance(f, (ex.Num, ex.Var, ex.Neg, ex.Bin, ex.Call, ex.Const)):
            self.expr = f
            self._profile = Profile1D(ScalarField.from_expression(f, [var]), var=var)
        else:
            self.expr = None
            self._profile = f if isinstance(f, Profile1D) else Profile1D(f, var=var)
        self.interval = (float(interval[0]), float(interval[1]))
        self.var = var

        pair = _match_catalog(self.expr, var) if self.expr is not None else None
        if pair is not None:
            self._A = _ExactAntiderivative(pair[0], self.interval)
            self._C = _ExactAntiderivative(pair[1], self.interval)
            self.exact = True
        else:
            lo = max(self.interval[0], -window_halfwidth)
            hi = min(self.interval[1], window_halfwidth)
            span = hi - lo
            # keep off open endpoints where f may vanish or blow up
            if lo == self.interval[0]:
                lo += 1e-6 * span
            if hi == self.interval[1]:
                hi -= 1e-6 * span
            self._window = (lo, hi)
            self._A = _NumericAntiderivative(lambda t: self.f(t), (lo, hi))
            self._C = _NumericAntiderivative(lambda t: 1.0 / self.f(t), (lo, hi))
            self.exact = False

    # -- profile values -------------------------------------------------

    def require_inside(self, t):
        if not (self.interval[0] < t < self.interval[1]):
            raise ChartDomainError(f"time {t} outside the interval {self.interval}")

    def f(self, t):
        value = self._profile(float(t))
        if value <= 0:
            raise ChartDomainError(f"warping profile not positive at t={t}")
        return value

    def fp(self, t):
        return self._profile.d1(float(t))

    def fpp(self, t):
        return self._profile.d2(float(t))

    # -- antiderivatives -------------------------------------------------

    def A(self, t, t_ref):
        self.require_inside(t)
        return self._A.value(t) - self._A.value(t_ref)

    def C(self, t, t_ref):
        self.require_inside(t)
        return self._C.value(t) - self._C.value(t_ref)

    def A_range(self, t_ref):
        return (self._A.endpoint(self.interval[0]) - self._A.value(t_ref),
                self._A.endpoint(self.interval[1]) - self._A.value(t_ref))

    def C_range(self, t_ref):
        return (self._C.endpoint(self.interval[0]) - self._C.value(t_ref),
                self._C.endpoint(self.interval[1]) - self._C.value(t_ref))

    def invert_A(self, value, t_ref):
        return self._invert(self._A, value, t_ref, "A")

    def invert_C(self, value, t_ref):
        return self._invert(self._C, value, t_ref, "C")

    def _invert(self, anti, value, t_ref, which):
        base = anti.value(t_ref)
        target = base + float(value)
        lo = max(self.interval[0], -EVAL_LIMIT)
        hi = min(self.interval[1], EVAL_LIMIT)
        if isinstance(anti, _NumericAntiderivative):
            lo, hi = anti.lo, anti.hi
        flo, fhi = anti.endpoint(lo), anti.endpoint(hi)
        # walk infinite (overflowed) endpoint values inward to a finite bracket
        guard = 0
        while not math.isfinite(flo) and guard < 64:
            lo += max(1.0, 0.01 * (hi - lo))
            flo = anti.value(lo)
            guard += 1
        guard = 0
        while not math.isfinite(fhi) and guard < 64:
            hi -= max(1.0, 0.01 * (hi - lo))
            fhi = anti.value(hi)
            guard += 1
        if not (flo <= target <= fhi):
            raise QuadratureRangeError(
                f"value {value} outside the range of {which} from {t_ref} "
                f"(attainable [{flo - base:.6g}, {fhi - base:.6g}])",
                value=value, valid_range=(flo - base, fhi - base))
        if flo == target:
            return lo
        if fhi == target:
            return hi
        result = brentq(lambda t: anti.value(t) - target, lo, hi,
                        xtol=1e-14, rtol=8.9e-16, maxiter=200)
        return float(result)


def quad_invert(space_or_profile, t_ref, value, which="A"):
    """Invert the cached monotone antiderivative A or C at ``value``."""
    profile = getattr(space_or_profile, "warping", space_or_profile)
    if which == "A":
        return profile.invert_A(value, t_ref)
    if which == "C":
        return profile.invert_C(value, t_ref)
    raise ValueError("which must be 'A' or 'C'")


# ---------------------------------------------------------------------------
# the spacetime
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class SpacetimePoint:
    t: float
    x: FibrePoint

    @property
    def coords(self):
        return np.concatenate([[self.t], self.x.coords])


@dataclass(eq=False)
class SpacetimeTangent:
    dt: float
    dx: TangentVec

    @property
    def components(self):
        return np.concatenate([[self.dt], self.dx.components])


class _ProductChart:
    """Chart adapter (t, fibre coords) exposing the Lorentzian metric."""

    def __init__(self, space):
        self.space = space
        self.dim = 1 + space.fibre.dim

    def metric_matrix(self, coords):
        t = coords[0]
        f2 = self.space.warping.f(t) ** 2
        g = np.zeros((self.dim, self.dim))
        g[0, 0] = -1.0
        g[1:, 1:] = f2 * self.space.fibre.metric_matrix(coords[1:])
        return g

    def christoffel(self, coords):
        t = coords[0]
        w = self.space.warping
        f, fp = w.f(t), w.fp(t)
        gf = self.space.fibre.metric_matrix(coords[1:])
        gamma = np.zeros((self.dim,) * 3)
        gamma[0, 1:, 1:] = f * fp * gf
        ratio = fp / f
        for i in range(1, self.dim):
            gamma[i, 0, i] = gamma[i, i, 0] = ratio
        gamma[1:, 1:, 1:] = self.space.fibre.christoffel(coords[1:])
        return gamma

    def fd_christoffel(self, coords):
        """Connection by finite differences of the metric (cross-check route)."""
        return geometry.fd_christoffel(self.metric_matrix, coords)

    def curvature(self, coords):
        return geometry.curvature_tensor(self.christoffel, coords)

    def box_margin(self, coords):
        t = coords[0]
        lo, hi = self.space.warping.interval
        margin = self.space.fibre.box_margin(coords[1:])
        if math.isfinite(lo):
            margin = min(margin, t - lo)
        if math.isfinite(hi):
            margin = min(margin, hi - t)
        return margin


class GrwSpace:
    """I ×_f F with metric −dt² + f(t)² g_F."""

    def __init__(self, warping: WarpingProfile, fibre_model: FibreModel):
        self.warping = warping
        self.fibre = fibre_model
        self.chart = _ProductChart(self)

    @property
    def n(self):
        return 1 + self.fibre.dim

    def point(self, t, x) -> SpacetimePoint:
        self.warping.require_inside(t)
        if not isinstance(x, FibrePoint):
            x = self.fibre.point(x)
        return SpacetimePoint(float(t), x)

    def tangent(self, p: SpacetimePoint, dt, dx) -> SpacetimeTangent:
        return SpacetimeTangent(float(dt), TangentVec(p.x, np.asarray(dx, dtype=float)))

    def metric_eval(self, p: SpacetimePoint, u: SpacetimeTangent,
                    v: SpacetimeTangent) -> float:
        self.warping.require_inside(p.t)
        f2 = self.warping.f(p.t) ** 2
        gf = self.fibre.metric_matrix(p.x.coords)
        return float(-u.dt * v.dt
                     + f2 * (u.dx.components @ gf @ v.dx.components))

    def conformal_field(self, p: SpacetimePoint) -> SpacetimeTangent:
        """The closed conformal timelike field f ∂_t."""
        return self.tangent(p, self.warping.f(p.t), np.zeros(self.fibre.dim))


# ---------------------------------------------------------------------------
# null geodesics
# ---------------------------------------------------------------------------

class NullGeodesicRecord:
    """Null geodesic from (t0, x0) with unit fibre direction u.

    Affine parameter normalized so g(γ', ζ) = −1 (future) or +1 (past).
    The time leg is α(s) = A⁻¹(±s; t0); the fibre leg runs along the
    unit-speed radial geodesic at distance b(s) = ±C(α(s); t0).
    """

    def __init__(self, space: GrwSpace, t0, x0: FibrePoint, u, s_max,
                 orientation="future"):
        if orientation not in ("future", "past"):
            raise ValueError("orientation must be 'future' or 'past'")
        self.space = space
        self.t0 = float(t0)
        self.x0 = x0
        self.sign = 1.0 if orientation == "future" else -1.0
        self.orientation = orientation
        u = np.asarray(u, dtype=float)
        gf = space.fibre.metric_matrix(x0.coords)
        norm = math.sqrt(u @ gf @ u)
        if abs(norm - 1.0) > 1e-10:
            u = u / norm
        self.u = u
        self.s_max = float(s_max)
        b_max = self.b(self.s_max)
        self.fibre_geodesic = space.fibre.geodesic(x0, u, b_max)

    def alpha(self, s):
        return self.space.warping.invert_A(self.sign * s, self.t0)

    def alpha_prime(self, s):
        return self.sign / self.space.warping.f(self.alpha(s))

    def b(self, s):
        if s == 0.0:
            return 0.0
        return self.sign * self.space.warping.C(self.alpha(s), self.t0)

    def point(self, s) -> SpacetimePoint:
        t = self.alpha(s)
        coords = self.x0.coords if s == 0.0 else self.fibre_geodesic.point(self.b(s))
        return SpacetimePoint(t, self.space.fibre.point(coords))

    def velocity(self, s) -> SpacetimeTangent:
        t = self.alpha(s)
        f = self.space.warping.f(t)
        bdot = 1.0 / f**2
        sigma_dot = self.u if s == 0.0 else self.fibre_geodesic.velocity(self.b(s))
        p = self.point(s)
        return SpacetimeTangent(self.sign / f, TangentVec(p.x, bdot * sigma_dot))

    def chart_point(self, s):
        return self.point(s).coords

    def chart_velocity(self, s):
        return self.velocity(s).components


def null_geodesic_quadrature(space: GrwSpace, t0, x0, u, orientation="future",
                             s_max=None, d_max=None) -> NullGeodesicRecord:
    """Null geodesic through (t0, x0) built from the two cached quadratures."""
    if not isinstance(x0, FibrePoint):
        x0 = space.fibre.point(x0)
    space.warping.require_inside(t0)
    if s_max is None:
        bound = space.fibre.injectivity_bound(x0)
        if d_max is not None:
            bound = min(bound, float(d_max))
        if not math.isfinite(bound):
            bound = 10.0
        sign = 1.0 if orientation == "future" else -1.0
        c_lo, c_hi = space.warping.C_range(t0)
        reach = c_hi if sign > 0 else -c_lo
        b_max = min(bound, 0.999 * reach) if math.isfinite(reach) else bound
        t_end = space.warping.invert_C(sign * b_max, t0)
        s_max = sign * space.warping.A(t_end, t0)
    return NullGeodesicRecord(space, t0, x0, u, s_max, orientation=orientation)


def null_geodesic_numeric(space: GrwSpace, p: SpacetimePoint, v: SpacetimeTangent,
                          s_max, null_tol=1e-10) -> geometry.CurveRecord:
    """Direct integration of the geodesic equation in the product chart.

    Pre: v is null. This is the independent cross-check for the quadrature
    construction.
    """
    nullity = space.metric_eval(p, v, v)
    if abs(nullity) > null_tol:
        raise ValueError(f"initial vector is not null: g(V,V) = {nullity:.3e}")
    return geometry.integrate_geodesic(space.chart, p.coords, v.components, s_max)


# ---------------------------------------------------------------------------
# curvature checks
# ---------------------------------------------------------------------------

def null_sectional_curvature(space: GrwSpace, p: SpacetimePoint, v, w) -> float:
    """Curvature of the null plane spanned by v and −∂_t + w.

    v, w are fibre-tangent, g_F-unit and g_F-orthogonal. The value is
    (K_F(span(v,w)) + f'² − f f'') / f², normalized against the null vector
    whose fibre part is g-unit.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    gf = space.fibre.metric_matrix(p.x.coords)
    if abs(v @ gf @ v - 1) > 1e-8 or abs(w @ gf @ w - 1) > 1e-8 \
            or abs(v @ gf @ w) > 1e-8:
        raise ValueError("v, w must be g_F-orthonormal")
    kf = 0.0
    if space.fibre.dim >= 2:
        from .fibre import sectional_curvature as fibre_sectional
        kf = fibre_sectional(space.fibre, p.x, v, w)
    t = p.t
    f = space.warping.f(t)
    fp = space.warping.fp(t)
    fpp = space.warping.fpp(t)
    return (kf + fp**2 - f * fpp) / f**2


def null_sectional_tensor(space: GrwSpace, p: SpacetimePoint, v, w) -> float:
    """Same plane, evaluated through the full curvature tensor (cross-check)."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    f = space.warping.f(p.t)
    coords = p.coords
    riem = space.chart.curvature(coords)
    g = space.chart.metric_matrix(coords)
    uvec = np.concatenate([[-1.0], w / f])         # null
    xvec = np.concatenate([[0.0], v / f])          # g-unit screen vector
    num = geometry.apply_curvature(riem, xvec, uvec, uvec) @ (g @ xvec)
    den = xvec @ g @ xvec
    return float(num / den)


def conformal_check(space: GrwSpace, grid) -> float:
    """Max residual of L_ζ g − 2 f' g over chart points (finite differences)."""
    worst = 0.0
    for coords in grid:
        coords = np.asarray(coords, dtype=float)
        t = coords[0]
        f = space.warping.f(t)
        fp = space.warping.fp(t)
        h = 1e-5 * (1 + abs(t))
        up, dn = coords.copy(), coords.copy()
        up[0] += h
        dn[0] -= h
        dt_g = (space.chart.metric_matrix(up) - space.chart.metric_matrix(dn)) / (2 * h)
        g = space.chart.metric_matrix(coords)
        lie = f * dt_g
        # ∂_μ ζ^λ has only the ∂_t f entry
        lie[0, :] += fp * g[0, :]
        lie[:, 0] += fp * g[:, 0]
        residual = np.max(np.abs(lie - 2 * fp * g))
        worst = max(worst, float(residual))
    return worst
