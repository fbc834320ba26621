"""Riemannian kernel for fibres.

Each model ships one canonical chart with an explicit validity box. Sphere
and hyperbolic models use polar-type charts about a configurable pole; the
final (azimuthal) coordinate runs over all of ℝ as a covering coordinate,
since its metric components are periodic. Closed forms are used for the
space forms and their products; twisted and expression-metric models fall
back on adaptive integration and geodesic shooting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import ChartDomainError, ShootingError
from .fields import ScalarField

CUT_COLLAR = 1e-3  # polar charts stay this far from coordinate poles

SHOOTING_MAX_ITER = 50
SHOOTING_TARGET = 1e-9


@dataclass(eq=False)
class FibrePoint:
    chart_id: int
    coords: np.ndarray

    def __post_init__(self):
        self.coords = np.atleast_1d(np.asarray(self.coords, dtype=float))


@dataclass(eq=False)
class TangentVec:
    base: FibrePoint
    components: np.ndarray

    def __post_init__(self):
        self.components = np.atleast_1d(np.asarray(self.components, dtype=float))
        if self.components.size != self.base.coords.size:
            raise ValueError("tangent components must match the point dimension")


class FibreModel:
    """Base class: one chart, metric, connection, curvature, geodesics."""

    dim: int
    kind: str = "abstract"

    def __init__(self, dim, box):
        self.dim = int(dim)
        self.box = [(float(lo), float(hi)) for lo, hi in box]

    # -- chart bookkeeping ---------------------------------------------

    def point(self, coords) -> FibrePoint:
        coords = np.atleast_1d(np.asarray(coords, dtype=float))
        if coords.size != self.dim:
            raise ChartDomainError(
                f"{self.kind}: expected {self.dim} coordinates, got {coords.size}")
        return FibrePoint(0, coords)

    def tangent(self, x: FibrePoint, components) -> TangentVec:
        return TangentVec(x, np.asarray(components, dtype=float))

    def box_margin(self, coords) -> float:
        coords = np.asarray(coords, dtype=float)
        margin = np.inf
        for value, (lo, hi) in zip(coords, self.box):
            if np.isfinite(lo):
                margin = min(margin, value - lo)
            if np.isfinite(hi):
                margin = min(margin, hi - value)
        return float(margin) if np.isfinite(margin) else 1.0

    def contains(self, coords) -> bool:
        return self.box_margin(coords) > 0.0

    def require_inside(self, coords):
        if not self.contains(coords):
            raise ChartDomainError(
                f"{self.kind}: point {np.asarray(coords)} outside the chart box")

    # -- local geometry --------------------------------------------------

    def metric_matrix(self, coords) -> np.ndarray:
        raise NotImplementedError

    def christoffel(self, coords) -> np.ndarray:
        raise NotImplementedError

    def curvature(self, coords) -> np.ndarray:
        """R[l,i,j,k]; finite differences of the connection by default."""
        return geometry.curvature_tensor(self.christoffel, coords)

    # -- geodesics ---------------------------------------------------------

    def geodesic(self, x: FibrePoint, v, s_max) -> geometry.CurveRecord:
        v = np.asarray(v, dtype=float)
        self.require_inside(x.coords)
        return geometry.integrate_geodesic(self, x.coords, v, s_max)

    def exp(self, x: FibrePoint, v) -> FibrePoint:
        v = np.asarray(v, dtype=float)
        if np.allclose(v, 0.0):
            return self.point(x.coords.copy())
        rec = self.geodesic(x, v, 1.0)
        return self.point(rec.point(1.0))

    def log(self, x: FibrePoint, y: FibrePoint) -> TangentVec:
        return self._shoot_log(x, y)

    def distance(self, x: FibrePoint, y: FibrePoint) -> float:
        v = self.log(x, y)
        g = self.metric_matrix(x.coords)
        return float(np.sqrt(v.components @ g @ v.components))

    def injectivity_bound(self, x: FibrePoint) -> float:
        """Conservative radius of a normal neighborhood around ``x``."""
        return max(self.box_margin(x.coords), 0.0)

    # -- shooting fallback for the log map ---------------------------------

    def _shoot_log(self, x: FibrePoint, y: FibrePoint) -> TangentVec:
        self.require_inside(x.coords)
        self.require_inside(y.coords)
        target = y.coords
        v = target - x.coords  # chart straight line as initial guess
        residual = None
        for _ in range(SHOOTING_MAX_ITER):
            endpoint = self.exp(x, v).coords
            miss = endpoint - target
            residual = float(np.linalg.norm(miss))
            if residual <= SHOOTING_TARGET:
                return TangentVec(x, v)
            jac = np.empty((self.dim, self.dim))
            h = 1e-6 * (1.0 + np.linalg.norm(v))
            for k in range(self.dim):
                dv = np.zeros(self.dim)
                dv[k] = h
                jac[:, k] = (self.exp(x, v + dv).coords - self.exp(x, v - dv).coords) / (2 * h)
            try:
                step = np.linalg.solve(jac, miss)
            except np.linalg.LinAlgError:
                raise ShootingError("singular shooting Jacobian", residual=residual)
            lam = 1.0
            for _ in range(30):
                trial = v - lam * step
                trial_residual = float(np.linalg.norm(self.exp(x, trial).coords - target))
                if trial_residual < residual:
                    v = trial
                    break
                lam *= 0.5
            else:
                raise ShootingError("damped Newton stalled", residual=residual)
        raise ShootingError(
            f"log-map shooting did not converge (residual {residual:.3e})",
            residual=residual)


# ---------------------------------------------------------------------------
# euclidean space
# ---------------------------------------------------------------------------

class EuclideanModel(FibreModel):
    kind = "euclidean"

    def __init__(self, dim, box=None):
        super().__init__(dim, box or [(-np.inf, np.inf)] * dim)

    def metric_matrix(self, coords):
        return np.eye(self.dim)

    def christoffel(self, coords):
        return np.zeros((self.dim, self.dim, self.dim))

    def curvature(self, coords):
        return np.zeros((self.dim,) * 4)

    def geodesic(self, x, v, s_max):
        v = np.asarray(v, dtype=float)
        x0 = x.coords.copy()
        return geometry.CurveRecord(lambda s: x0 + s * v, lambda s: v, s_max)

    def exp(self, x, v):
        return self.point(x.coords + np.asarray(v, dtype=float))

    def log(self, x, y):
        return TangentVec(x, y.coords - x.coords)

    def distance(self, x, y):
        return float(np.linalg.norm(y.coords - x.coords))

    def injectivity_bound(self, x):
        return np.inf


# ---------------------------------------------------------------------------
# round sphere, polar chart about a pole
# ---------------------------------------------------------------------------

class SphereModel(FibreModel):
    """Round sphere of dimension ``dim`` and given radius.

    Chart coordinates (θ_1, ..., θ_dim): θ_1..θ_{dim-1} are polar angles
    valid on (collar, π − collar); the last coordinate is azimuthal and runs
    over all of ℝ (covering chart — its metric components are periodic).
    """

    kind = "sphere"

    def __init__(self, dim, radius=1.0, collar=CUT_COLLAR):
        if dim < 1:
            raise ValueError("sphere dimension must be >= 1")
        box = [(collar, math.pi - collar)] * (dim - 1) + [(-np.inf, np.inf)]
        super().__init__(dim, box)
        self.radius = float(radius)
        self.collar = float(collar)

    @property
    def constant_curvature(self):
        return 1.0 / self.radius**2

    # chart <-> unit embedding in R^{dim+1}

    def embed(self, coords):
        return self.radius * _unit_sphere_embed(np.asarray(coords, dtype=float))

    def embed_jacobian(self, coords):
        return self.radius * _unit_sphere_jacobian(np.asarray(coords, dtype=float))

    def chart_from_embedding(self, p):
        return _unit_sphere_angles(np.asarray(p, dtype=float) / self.radius)

    def metric_matrix(self, coords):
        coords = np.asarray(coords, dtype=float)
        diag = np.empty(self.dim)
        running = self.radius**2
        for i in range(self.dim):
            diag[i] = running
            if i < self.dim - 1:
                running = running * math.sin(coords[i]) ** 2
        return np.diag(diag)

    def _metric_derivs(self, coords):
        coords = np.asarray(coords, dtype=float)
        m = self.dim
        dg = np.zeros((m, m, m))
        for i in range(m):          # metric entry g_ii
            for k in range(i):      # depends on the polar angles before it
                prod = self.radius**2
                for j in range(i):
                    s = math.sin(coords[j])
                    prod *= (2.0 * s * math.cos(coords[j])) if j == k else s * s
                dg[k, i, i] = prod
        return dg

    def christoffel(self, coords):
        return geometry.christoffel_from_metric(
            self.metric_matrix(coords), self._metric_derivs(coords))

    def curvature(self, coords):
        return _constant_curvature_tensor(self.metric_matrix(coords),
                                          self.constant_curvature)

    def _chart_components(self, coords, v_emb):
        jac = self.embed_jacobian(coords)
        g = self.metric_matrix(coords)
        return np.linalg.solve(g, jac.T @ v_emb)

    def geodesic(self, x, v, s_max):
        v = np.asarray(v, dtype=float)
        self.require_inside(x.coords)
        g = self.metric_matrix(x.coords)
        speed = float(np.sqrt(v @ g @ v))
        if speed == 0.0:
            x0 = x.coords.copy()
            return geometry.CurveRecord(lambda s: x0, lambda s: np.zeros(self.dim), s_max)
        p0 = self.embed(x.coords)
        u = (self.embed_jacobian(x.coords) @ v) / speed  # unit embedding tangent
        omega = speed / self.radius

        def emb_point(s):
            return math.cos(omega * s) * p0 + math.sin(omega * s) * self.radius * u

        def point(s):
            coords = self.chart_from_embedding(emb_point(s))
            if not self.contains(coords):
                raise ChartDomainError(
                    f"sphere geodesic left the chart at parameter {s}",
                    exit_parameter=s)
            return coords

        def velocity(s):
            coords = point(s)
            demb = omega * (-math.sin(omega * s) * p0
                            + math.cos(omega * s) * self.radius * u)
            return self._chart_components(coords, demb)

        return geometry.CurveRecord(point, velocity, s_max)

    def exp(self, x, v):
        rec = self.geodesic(x, v, 1.0)
        return self.point(rec.point(1.0))

    def log(self, x, y):
        p, q = self.embed(x.coords), self.embed(y.coords)
        cosval = float(np.clip(p @ q / self.radius**2, -1.0, 1.0))
        d = self.radius * math.acos(cosval)
        w = q - (p @ q / self.radius**2) * p
        norm = float(np.linalg.norm(w))
        if norm < 1e-14:
            if d < self.radius * 1e-6:
                return TangentVec(x, np.zeros(self.dim))
            raise ChartDomainError("antipodal points: log map undefined")
        v_emb = (d / norm) * w
        return TangentVec(x, self._chart_components(x.coords, v_emb))

    def distance(self, x, y):
        p, q = self.embed(x.coords), self.embed(y.coords)
        cosval = float(np.clip(p @ q / self.radius**2, -1.0, 1.0))
        return self.radius * math.acos(cosval)

    def injectivity_bound(self, x):
        return self.radius * (math.pi - self.collar)


def _unit_sphere_embed(coords):
    """Hyperspherical chart -> unit vector in R^{m+1}."""
    m = coords.size
    out = np.empty(m + 1)
    running = 1.0
    for i in range(m):
        out[i] = running * math.cos(coords[i])
        running *= math.sin(coords[i])
    out[m] = running
    return out


def _unit_sphere_jacobian(coords):
    """∂E_i/∂θ_k for the hyperspherical embedding (unit radius)."""
    m = coords.size
    sin = np.sin(coords)
    cos = np.cos(coords)
    jac = np.zeros((m + 1, m))
    for i in range(m + 1):
        # E_i = (prod_{j < min(i, m)} sin_j) * (cos_i if i < m else 1)
        for k in range(min(i + 1, m)):
            prod = 1.0
            for j in range(min(i, m)):
                prod *= cos[j] if j == k else sin[j]
            if i < m:
                prod *= (-sin[i]) if k == i else cos[i]
            jac[i, k] = prod
    return jac


def _unit_sphere_angles(u):
    """Invert the hyperspherical embedding (unit input)."""
    m = u.size - 1
    coords = np.empty(m)
    for i in range(m - 1):
        tail = float(np.linalg.norm(u[i + 1:]))
        coords[i] = math.atan2(tail, u[i])
    coords[m - 1] = math.atan2(u[m], u[m - 1])
    return coords


# ---------------------------------------------------------------------------
# hyperbolic space, polar chart about a pole (hyperboloid model underneath)
# ---------------------------------------------------------------------------

class HyperbolicModel(FibreModel):
    """Hyperbolic space of constant negative curvature.

    Chart (r, φ_1, ..., φ_{dim-1}): r is the geodesic distance from the pole,
    valid on (collar, r_max); the angles chart the unit sphere of directions.
    """

    kind = "hyperbolic"

    def __init__(self, dim, curvature=-1.0, r_max=10.0, collar=CUT_COLLAR):
        if curvature >= 0:
            raise ValueError("hyperbolic curvature must be negative")
        if dim < 2:
            raise ValueError("hyperbolic dimension must be >= 2")
        box = [(collar, float(r_max))]
        box += [(collar, math.pi - collar)] * (dim - 2) + [(-np.inf, np.inf)]
        super().__init__(dim, box)
        self.curvature_value = float(curvature)
        self.scale = 1.0 / math.sqrt(-curvature)
        self.collar = float(collar)

    @property
    def constant_curvature(self):
        return self.curvature_value

    def embed(self, coords):
        """Hyperboloid model point in R^{dim+1}, time coordinate last."""
        coords = np.asarray(coords, dtype=float)
        r = coords[0]
        direction = (_unit_sphere_embed(coords[1:]) if self.dim > 1
                     else np.array([1.0]))
        a = self.scale
        out = np.empty(self.dim + 1)
        out[:-1] = a * math.sinh(r / a) * direction
        out[-1] = a * math.cosh(r / a)
        return out

    def chart_from_embedding(self, p):
        a = self.scale
        r = a * math.acosh(max(p[-1] / a, 1.0))
        spatial = p[:-1]
        norm = float(np.linalg.norm(spatial))
        if norm < 1e-300:
            raise ChartDomainError("hyperbolic chart singular at the pole")
        angles = _unit_sphere_angles(spatial / norm)
        return np.concatenate([[r], angles])

    def embed_jacobian(self, coords):
        coords = np.asarray(coords, dtype=float)
        a = self.scale
        r = coords[0]
        direction = _unit_sphere_embed(coords[1:])
        dir_jac = _unit_sphere_jacobian(coords[1:])
        jac = np.zeros((self.dim + 1, self.dim))
        jac[:-1, 0] = math.cosh(r / a) * direction
        jac[-1, 0] = math.sinh(r / a)
        jac[:-1, 1:] = a * math.sinh(r / a) * dir_jac
        return jac

    @staticmethod
    def _lorentz(p, q):
        return float(p[:-1] @ q[:-1] - p[-1] * q[-1])

    def metric_matrix(self, coords):
        coords = np.asarray(coords, dtype=float)
        a = self.scale
        w2 = (a * math.sinh(coords[0] / a)) ** 2
        diag = np.empty(self.dim)
        diag[0] = 1.0
        running = w2
        for i in range(1, self.dim):
            diag[i] = running
            if i < self.dim - 1:
                running = running * math.sin(coords[i]) ** 2
        return np.diag(diag)

    def _metric_derivs(self, coords):
        coords = np.asarray(coords, dtype=float)
        m = self.dim
        a = self.scale
        r = coords[0]
        sh, ch = math.sinh(r / a), math.cosh(r / a)
        dg = np.zeros((m, m, m))
        for i in range(1, m):
            # angular products: g_ii = (a sinh(r/a))^2 * prod_{1<=j<i} sin^2 φ_j
            prod_ang = 1.0
            for j in range(1, i):
                prod_ang *= math.sin(coords[j]) ** 2
            dg[0, i, i] = 2 * a * sh * ch * prod_ang
            for k in range(1, i):
                prod = (a * sh) ** 2
                for j in range(1, i):
                    s = math.sin(coords[j])
                    prod *= (2.0 * s * math.cos(coords[j])) if j == k else s * s
                dg[k, i, i] = prod
        return dg

    def christoffel(self, coords):
        return geometry.christoffel_from_metric(
            self.metric_matrix(coords), self._metric_derivs(coords))

    def curvature(self, coords):
        return _constant_curvature_tensor(self.metric_matrix(coords),
                                          self.constant_curvature)

    def _chart_components(self, coords, v_emb):
        jac = self.embed_jacobian(coords)
        g = self.metric_matrix(coords)
        eta = np.ones(self.dim + 1)
        eta[-1] = -1.0
        return np.linalg.solve(g, jac.T @ (eta * v_emb))

    def geodesic(self, x, v, s_max):
        v = np.asarray(v, dtype=float)
        self.require_inside(x.coords)
        g = self.metric_matrix(x.coords)
        speed = float(np.sqrt(v @ g @ v))
        if speed == 0.0:
            x0 = x.coords.copy()
            return geometry.CurveRecord(lambda s: x0, lambda s: np.zeros(self.dim), s_max)
        a = self.scale
        p0 = self.embed(x.coords)
        u = (self.embed_jacobian(x.coords) @ v) / speed
        omega = speed / a

        def emb_point(s):
            return math.cosh(omega * s) * p0 + math.sinh(omega * s) * a * u

        def point(s):
            coords = self.chart_from_embedding(emb_point(s))
            if not self.contains(coords):
                raise ChartDomainError(
                    f"hyperbolic geodesic left the chart at parameter {s}",
                    exit_parameter=s)
            return coords

        def velocity(s):
            coords = point(s)
            demb = omega * (math.sinh(omega * s) * p0 + math.cosh(omega * s) * a * u)
            return self._chart_components(coords, demb)

        return geometry.CurveRecord(point, velocity, s_max)

    def exp(self, x, v):
        rec = self.geodesic(x, v, 1.0)
        return self.point(rec.point(1.0))

    def log(self, x, y):
        p, q = self.embed(x.coords), self.embed(y.coords)
        a = self.scale
        c = -self._lorentz(p, q) / a**2
        d = a * math.acosh(max(c, 1.0))
        w = q + (self._lorentz(p, q) / a**2) * p
        norm2 = self._lorentz(w, w)
        if norm2 < 1e-28:
            return TangentVec(x, np.zeros(self.dim))
        v_emb = (d / math.sqrt(norm2)) * w
        return TangentVec(x, self._chart_components(x.coords, v_emb))

    def distance(self, x, y):
        p, q = self.embed(x.coords), self.embed(y.coords)
        c = -self._lorentz(p, q) / self.scale**2
        return self.scale * math.acosh(max(c, 1.0))

    def injectivity_bound(self, x):
        return np.inf


# ---------------------------------------------------------------------------
# products and twisted products
# ---------------------------------------------------------------------------

class ProductModel(FibreModel):
    kind = "product"

    def __init__(self, factors):
        self.factors = list(factors)
        box = []
        for f in self.factors:
            box.extend(f.box)
        super().__init__(sum(f.dim for f in self.factors), box)
        self.offsets = np.cumsum([0] + [f.dim for f in self.factors])

    def split(self, coords):
        coords = np.asarray(coords, dtype=float)
        return [coords[self.offsets[i]:self.offsets[i + 1]]
                for i in range(len(self.factors))]

    def metric_matrix(self, coords):
        blocks = [f.metric_matrix(c) for f, c in zip(self.factors, self.split(coords))]
        g = np.zeros((self.dim, self.dim))
        for i, b in enumerate(blocks):
            o = self.offsets[i]
            g[o:o + b.shape[0], o:o + b.shape[0]] = b
        return g

    def christoffel(self, coords):
        gamma = np.zeros((self.dim,) * 3)
        for i, (f, c) in enumerate(zip(self.factors, self.split(coords))):
            o, d = self.offsets[i], f.dim
            gamma[o:o + d, o:o + d, o:o + d] = f.christoffel(c)
        return gamma

    def curvature(self, coords):
        riem = np.zeros((self.dim,) * 4)
        for i, (f, c) in enumerate(zip(self.factors, self.split(coords))):
            o, d = self.offsets[i], f.dim
            riem[o:o + d, o:o + d, o:o + d, o:o + d] = f.curvature(c)
        return riem

    def geodesic(self, x, v, s_max):
        v = np.asarray(v, dtype=float)
        parts = self.split(x.coords)
        vparts = self.split(v)
        recs = [f.geodesic(f.point(c), w, s_max)
                for f, c, w in zip(self.factors, parts, vparts)]
        return geometry.CurveRecord(
            lambda s: np.concatenate([r.point(s) for r in recs]),
            lambda s: np.concatenate([r.velocity(s) for r in recs]),
            s_max)

    def exp(self, x, v):
        vparts = self.split(np.asarray(v, dtype=float))
        coords = np.concatenate([
            f.exp(f.point(c), w).coords
            for f, c, w in zip(self.factors, self.split(x.coords), vparts)])
        return self.point(coords)

    def log(self, x, y):
        comps = np.concatenate([
            f.log(f.point(cx), f.point(cy)).components
            for f, cx, cy in zip(self.factors, self.split(x.coords), self.split(y.coords))])
        return TangentVec(x, comps)

    def distance(self, x, y):
        parts = zip(self.factors, self.split(x.coords), self.split(y.coords))
        return math.sqrt(sum(f.distance(f.point(cx), f.point(cy)) ** 2
                             for f, cx, cy in parts))

    def injectivity_bound(self, x):
        return min(f.injectivity_bound(f.point(c))
                   for f, c in zip(self.factors, self.split(x.coords)))


class TwistedModel(FibreModel):
    """Twisted product (J × S, ds² + μ(s,z)² g_S) with one-dimensional base."""

    kind = "twisted"

    def __init__(self, interval, leaf: FibreModel, mu, injectivity=None):
        a, b = float(interval[0]), float(interval[1])
        box = [(a, b)] + list(leaf.box)
        super().__init__(1 + leaf.dim, box)
        self.interval = (a, b)
        self.leaf = leaf
        self.mu = _as_mu_field(mu, self.dim)
        self._injectivity = injectivity

    def mu_value(self, coords):
        return self.mu(np.asarray(coords, dtype=float))

    def mu_partial(self, coords, index):
        return self.mu.partial(np.asarray(coords, dtype=float), index)

    def metric_matrix(self, coords):
        coords = np.asarray(coords, dtype=float)
        g = np.zeros((self.dim, self.dim))
        g[0, 0] = 1.0
        mu = self.mu_value(coords)
        g[1:, 1:] = mu**2 * self.leaf.metric_matrix(coords[1:])
        return g

    def christoffel(self, coords):
        coords = np.asarray(coords, dtype=float)
        m = self.dim
        z = coords[1:]
        mu = self.mu_value(coords)
        dmu = np.array([self.mu_partial(coords, i) for i in range(m)])
        g_leaf = self.leaf.metric_matrix(z)
        gamma = np.zeros((m, m, m))
        # base-base and mixed blocks
        gamma[0, 1:, 1:] = -mu * dmu[0] * g_leaf
        for a in range(1, m):
            gamma[a, 0, a] = gamma[a, a, 0] = dmu[0] / mu
        # leaf block: leaf connection plus conformal-type terms from z-derivatives
        gamma_leaf = self.leaf.christoffel(z)
        gamma[1:, 1:, 1:] = gamma_leaf
        if np.any(dmu[1:] != 0.0):
            ginv_leaf = np.linalg.inv(g_leaf)
            grad_leaf = ginv_leaf @ dmu[1:]
            d = m - 1
            eye = np.eye(d)
            extra = (np.einsum("b,ac->abc", dmu[1:], eye)
                     + np.einsum("c,ab->abc", dmu[1:], eye)
                     - np.einsum("a,bc->abc", grad_leaf, g_leaf)) / mu
            gamma[1:, 1:, 1:] += extra
        return gamma

    def injectivity_bound(self, x):
        if self._injectivity is not None:
            return self._injectivity
        return max(self.box_margin(x.coords), 0.0)


def _as_mu_field(mu, dim):
    if isinstance(mu, ScalarField):
        if mu.nvars == dim:
            return mu
        if mu.nvars == 1:
            base = mu
            return ScalarField.from_callable(
                lambda c: base(c[:1]),
                dim,
                grad_fn=lambda c: np.concatenate(
                    [[base.partial(c[:1], 0)], np.zeros(dim - 1)]),
                label=base.label)
        raise ValueError("mu field arity does not match the twisted model")
    if isinstance(mu, str):
        if dim == 1:
            return ScalarField.from_expression(mu, ["s"])
        names = ["s"] + [f"z{i}" for i in range(1, dim)]
        expr = ScalarField.from_expression(mu, names)
        return expr
    raise TypeError("mu must be a ScalarField or expression text")


class ExpressionMetricModel(FibreModel):
    """Metric given componentwise by expressions on an explicit chart box."""

    kind = "expression-metric"

    def __init__(self, coord_names, box, components, params=None, injectivity=None):
        super().__init__(len(coord_names), box)
        self.coord_names = list(coord_names)
        comps = {}
        for i in range(self.dim):
            for j in range(self.dim):
                entry = components[i][j]
                if entry is None or entry == "0" or entry == 0:
                    continue
                if not isinstance(entry, ScalarField):
                    entry = ScalarField.from_expression(entry, self.coord_names,
                                                        params=params)
                comps[(i, j)] = entry
        for (i, j) in list(comps):
            comps.setdefault((j, i), comps[(i, j)])
        self.components = comps
        self._injectivity = injectivity

    def metric_matrix(self, coords):
        coords = np.asarray(coords, dtype=float)
        g = np.zeros((self.dim, self.dim))
        for (i, j), fld in self.components.items():
            g[i, j] = fld(coords)
        return g

    def christoffel(self, coords):
        try:
            return geometry.fd_christoffel(self.metric_matrix, coords)
        except np.linalg.LinAlgError:
            raise ChartDomainError(
                f"metric not invertible at {np.asarray(coords)}") from None

    def injectivity_bound(self, x):
        if self._injectivity is not None:
            return self._injectivity
        return max(self.box_margin(x.coords), 0.0)


def _constant_curvature_tensor(g, k):
    m = g.shape[0]
    eye = np.eye(m)
    return k * (np.einsum("jk,li->lijk", g, eye) - np.einsum("ik,lj->lijk", g, eye))


# ---------------------------------------------------------------------------
# factory
# ---------------------------------------------------------------------------

def euclidean(dim, box=None):
    return EuclideanModel(dim, box=box)


def sphere(dim, radius=1.0, collar=CUT_COLLAR):
    return SphereModel(dim, radius=radius, collar=collar)


def hyperbolic(dim, curvature=-1.0, r_max=10.0, collar=CUT_COLLAR):
    return HyperbolicModel(dim, curvature=curvature, r_max=r_max, collar=collar)


def product(factors):
    return ProductModel(factors)


def twisted(interval, leaf, mu, injectivity=None):
    return TwistedModel(interval, leaf, mu, injectivity=injectivity)


def expression_metric(coord_names, box, components, params=None, injectivity=None):
    return ExpressionMetricModel(coord_names, box, components, params=params,
                                 injectivity=injectivity)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def metric(model: FibreModel, x: FibrePoint, u: TangentVec, v: TangentVec) -> float:
    """g_F(u, v) at x; errors if the point is outside the chart."""
    model.require_inside(x.coords)
    g = model.metric_matrix(x.coords)
    return float(u.components @ g @ v.components)


def norm(model: FibreModel, v: TangentVec) -> float:
    return math.sqrt(max(metric(model, v.base, v, v), 0.0))


def christoffel(model: FibreModel, x: FibrePoint) -> np.ndarray:
    model.require_inside(x.coords)
    try:
        return model.christoffel(x.coords)
    except np.linalg.LinAlgError:
        raise ChartDomainError(f"metric not invertible at {x.coords}") from None


def geodesic(model: FibreModel, x: FibrePoint, v, s_max) -> geometry.CurveRecord:
    return model.geodesic(x, np.asarray(v, dtype=float), s_max)


def exp_map(model: FibreModel, x: FibrePoint, v) -> FibrePoint:
    return model.exp(x, np.asarray(v, dtype=float))


def log_map(model: FibreModel, x: FibrePoint, y: FibrePoint) -> TangentVec:
    return model.log(x, y)


def distance(model: FibreModel, x: FibrePoint, y: FibrePoint) -> float:
    return model.distance(x, y)


def position_field(model: FibreModel, x_star: FibrePoint, x: FibrePoint) -> TangentVec:
    """Radial position vector at ``x`` relative to the origin ``x_star``.

    Equals d_F(x_star, x) times the unit radial velocity at x, i.e. the
    endpoint velocity of the connecting geodesic on [0, 1].
    """
    v = model.log(x_star, x)
    if float(np.linalg.norm(v.components)) == 0.0:
        return TangentVec(x, np.zeros(model.dim))
    rec = model.geodesic(x_star, v.components, 1.0)
    return TangentVec(x, rec.velocity(1.0))


def gradient(model: FibreModel, h: ScalarField, x: FibrePoint) -> TangentVec:
    model.require_inside(x.coords)
    dh = h.gradient(x.coords)
    if not np.all(np.isfinite(dh)):
        raise ChartDomainError(f"field {h.label} not finite near {x.coords}")
    g = model.metric_matrix(x.coords)
    return TangentVec(x, np.linalg.solve(g, dh))


def hessian(model: FibreModel, h: ScalarField, x: FibrePoint) -> np.ndarray:
    """Hessian form matrix: Hess_ij = ∂_i∂_j h − Γ^k_ij ∂_k h."""
    model.require_inside(x.coords)
    second = h.hessian_matrix(x.coords)
    dh = h.gradient(x.coords)
    gamma = model.christoffel(x.coords)
    out = second - np.einsum("kij,k->ij", gamma, dh)
    return 0.5 * (out + out.T)


def sectional_curvature(model: FibreModel, x: FibrePoint, u, v) -> float:
    model.require_inside(x.coords)
    g = model.metric_matrix(x.coords)
    riem = model.curvature(x.coords)
    return geometry.sectional_curvature(
        g, riem, np.asarray(u, dtype=float), np.asarray(v, dtype=float))


class JacobiRecord:
    """Jacobi field along a geodesic, solved in a parallel orthonormal frame."""

    def __init__(self, model, curve, frame0, sol, s_max):
        self.model = model
        self.curve = curve
        self.frame0 = frame0
        self._sol = sol
        self.s_max = s_max
        self.m = model.dim

    def frame(self, s):
        return self._sol(s)[: self.m * self.m].reshape(self.m, self.m)

    def components(self, s):
        y = self._sol(s)
        return y[self.m * self.m: self.m * self.m + self.m]

    def components_prime(self, s):
        return self._sol(s)[self.m * self.m + self.m:]

    def value(self, s):
        """Chart components of J(s)."""
        return self.components(s) @ self.frame(s)

    def norm(self, s):
        # the frame is orthonormal so |J| is the Euclidean component norm
        return float(np.linalg.norm(self.components(s)))


def _jacobi_rhs_factory(model, curve):
    m = model.dim

    def rhs(s, y):
        x = curve.point(s)
        v = curve.velocity(s)
        gamma = model.christoffel(x)
        riem = model.curvature(x)
        g = model.metric_matrix(x)
        frame = y[:m * m].reshape(m, m)
        j = y[m * m: m * m + m]
        jp = y[m * m + m:]
        dframe = -np.einsum("lik,i,ak->al", gamma, v, frame)
        rvv = np.einsum("lijk,ai,j,k->al", riem, frame, v, v)
        amat = np.einsum("al,bl->ab", rvv @ g, frame)  # A_ab = g(R(e_a,v)v, e_b)
        djp = -amat.T @ j
        return np.concatenate([dframe.ravel(), jp, djp])

    return rhs


def jacobi_transport(model: FibreModel, curve: geometry.CurveRecord,
                     j0, j0_prime, s_max=None) -> JacobiRecord:
    """Solve J'' + R(J, γ')γ' = 0 along a geodesic record."""
    from scipy.integrate import solve_ivp

    m = model.dim
    s_max = curve.s_max if s_max is None else float(s_max)
    x0 = curve.point(0.0)
    v0 = curve.velocity(0.0)
    g0 = model.metric_matrix(x0)
    seed = [v0] + [np.eye(m)[i] for i in range(m)]
    frame0 = geometry.gram_schmidt(g0, seed)
    if frame0.shape[0] < m:
        frame0 = geometry.gram_schmidt(g0, np.eye(m))
    # frame components of the initial data
    j0 = np.asarray(j0, dtype=float)
    j0_prime = np.asarray(j0_prime, dtype=float)
    comp0 = frame0 @ g0 @ j0
    comp0p = frame0 @ g0 @ j0_prime
    y0 = np.concatenate([frame0.ravel(), comp0, comp0p])
    sol = solve_ivp(_jacobi_rhs_factory(model, curve), (0.0, s_max), y0,
                    method="DOP853", dense_output=True,
                    rtol=geometry.ODE_RTOL, atol=geometry.ODE_ATOL)
    if not sol.success:
        raise ChartDomainError(f"Jacobi transport failed: {sol.message}")
    return JacobiRecord(model, curve, frame0, sol.sol, s_max)


def jacobi_matrix_solution(model: FibreModel, curve, s_max):
    """Matrix Jacobi solution M(s) with M(0)=0, M'(0)=Id, in a parallel frame.

    Returns (frame0, M, Mp) where M(s), Mp(s) are (m, m) arrays mapping
    initial-derivative frame components to frame components at s.
    """
    from scipy.integrate import solve_ivp

    m = model.dim
    x0 = curve.point(0.0)
    v0 = curve.velocity(0.0)
    g0 = model.metric_matrix(x0)
    seed = [v0] + [np.eye(m)[i] for i in range(m)]
    frame0 = geometry.gram_schmidt(g0, seed)
    if frame0.shape[0] < m:
        frame0 = geometry.gram_schmidt(g0, np.eye(m))

    def rhs(s, y):
        x = curve.point(s)
        v = curve.velocity(s)
        gamma = model.christoffel(x)
        riem = model.curvature(x)
        g = model.metric_matrix(x)
        frame = y[:m * m].reshape(m, m)
        jm = y[m * m: 2 * m * m].reshape(m, m)
        jmp = y[2 * m * m:].reshape(m, m)
        dframe = -np.einsum("lik,i,ak->al", gamma, v, frame)
        rvv = np.einsum("lijk,ai,j,k->al", riem, frame, v, v)
        amat = np.einsum("al,bl->ab", rvv @ g, frame)
        djmp = -jm @ amat  # row a is one solution; components b get -(jm A)_{ab}
        return np.concatenate([dframe.ravel(), jmp.ravel(), djmp.ravel()])

    y0 = np.concatenate([frame0.ravel(), np.zeros(m * m), np.eye(m).ravel()])
    sol = solve_ivp(rhs, (0.0, float(s_max)), y0, method="DOP853",
                    dense_output=True, rtol=geometry.ODE_RTOL,
                    atol=geometry.ODE_ATOL)
    if not sol.success:
        raise ChartDomainError(f"Jacobi matrix solve failed: {sol.message}")

    def mat(s):
        return sol.sol(s)[m * m: 2 * m * m].reshape(m, m)

    def matp(s):
        return sol.sol(s)[2 * m * m:].reshape(m, m)

    def frame(s):
        return sol.sol(s)[:m * m].reshape(m, m)

    return frame, mat, matp


def check_lemma_position_jacobi(model: FibreModel, x_star: FibrePoint,
                                x: FibrePoint, w, fd_step=1e-5, bvp_pad=0.05):
    """Two routes to g_F(∇_w P, w): covariant derivative of the position
    field versus the derivative of |J|² for the Jacobi field with J(0)=0,
    J(1)=w along the radial geodesic. Returns (lhs, rhs)."""
    w = np.asarray(w, dtype=float)
    coords = x.coords

    def p_components(c):
        return position_field(model, x_star, model.point(c)).components

    h = fd_step * (1.0 + float(np.linalg.norm(coords)))
    dp = (p_components(coords + h * w) - p_components(coords - h * w)) / (2 * h)
    gamma = model.christoffel(coords)
    pvec = p_components(coords)
    nabla = dp + np.einsum("kij,i,j->k", gamma, w, pvec)
    g = model.metric_matrix(coords)
    lhs = float(nabla @ g @ w)

    v = model.log(x_star, x)
    curve = model.geodesic(x_star, v.components, 1.0 + bvp_pad)
    frame_fn, mat, matp = jacobi_matrix_solution(model, curve, 1.0 + bvp_pad)
    g1 = model.metric_matrix(curve.point(1.0))
    w_frame = frame_fn(1.0) @ g1 @ w
    a = np.linalg.solve(mat(1.0).T, w_frame)

    def jnorm2(s):
        return float(np.sum((a @ mat(s)) ** 2))

    delta = 1e-4
    rhs = 0.5 * (jnorm2(1.0 + delta) - jnorm2(1.0 - delta)) / (2 * delta)
    return lhs, rhs
