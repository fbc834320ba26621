"""Graph null hypersurfaces: the null graph condition, the canonical null
field, screen frames, the null second fundamental form and umbilicity.

A hypersurface is the graph of h over an open piece of the fibre. It is null
exactly when |∇h|_F = f∘h. Screen vectors are fibre-tangent and orthogonal
to ∇h; the canonical null field normalized against ζ = f ∂_t is
ξ = −(1/f∘h) ∂_t − (1/(f∘h)³) ∇h. The second fundamental form has the
closed expression
    B(X,Y) = (f'∘h)/(f∘h)² g(X,Y) + (1/(f∘h)) Hess_h(X,Y),
and an independent route B(X,Y) = −g(∇_X ξ, Y) through the spacetime
connection assembled by finite differences of the metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fibre as fib
from . import geometry
from .errors import ChartDomainError
from .fields import ScalarField
from .grw import GrwSpace, SpacetimePoint, SpacetimeTangent


class GraphHypersurface:
    """Graph of a scalar field h over a box (optionally masked) in the fibre."""

    def __init__(self, space: GrwSpace, domain, h: ScalarField, mask=None,
                 label="graph"):
        self.space = space
        self.domain = [(float(lo), float(hi)) for lo, hi in domain]
        if isinstance(h, str):
            h = ScalarField.from_expression(
                h, [f"x{i}" for i in range(space.fibre.dim)])
        self.h = h
        self.mask = mask
        self.label = label

    @property
    def n(self):
        return self.space.n

    def contains(self, coords) -> bool:
        coords = np.asarray(coords, dtype=float)
        for value, (lo, hi) in zip(coords, self.domain):
            if not (lo <= value <= hi):
                return False
        if self.mask is not None and not self.mask(coords):
            return False
        return self.space.fibre.contains(coords)

    def require_inside(self, coords):
        if not self.contains(coords):
            raise ChartDomainError(f"{self.label}: {np.asarray(coords)} outside "
                                   "the graph domain")

    def point(self, coords) -> SpacetimePoint:
        coords = np.asarray(coords, dtype=float)
        self.require_inside(coords)
        return self.space.point(self.h(coords), coords)

    def grid(self, counts, inset=1e-3):
        """Deterministic lattice inside the domain box, mask applied."""
        if np.isscalar(counts):
            counts = [int(counts)] * len(self.domain)
        axes = []
        for (lo, hi), k in zip(self.domain, counts):
            pad = inset * (hi - lo)
            axes.append(np.linspace(lo + pad, hi - pad, k))
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        return [p for p in pts if self.contains(p)]

    def sample(self, n, rng, max_tries=50):
        """Seeded uniform samples from the domain box, mask applied."""
        lo = np.array([b[0] for b in self.domain])
        hi = np.array([b[1] for b in self.domain])
        out = []
        for _ in range(max_tries * n):
            p = lo + (hi - lo) * rng.random(len(self.domain))
            if self.contains(p):
                out.append(p)
                if len(out) == n:
                    return out
        raise ChartDomainError(f"{self.label}: domain sampling starved "
                               f"({len(out)}/{n} points)")


@dataclass(eq=False)
class ScreenFrame:
    point: SpacetimePoint
    vectors: np.ndarray          # rows: fibre chart components, g-orthonormal
    gram_residual: float
    gradient_residual: float


@dataclass(eq=False)
class ValidationReport:
    points: list
    residuals: np.ndarray
    max_residual: float


@dataclass(eq=False)
class UmbilicityReport:
    points: list
    rho: np.ndarray              # trace-normalized umbilicity factor per point
    residuals: np.ndarray        # sup |B(X,Y) − ρ g(X,Y)| over screen pairs
    max_residual: float
    tolerance: float
    passed: bool
    mean_curvature: np.ndarray = field(default=None)

    def rho_at(self, index):
        return float(self.rho[index])


class _PointData:
    """Per-point cache of everything the form computations reuse."""

    def __init__(self, surface: GraphHypersurface, coords):
        coords = np.asarray(coords, dtype=float)
        surface.require_inside(coords)
        space = surface.space
        self.coords = coords
        self.h_value = surface.h(coords)
        space.warping.require_inside(self.h_value)
        self.f = space.warping.f(self.h_value)
        self.fp = space.warping.fp(self.h_value)
        self.g_fibre = space.fibre.metric_matrix(coords)
        self.dh = surface.h.gradient(coords)
        self.grad = np.linalg.solve(self.g_fibre, self.dh)  # ∇h components
        self.grad_norm = math.sqrt(max(self.grad @ self.g_fibre @ self.grad, 0.0))
        self._hess = None
        self.surface = surface

    @property
    def hessian(self):
        if self._hess is None:
            self._hess = fib.hessian(self.surface.space.fibre, self.surface.h,
                                     self.surface.space.fibre.point(self.coords))
        return self._hess

    def b_form(self, xvec, yvec):
        g_xy = self.f**2 * (xvec @ self.g_fibre @ yvec)
        return float((self.fp / self.f**2) * g_xy
                     + (xvec @ self.hessian @ yvec) / self.f)


def validate_null_graph(surface: GraphHypersurface, grid) -> ValidationReport:
    """Residual of |∇h|_F − f∘h per point; zero exactly on null graphs."""
    residuals = []
    for coords in grid:
        data = _PointData(surface, coords)
        residuals.append(abs(data.grad_norm - data.f))
    residuals = np.asarray(residuals)
    return ValidationReport(list(grid), residuals, float(residuals.max()))


def radial_identity_check(surface: GraphHypersurface, grid,
                          fd_step=1e-5) -> ValidationReport:
    """Residual of ∇_{∇h}∇h − (f∘h)(f'∘h)∇h (a consequence of nullity)."""
    space = surface.space
    model = space.fibre

    def grad_components(coords):
        g = model.metric_matrix(coords)
        return np.linalg.solve(g, surface.h.gradient(coords))

    residuals = []
    for coords in grid:
        data = _PointData(surface, coords)
        grad = data.grad
        step = fd_step * (1.0 + float(np.linalg.norm(coords)))
        m = model.dim
        dgrad = np.empty((m, m))  # dgrad[j, i] = ∂_j grad^i
        for j in range(m):
            up, dn = coords.copy(), coords.copy()
            up[j] += step
            dn[j] -= step
            dgrad[j] = (grad_components(up) - grad_components(dn)) / (2 * step)
        gamma = model.christoffel(coords)
        nabla = grad @ dgrad + np.einsum("kij,i,j->k", gamma, grad, grad)
        target = data.f * data.fp * grad
        diff = nabla - target
        residuals.append(math.sqrt(diff @ data.g_fibre @ diff))
    residuals = np.asarray(residuals)
    return ValidationReport(list(grid), residuals, float(residuals.max()))


def xi_field(surface: GraphHypersurface, coords) -> SpacetimeTangent:
    """The null field with g(ζ, ξ) = 1: ξ = −(1/f)∂_t − (1/f³)∇h."""
    data = _PointData(surface, coords)
    p = surface.point(coords)
    return surface.space.tangent(p, -1.0 / data.f, -data.grad / data.f**3)


def screen_basis(surface: GraphHypersurface, coords, rng=None) -> ScreenFrame:
    """g-orthonormal fibre frame orthogonal to ∇h (n − 2 vectors)."""
    data = _PointData(surface, coords)
    if data.grad_norm < 1e-12:
        raise ChartDomainError("degenerate graph point: ∇h vanishes")
    m = surface.space.fibre.dim
    gf = data.g_fibre
    unit_grad = data.grad / data.grad_norm
    candidates = []
    for i in range(m):
        e = np.zeros(m)
        e[i] = 1.0
        e = e - (e @ gf @ unit_grad) * unit_grad
        candidates.append(e)
    frame = geometry.gram_schmidt(gf, candidates)
    if frame.shape[0] != m - 1:
        raise ChartDomainError("screen frame construction failed")
    if rng is not None:
        mix = np.linalg.qr(rng.normal(size=(m - 1, m - 1)))[0]
        frame = mix @ frame
    frame = frame / data.f  # g = f² g_F on fibre vectors
    g_full = data.f**2 * gf
    gram = frame @ g_full @ frame.T
    gram_res = float(np.max(np.abs(gram - np.eye(m - 1))))
    grad_res = float(np.max(np.abs(frame @ gf @ data.grad)))
    return ScreenFrame(surface.point(coords), frame, gram_res, grad_res)


def second_fundamental_form(surface: GraphHypersurface, coords, xvec, yvec,
                            route="formula") -> float:
    """B(X, Y) on screen vectors given by fibre chart components."""
    if route == "formula":
        data = _PointData(surface, coords)
        return data.b_form(np.asarray(xvec, dtype=float),
                           np.asarray(yvec, dtype=float))
    if route == "connection":
        return _b_via_connection(surface, coords, xvec, yvec)
    raise ValueError("route must be 'formula' or 'connection'")


def _b_via_connection(surface: GraphHypersurface, coords, xvec, yvec,
                      fd_step=1e-6):
    """B(X,Y) = −g(∇_X ξ, Y) with a finite-difference spacetime connection."""
    space = surface.space
    coords = np.asarray(coords, dtype=float)
    xvec = np.asarray(xvec, dtype=float)
    yvec = np.asarray(yvec, dtype=float)

    def xi_components(c):
        return xi_field(surface, c).components

    step = fd_step * (1.0 + float(np.linalg.norm(coords)))
    d_xi = (xi_components(coords + step * xvec)
            - xi_components(coords - step * xvec)) / (2 * step)
    p = surface.point(coords)
    gamma = space.chart.fd_christoffel(p.coords)
    x_lift = np.concatenate([[0.0], xvec])
    y_lift = np.concatenate([[0.0], yvec])
    xi_c = xi_components(coords)
    nabla = d_xi + np.einsum("kij,i,j->k", gamma, x_lift, xi_c)
    g = space.chart.metric_matrix(p.coords)
    return float(-(nabla @ g @ y_lift))


def mean_curvature(surface: GraphHypersurface, coords, rng=None,
                   route="formula") -> float:
    """Trace of B over a g-orthonormal screen frame."""
    frame = screen_basis(surface, coords, rng=rng)
    return float(sum(second_fundamental_form(surface, coords, e, e, route=route)
                     for e in frame.vectors))


def umbilicity_test(surface: GraphHypersurface, grid, tol=1e-6, seed=0,
                    pairs=8) -> UmbilicityReport:
    """Test B = ρ g with ρ = H/(n−2) over randomized g-unit screen pairs."""
    rng = np.random.default_rng(seed)
    n = surface.n
    rhos, residuals, hs = [], [], []
    for coords in grid:
        data = _PointData(surface, coords)
        frame = screen_basis(surface, coords)
        k = frame.vectors.shape[0]
        g_full = data.f**2 * data.g_fibre
        h_value = float(sum(data.b_form(e, e) for e in frame.vectors))
        rho = h_value / (n - 2)
        worst = 0.0
        for _ in range(pairs):
            a = rng.normal(size=k) @ frame.vectors
            b = rng.normal(size=k) @ frame.vectors
            a = a / math.sqrt(a @ g_full @ a)
            b = b / math.sqrt(b @ g_full @ b)
            worst = max(worst, abs(data.b_form(a, b) - rho * float(a @ g_full @ b)))
        rhos.append(rho)
        residuals.append(worst)
        hs.append(h_value)
    residuals = np.asarray(residuals)
    max_res = float(residuals.max()) if len(residuals) else 0.0
    return UmbilicityReport(list(grid), np.asarray(rhos), residuals, max_res,
                            tol, max_res <= tol, np.asarray(hs))


def rho_at_point(surface: GraphHypersurface, coords) -> float:
    return mean_curvature(surface, coords) / (surface.n - 2)


def null_sectional_from_rho(surface: GraphHypersurface, coords,
                            delta=1e-3) -> float:
    """ξ(ρ) − ρ² via a finite difference of ρ along the integral curve of ξ.

    Valid on (near-)umbilic surfaces, where the value is the null sectional
    curvature of any null plane containing ξ.
    """
    from scipy.integrate import solve_ivp

    coords = np.asarray(coords, dtype=float)

    def flow_rhs(_tau, c):
        data = _PointData(surface, c)
        return -data.grad / data.f**3

    values = {}
    for sign in (1.0, -1.0):
        sol = solve_ivp(flow_rhs, (0.0, sign * delta), coords, method="DOP853",
                        rtol=1e-10, atol=1e-12)
        if not sol.success:
            raise ChartDomainError("ξ flow left the graph domain")
        values[sign] = rho_at_point(surface, sol.y[:, -1])
    rho0 = rho_at_point(surface, coords)
    xi_rho = (values[1.0] - values[-1.0]) / (2 * delta)
    return float(xi_rho - rho0**2)


def null_sectional_two_routes(surface: GraphHypersurface, coords):
    """(ξ(ρ) − ρ², plane-curvature route) for the null plane spanned by ξ
    and a unit screen direction; both normalized against ξ."""
    from .grw import null_sectional_curvature

    data = _PointData(surface, coords)
    frame = screen_basis(surface, coords)
    v = frame.vectors[0] * data.f        # g_F-unit screen direction
    w = -data.grad / data.grad_norm      # g_F-unit along −∇h
    p = surface.point(coords)
    plane_value = null_sectional_curvature(surface.space, p, v, w)
    return null_sectional_from_rho(surface, coords), plane_value / data.f**2
