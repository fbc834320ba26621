"""Standard static spaces F ×_φ I and the radial family
(1/h) dr² + r² g₀ − h dt².

Dividing the static metric by φ² gives a product spacetime over the
conformal fibre (F, g_F/φ²); umbilic null hypersurfaces transfer across the
conformal change by B = (B* + ξ(ln φ) g*)/φ². For the radial family the
coordinate change r = ϕ(s) with ϕ' = h∘ϕ turns the conformal fibre into
ds² + μ(s)² g₀ with μ = ϕ/√(h∘ϕ), and the two umbilic hypersurfaces through
a point are the graphs t = ±s + t0 with

    H* = (n−2) d/ds ln(μφ),    H̃* = (n−2) d/ds ln(φ/μ)

(φ evaluated along the profile). Nonvanishing h‴ certifies that the
decomposition is unique, hence that the pair is the complete list.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import expressions as ex
from . import fibre as fib
from . import geometry, twist
from .errors import ChartDomainError, HypothesisError
from .fields import Profile1D, ScalarField

HORIZON_FLOOR = 1e-8


class StaticModel:
    """F × I with metric g* = g_F − φ² dt²; chart order (fibre coords, t)."""

    def __init__(self, fibre_model: fib.FibreModel, potential,
                 t_interval=(-math.inf, math.inf)):
        self.fibre = fibre_model
        if isinstance(potential, str):
            potential = ScalarField.from_expression(
                potential, [f"x{i}" for i in range(fibre_model.dim)])
        self.potential = potential
        self.t_interval = t_interval
        self.dim = fibre_model.dim + 1

    @property
    def n(self):
        return self.dim

    def potential_value(self, x_coords):
        value = self.potential(np.asarray(x_coords, dtype=float))
        if value <= 0:
            raise ChartDomainError(f"static potential not positive at {x_coords}")
        return value

    def metric_matrix(self, y):
        y = np.asarray(y, dtype=float)
        x = y[:-1]
        g = np.zeros((self.dim, self.dim))
        g[:-1, :-1] = self.fibre.metric_matrix(x)
        g[-1, -1] = -self.potential_value(x) ** 2
        return g

    def christoffel(self, y):
        return geometry.fd_christoffel(self.metric_matrix, np.asarray(y, float))

    def box_margin(self, y):
        y = np.asarray(y, dtype=float)
        margin = self.fibre.box_margin(y[:-1])
        lo, hi = self.t_interval
        if math.isfinite(lo):
            margin = min(margin, y[-1] - lo)
        if math.isfinite(hi):
            margin = min(margin, hi - y[-1])
        return margin


class DecompositionChart:
    """Concrete map (s, z) ↦ fibre chart coordinates with its tangents."""

    def __init__(self, point_fn, base_tangent_fn, leaf_tangent_fns, leaf_dim):
        self._point = point_fn
        self._base = base_tangent_fn
        self._leaf = leaf_tangent_fns
        self.leaf_dim = leaf_dim

    def point(self, s, z):
        return np.asarray(self._point(s, np.asarray(z, dtype=float)), dtype=float)

    def base_tangent(self, s, z):
        return np.asarray(self._base(s, np.asarray(z, dtype=float)), dtype=float)

    def leaf_tangent(self, s, z, a):
        return np.asarray(self._leaf(s, np.asarray(z, dtype=float), a), dtype=float)


# ---------------------------------------------------------------------------
# the radial family
# ---------------------------------------------------------------------------

class RadialStaticFamily:
    """(I × S² × ℝ, (1/h) dr² + r² g₀ − h dt²)."""

    def __init__(self, h, r_interval, params=None):
        if isinstance(h, str):
            h = ex.parse(h)
        if params:
            h = ex.bind(h, params)
        self.h_expr = h
        self.h = Profile1D(ScalarField.from_expression(h, ["r"]), var="r")
        self.r_interval = (float(r_interval[0]), float(r_interval[1]))

    def h_value(self, r):
        value = self.h(r)
        if value <= 0:
            raise ChartDomainError(f"h not positive at r={r} (inside horizon?)")
        return value

    def fibre_model(self) -> fib.ExpressionMetricModel:
        h_text = ex.to_text(self.h_expr)
        box = [self.r_interval, (fib.CUT_COLLAR, math.pi - fib.CUT_COLLAR),
               (-math.inf, math.inf)]
        comps = [[f"1/({h_text})", None, None],
                 [None, "r^2", None],
                 [None, None, "r^2*sin(theta)^2"]]
        return fib.expression_metric(["r", "theta", "phi"], box, comps)

    def static_model(self) -> StaticModel:
        h_text = ex.to_text(self.h_expr)
        potential = ScalarField.from_expression(f"sqrt({h_text})",
                                                ["r", "theta", "phi"])
        return StaticModel(self.fibre_model(), potential)


@dataclass(eq=False)
class RadialProfile:
    """Solution of ϕ'(s) = h(ϕ(s)), ϕ(0) = r0, with the induced leaf scale."""

    family: RadialStaticFamily
    r0: float
    s_span: tuple
    _dense: object = field(default=None, repr=False)
    horizon_s: float = None

    def phi(self, s):
        lo, hi = self.s_span
        if not lo - 1e-12 <= s <= hi + 1e-12:
            raise ChartDomainError(f"s={s} outside the profile span {self.s_span}")
        return float(self._dense(s))

    def phi_prime(self, s):
        return self.family.h_value(self.phi(s))

    def mu(self, s):
        r = self.phi(s)
        return r / math.sqrt(self.family.h_value(r))

    def mu_log_derivative(self, s):
        # d/ds ln μ = h/r − h'/2 at r = ϕ(s)
        r = self.phi(s)
        return self.family.h_value(r) / r - self.family.h.d1(r) / 2

    def mu_prime(self, s):
        return self.mu(s) * self.mu_log_derivative(s)

    def mu_ratio_second(self, s):
        # μ''/μ = h q'(r) + q² with q = h/r − h'/2
        r = self.phi(s)
        h = self.family.h_value(r)
        hp = self.family.h.d1(r)
        hpp = self.family.h.d2(r)
        q = h / r - hp / 2
        qp = hp / r - h / r**2 - hpp / 2
        return h * qp + q**2

    def mu_ratio_second_derivative(self, s):
        # chain-analytic (μ''/μ)' in s; equals −h² h‴ / 2
        r = self.phi(s)
        h = self.family.h_value(r)
        hp = self.family.h.d1(r)
        hpp = self.family.h.d2(r)
        hppp = self.family.h.d3(r)
        q = h / r - hp / 2
        qp = hp / r - h / r**2 - hpp / 2
        qpp = hpp / r - 2 * hp / r**2 + 2 * h / r**3 - hppp / 2
        return h * (hp * qp + h * qpp + 2 * q * qp)

    def identity_residual(self, s):
        r = self.phi(s)
        h = self.family.h_value(r)
        hppp = self.family.h.d3(r)
        return self.mu_ratio_second_derivative(s) + h**2 * hppp / 2

    def identity_residual_fd(self, s, delta=1e-4):
        """Numerical cross-check of the same identity by differencing μ''/μ."""
        lhs = (self.mu_ratio_second(s + delta)
               - self.mu_ratio_second(s - delta)) / (2 * delta)
        r = self.phi(s)
        return lhs + self.family.h_value(r) ** 2 * self.family.h.d3(r) / 2

    def potential_value(self, s):
        return math.sqrt(self.family.h_value(self.phi(s)))

    def mu_phi_identity_residual(self, s):
        """μ · √(h∘ϕ) = ϕ identically (algebraic bookkeeping check)."""
        return abs(self.mu(s) * self.potential_value(s) - self.phi(s))

    def h_star_formula(self, s, n=4):
        """(n−2) d/ds ln(μφ) = (n−2) d/ds ln ϕ."""
        return (n - 2) * self.phi_prime(s) / self.phi(s)

    def h_dual_formula(self, s, n=4):
        """(n−2) d/ds ln(φ/μ) = (n−2) (h'(r) − h(r)/r) at r = ϕ(s)."""
        r = self.phi(s)
        return (n - 2) * (self.family.h.d1(r) - self.family.h_value(r) / r)

    def decomposition(self):
        """Normalized twisted data: leaf sphere of radius μ(0), μ̂ = μ/μ(0)."""
        mu0 = self.mu(0.0)
        lo, hi = self.s_span
        mu_hat = ScalarField.from_callable(
            lambda c: self.mu(float(c[0])) / mu0, 1, label="mu-normalized")
        dec = twist.TwistedDecomposition((lo, hi), mu_hat,
                                         leaf=fib.sphere(2, radius=mu0),
                                         label=f"radial:r0={self.r0:g}")
        return dec

    def chart_map(self) -> DecompositionChart:
        def point(s, z):
            return np.array([self.phi(s), z[0], z[1]])

        def base(s, z):
            return np.array([self.phi_prime(s), 0.0, 0.0])

        def leaf(s, z, a):
            out = np.zeros(3)
            out[1 + a] = 1.0
            return out

        return DecompositionChart(point, base, leaf, 2)

    def pullback_residual(self, s_samples, z=(1.1, 0.4), fd_step=1e-6):
        """Check Φ*((1/h) g_F) = ds² + μ² g₀ by differencing the chart map."""
        family = self.family
        worst = 0.0
        for s in s_samples:
            def conf_metric(y):
                r, theta = y[0], y[1]
                h = family.h_value(r)
                return np.diag([1.0 / h**2, r**2 / h,
                                (r * math.sin(theta)) ** 2 / h])

            chart = self.chart_map()
            base_coords = chart.point(s, np.asarray(z))
            jac = np.zeros((3, 3))
            for k, delta in enumerate(np.eye(3)):
                up = chart.point(s + fd_step * delta[0],
                                 np.asarray(z) + fd_step * delta[1:])
                dn = chart.point(s - fd_step * delta[0],
                                 np.asarray(z) - fd_step * delta[1:])
                jac[:, k] = (up - dn) / (2 * fd_step)
            pulled = jac.T @ conf_metric(base_coords) @ jac
            mu2 = self.mu(s) ** 2
            want = np.diag([1.0, mu2, mu2 * math.sin(z[0]) ** 2])
            worst = max(worst, float(np.max(np.abs(pulled - want))))
        return worst


def radial_profile(family: RadialStaticFamily, r0, s_span=(-0.5, 0.5),
                   rtol=1e-12) -> RadialProfile:
    """Integrate the radial coordinate change; stops at the horizon."""
    if isinstance(family, str):
        family = RadialStaticFamily(family, (1e-6, math.inf))
    if not family.r_interval[0] < r0 < family.r_interval[1]:
        raise ChartDomainError(f"r0={r0} outside {family.r_interval}")
    family.h_value(r0)

    def rhs(_s, y):
        return [family.h_value(float(y[0]))]

    def horizon(_s, y):
        return float(family.h(float(y[0]))) - HORIZON_FLOOR

    horizon.terminal = True
    horizon.direction = -1

    def edge(_s, y):
        lo, hi = family.r_interval
        margin = y[0] - lo if math.isfinite(lo) else 1.0
        if math.isfinite(hi):
            margin = min(margin, hi - y[0])
        return margin

    edge.terminal = True
    edge.direction = -1

    lo, hi = float(s_span[0]), float(s_span[1])
    denses = {}
    limits = {}
    horizon_s = None
    for end in (hi, lo):
        if end == 0.0:
            continue
        sol = solve_ivp(rhs, (0.0, end), [float(r0)], method="DOP853",
                        dense_output=True, rtol=rtol, atol=1e-13,
                        events=(horizon, edge))
        if not sol.success:
            raise ChartDomainError(f"profile integration failed: {sol.message}")
        reached = sol.t[-1]
        if sol.status == 1:
            if len(sol.t_events[0]):
                horizon_s = float(sol.t_events[0][0])
            reached = sol.t[-1]
        denses[np.sign(end)] = sol.sol
        limits[np.sign(end)] = reached
    span = (limits.get(-1.0, 0.0), limits.get(1.0, 0.0))

    def dense(s):
        if s == 0.0:
            return r0
        return denses[np.sign(s)](s)[0]

    return RadialProfile(family, float(r0), span, dense, horizon_s)


# ---------------------------------------------------------------------------
# static hypersurfaces
# ---------------------------------------------------------------------------

class StaticNullSurface:
    """Graph {t = ±s + t0} over decomposition coordinates of the conformal
    fibre, living in a standard static chart."""

    def __init__(self, model: StaticModel, chart: DecompositionChart, t0,
                 time_sign=1, label="static-surface"):
        self.model = model
        self.chart = chart
        self.t0 = float(t0)
        self.time_sign = int(time_sign)
        self.label = label

    def chart_point(self, s, z):
        x = self.chart.point(s, z)
        return np.concatenate([x, [self.time_sign * s + self.t0]])

    def xi_components(self, s, z):
        """The null field used on both sides of the conformal change:
        ξ = −∂_t − (time sign)·E with E the base direction."""
        base = self.chart.base_tangent(s, z)
        return np.concatenate([-self.time_sign * base, [-1.0]])

    def null_residual(self, s, z):
        y = self.chart_point(s, z)
        g = self.model.metric_matrix(y)
        xi = self.xi_components(s, z)
        return abs(float(xi @ g @ xi))

    def graph_null_residual(self, s, z):
        """Direct null-graph check: the surface tangents are degenerate
        exactly along ξ; equivalently g*(T_base, T_base) = 0 for the lifted
        base tangent."""
        y = self.chart_point(s, z)
        g = self.model.metric_matrix(y)
        lift = np.concatenate([self.chart.base_tangent(s, z),
                               [self.time_sign]])
        return abs(float(lift @ g @ lift))

    def screen_vectors(self, s, z):
        y = self.chart_point(s, z)
        g = self.model.metric_matrix(y)
        rows = []
        for a in range(self.chart.leaf_dim):
            rows.append(np.concatenate([self.chart.leaf_tangent(s, z, a), [0.0]]))
        return geometry.gram_schmidt(g, rows), g, y

    def b_star(self, s, z, fd_step=1e-6):
        """Matrix of B*(X_a, X_b) = −g*(∇*_X ξ, Y) over the screen frame."""
        frame, g, y = self.screen_vectors(s, z)
        gamma = geometry.fd_christoffel(self.model.metric_matrix, y)
        k = frame.shape[0]
        out = np.empty((k, k))
        z = np.asarray(z, dtype=float)
        for a in range(k):
            xvec = frame[a]
            # ξ varies over the surface; differentiate along the leaf curve
            step = fd_step
            dz = np.zeros(self.chart.leaf_dim + 1)
            # move along the screen direction in (s, z) parameters: project
            # the chart vector back to parameter speed (leaf tangents are the
            # parameter axes, so invert the leaf-tangent matrix)
            leaf_mat = np.stack([
                np.concatenate([self.chart.leaf_tangent(s, z, b), [0.0]])
                for b in range(self.chart.leaf_dim)])
            coeffs = np.linalg.lstsq(leaf_mat.T, xvec, rcond=None)[0]
            zp = z + step * coeffs
            zm = z - step * coeffs
            d_xi = (self.xi_components(s, zp) - self.xi_components(s, zm)) / (2 * step)
            xi = self.xi_components(s, z)
            nabla = d_xi + np.einsum("kij,i,j->k", gamma, xvec, xi)
            for b in range(k):
                out[a, b] = -float(nabla @ g @ frame[b])
        return 0.5 * (out + out.T)

    def h_star_measured(self, s, z):
        return float(np.trace(self.b_star(s, z)))

    def xi_ln_potential(self, s, z, fd_step=1e-6):
        """ξ(ln φ) along the surface; equals −(time sign)·∂_s ln φ."""
        zf = np.asarray(z, dtype=float)
        up = math.log(self.model.potential_value(self.chart.point(s + fd_step, zf)))
        dn = math.log(self.model.potential_value(self.chart.point(s - fd_step, zf)))
        return -self.time_sign * (up - dn) / (2 * fd_step)


def static_umbilic_construct(model: StaticModel, chart: DecompositionChart,
                             t0, label="static-umbilic") -> StaticNullSurface:
    """The umbilic null hypersurface {(s, z, s + t0)}."""
    return StaticNullSurface(model, chart, t0, time_sign=1, label=label)


def static_dual(model: StaticModel, chart: DecompositionChart, t0,
                label="static-dual") -> StaticNullSurface:
    """The dual {(s, z, −s + t0)} through the same decomposition."""
    return StaticNullSurface(model, chart, t0, time_sign=-1, label=label)


# ---------------------------------------------------------------------------
# conformal transfer
# ---------------------------------------------------------------------------

def conformal_B_transform(b_star, xi_ln_phi, g_star, phi, n=None):
    """B = (B* + ξ(ln φ) g*)/φ² on matching screen arguments.

    Scalars or matching-shape arrays; returns the transformed form. The
    associated trace relation is H = H* + (n−2) ξ(ln φ).
    """
    phi = np.asarray(phi, dtype=float)
    if np.any(phi <= 0):
        raise ChartDomainError("conformal factor must be positive")
    b_star = np.asarray(b_star, dtype=float)
    g_star = np.asarray(g_star, dtype=float)
    return (b_star + xi_ln_phi * g_star) / phi**2


def conformal_H_transform(h_star, xi_ln_phi, n):
    return h_star + (n - 2) * xi_ln_phi


# ---------------------------------------------------------------------------
# uniqueness certificate
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class CertificateReport:
    verdict: str                  # "exactly_two" | "refused"
    reason: str
    r_samples: np.ndarray
    h3_samples: np.ndarray
    longest_flat_run: float
    identity_residual: float = None


def uniqueness_certificate(family, r_range=None, flat_tol=1e-9,
                           interval_tol=0.05, samples=400,
                           profile: RadialProfile = None) -> CertificateReport:
    """Certify that the family member has exactly two umbilic null
    hypersurfaces through each point: h‴ must not vanish on any subinterval
    longer than ``interval_tol``. With a profile, the identity
    (μ''/μ)' = −h² h‴/2 is cross-checked numerically."""
    if isinstance(family, str):
        family = RadialStaticFamily(family, r_range or (0.5, 20.0))
    lo, hi = r_range or family.r_interval
    lo = max(lo, family.r_interval[0] + 1e-9)
    hi = min(hi, family.r_interval[1] - 1e-9 if math.isfinite(family.r_interval[1])
             else hi)
    rs = np.linspace(lo, hi, samples)
    h3 = np.array([family.h.d3(float(r)) for r in rs])
    flat = np.abs(h3) < flat_tol
    longest = 0.0
    run_start = None
    for i, is_flat in enumerate(flat):
        if is_flat and run_start is None:
            run_start = rs[i]
        if not is_flat and run_start is not None:
            longest = max(longest, rs[i - 1] - run_start)
            run_start = None
    if run_start is not None:
        longest = max(longest, rs[-1] - run_start)

    identity = None
    if profile is not None:
        span = profile.s_span
        probes = np.linspace(span[0] * 0.8, span[1] * 0.8, 9)
        identity = max(abs(profile.identity_residual_fd(float(s)))
                       for s in probes if span[0] < s < span[1])

    if longest > interval_tol:
        return CertificateReport(
            "refused",
            "h''' vanishes on a subinterval: the leaf geometry can be of "
            "constant curvature there, so extra decompositions may exist",
            rs, h3, longest, identity)
    return CertificateReport("exactly_two",
                             "h''' has no flat subinterval: the warped "
                             "decomposition of the conformal fibre is unique",
                             rs, h3, longest, identity)


def sphere_leaf_constant_curvature_guard(mu, interval, tol=1e-8):
    """Delegates to the warped-fibre probe: True means constant curvature."""
    return twist.sphere_warped_uniqueness_probe(mu, interval, tol=tol)
