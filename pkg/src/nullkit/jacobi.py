"""Conjugate points along null geodesics inside umbilic nullcones.

For a null geodesic inside a totally umbilic nullcone the screen Jacobi
system collapses to a single scalar equation

    j'' + Ric(γ', γ')/(n−2) · j = 0,

so a conjugate point, if any, has the maximal multiplicity n−2. The full
(n−2)-dimensional system in a parallel screen frame is integrated as the
verification oracle: its Jacobi operator must be proportional to the
identity in that situation, and its kernel rank at a zero gives the
multiplicity directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import geometry, nullhyp
from .errors import ChartDomainError
from .grw import GrwSpace, NullGeodesicRecord

ZERO_REFINE_TOL = 1e-10
KERNEL_SV_CUT = 1e-7


def ricci_along(space: GrwSpace, record: NullGeodesicRecord, s_values,
                route="auto"):
    """Samples of Ric(γ', γ') along the geodesic.

    Constant-curvature fibres use the closed form
    (n−2) α'² (k + f'² − f f'')/f²; otherwise the full curvature tensor of
    the product chart is contracted (finite differences of the connection).
    """
    s_values = np.atleast_1d(np.asarray(s_values, dtype=float))
    k = getattr(space.fibre, "constant_curvature", None)
    if space.fibre.kind == "euclidean":
        k = 0.0
    use_fast = route == "fast" or (route == "auto" and k is not None)
    out = np.empty(s_values.size)
    for idx, s in enumerate(s_values):
        if use_fast:
            t = record.alpha(s)
            f = space.warping.f(t)
            fp = space.warping.fp(t)
            fpp = space.warping.fpp(t)
            ap = record.alpha_prime(s)
            out[idx] = (space.n - 2) * ap**2 * (k + fp**2 - f * fpp) / f**2
        else:
            coords = record.chart_point(s)
            vel = record.chart_velocity(s)
            riem = space.chart.curvature(coords)
            ric = np.einsum("llik->ik", riem)
            out[idx] = float(vel @ ric @ vel)
    return out if out.size > 1 else float(out[0])


@dataclass(eq=False)
class ConjugateReport:
    zeros: list                      # (parameter, multiplicity) pairs
    s_max: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def first_zero(self):
        return self.zeros[0][0] if self.zeros else None


def scalar_jacobi(space: GrwSpace, record: NullGeodesicRecord, s_max=None,
                  route="auto", rtol=1e-11) -> ConjugateReport:
    """Integrate the scalar equation with j(0) = 0, j'(0) = 1 and locate
    its zeros; each zero is a conjugate point of maximal multiplicity n−2."""
    s_max = record.s_max if s_max is None else float(s_max)

    def rhs(s, y):
        ric = ricci_along(space, record, s, route=route)
        return [y[1], -ric / (space.n - 2) * y[0]]

    def zero_event(s, y):
        return y[0] if s > 1e-8 else 1.0

    zero_event.terminal = False
    zero_event.direction = 0

    sol = solve_ivp(rhs, (0.0, s_max), [0.0, 1.0], method="DOP853",
                    dense_output=True, rtol=rtol, atol=1e-13,
                    events=zero_event, max_step=s_max / 50)
    if not sol.success:
        raise ChartDomainError(f"scalar Jacobi integration failed: {sol.message}")
    zeros = []
    for s_event in sol.t_events[0]:
        refined = _refine_zero(lambda s: sol.sol(s)[0], s_event, s_max)
        if refined is not None:
            zeros.append((refined, space.n - 2))
    return ConjugateReport(zeros, s_max,
                           {"solution": sol.sol, "normalization": "j'(0)=1"})


def _refine_zero(fn, s_guess, s_max, width=1e-4):
    lo = max(s_guess - width, 1e-8)
    hi = min(s_guess + width, s_max)
    flo, fhi = fn(lo), fn(hi)
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if flo * fhi > 0:
        return float(s_guess)  # solver event already at the sign change
    return float(brentq(fn, lo, hi, xtol=ZERO_REFINE_TOL))


@dataclass(eq=False)
class FullSystemReport:
    zeros: list                      # (parameter, kernel rank) pairs
    proportionality_residual: float  # sup ‖A − (tr A/(n−2)) Id‖ along γ
    s_max: float
    diagnostics: dict = field(default_factory=dict)


def full_jacobi_system(space: GrwSpace, record: NullGeodesicRecord,
                       s_max=None, n_samples=160, rtol=1e-10) -> FullSystemReport:
    """Matrix Jacobi system in a parallel screen frame along the geodesic.

    Returns the zeros of det M(s) with kernel ranks, and the operator's
    deviation from a multiple of the identity.
    """
    s_max = record.s_max if s_max is None else float(s_max)
    n = space.n
    dim = n  # chart dimension
    m = n - 2

    coords0 = record.chart_point(0.0)
    vel0 = record.chart_velocity(0.0)
    g0 = space.chart.metric_matrix(coords0)
    # initial screen: fibre directions orthogonal to the fibre leg of γ'
    gf = space.fibre.metric_matrix(coords0[1:])
    u = record.u
    seeds = []
    for i in range(space.fibre.dim):
        e = np.zeros(space.fibre.dim)
        e[i] = 1.0
        e = e - (e @ gf @ u) * u
        seeds.append(e)
    leaf_frame = geometry.gram_schmidt(gf, seeds)
    if leaf_frame.shape[0] != m:
        raise ChartDomainError("screen frame construction failed at the start")
    frame0 = np.zeros((m, dim))
    f0 = space.warping.f(record.alpha(0.0))
    for i in range(m):
        frame0[i, 1:] = leaf_frame[i] / f0  # g-unit screen vectors

    def amatrix(s, frame):
        coords = record.chart_point(s)
        vel = record.chart_velocity(s)
        riem = space.chart.curvature(coords)
        g = space.chart.metric_matrix(coords)
        rvv = np.einsum("lijk,ai,j,k->al", riem, frame, vel, vel)
        return np.einsum("al,bl->ab", rvv @ g, frame)

    def rhs(s, y):
        coords = record.chart_point(s)
        vel = record.chart_velocity(s)
        gamma = space.chart.christoffel(coords)
        frame = y[:m * dim].reshape(m, dim)
        jm = y[m * dim: m * dim + m * m].reshape(m, m)
        jp = y[m * dim + m * m:].reshape(m, m)
        dframe = -np.einsum("lik,i,ak->al", gamma, vel, frame)
        amat = amatrix(s, frame)
        djp = -jm @ amat
        return np.concatenate([dframe.ravel(), jp.ravel(), djp.ravel()])

    y0 = np.concatenate([frame0.ravel(), np.zeros(m * m), np.eye(m).ravel()])
    sol = solve_ivp(rhs, (0.0, s_max), y0, method="DOP853", dense_output=True,
                    rtol=rtol, atol=1e-12)
    if not sol.success:
        raise ChartDomainError(f"full Jacobi integration failed: {sol.message}")

    def matrix_at(s):
        return sol.sol(s)[m * dim: m * dim + m * m].reshape(m, m)

    def frame_at(s):
        return sol.sol(s)[:m * dim].reshape(m, dim)

    # operator isotropy along the run
    samples = np.linspace(s_max * 1e-3, s_max, n_samples)
    worst = 0.0
    for s in samples:
        amat = amatrix(s, frame_at(s))
        dev = amat - (np.trace(amat) / m) * np.eye(m)
        worst = max(worst, float(np.max(np.abs(dev))))

    # zeros of M(s): the determinant only touches zero when several columns
    # degenerate together, so track the smallest singular value instead
    from scipy.optimize import minimize_scalar

    def smallest_sv(s):
        return float(np.linalg.svd(matrix_at(s), compute_uv=False)[-1])

    svals = np.array([smallest_sv(s) for s in samples])
    scale = max(float(np.linalg.svd(matrix_at(samples[-1]),
                                    compute_uv=False)[0]), 1.0)
    zeros = []
    for i in range(1, len(samples) - 1):
        if not (svals[i] <= svals[i - 1] and svals[i] <= svals[i + 1]):
            continue
        if svals[i] > 0.1 * svals.max():
            continue
        res = minimize_scalar(smallest_sv, bounds=(samples[i - 1], samples[i + 1]),
                              method="bounded",
                              options={"xatol": ZERO_REFINE_TOL})
        if res.fun < KERNEL_SV_CUT * scale:
            sv = np.linalg.svd(matrix_at(res.x), compute_uv=False)
            rank = int(np.sum(sv < KERNEL_SV_CUT * scale))
            zeros.append((float(res.x), rank))
    return FullSystemReport(zeros, worst, s_max,
                            {"matrix": matrix_at, "frame": frame_at,
                             "samples": samples, "smallest_sv": svals})


def umbilic_consistency(space: GrwSpace, surface, record: NullGeodesicRecord,
                        s_values) -> float:
    """Residual of (ξ(ρ) − ρ²) − Ric(γ', γ')/(n−2) along a generator.

    On a totally umbilic cone both express the null sectional curvature of
    planes containing the generator (the geodesic is an integral curve of
    ±ξ under the shared ζ-normalization).
    """
    worst = 0.0
    for s in np.atleast_1d(np.asarray(s_values, dtype=float)):
        x = record.point(s).x
        value_rho = nullhyp.null_sectional_from_rho(surface, x.coords)
        value_ric = ricci_along(space, record, s) / (space.n - 2)
        worst = max(worst, abs(value_rho - value_ric))
    return float(worst)
