"""Chart-level numerical differential geometry.

Everything here works on plain coordinate callables, so the same helpers
serve the Riemannian fibre kernel and the Lorentzian spacetime charts.
Curvature follows the convention R(X,Y)Z = ∇_X∇_Y Z − ∇_Y∇_X Z − ∇_[X,Y] Z,
under which the unit round sphere has sectional curvature +1. Components are
stored as R[l, i, j, k] with R(∂_i, ∂_j)∂_k = R^l_{ijk} ∂_l.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ChartDomainError, DegeneratePlaneError

FD_STEP = 1e-5
ODE_RTOL = 1e-11
ODE_ATOL = 1e-12


def fd_metric_derivs(metric_fn, coords, step=FD_STEP):
    """dg[k][i][j] = ∂_k g_ij by central differences of the metric matrix."""
    coords = np.asarray(coords, dtype=float)
    m = coords.size
    dg = np.empty((m, m, m))
    for k in range(m):
        h = step * (1.0 + abs(coords[k]))
        up, dn = coords.copy(), coords.copy()
        up[k] += h
        dn[k] -= h
        dg[k] = (metric_fn(up) - metric_fn(dn)) / (2 * h)
    return dg


def christoffel_from_metric(g, dg):
    """Γ^k_ij from the metric matrix and its coordinate derivatives.

    ``dg[k, i, j]`` holds ∂_k g_ij.
    """
    g_inv = np.linalg.inv(g)
    sym = (np.einsum("ijl->ijl", dg) + np.einsum("jil->ijl", dg)
           - np.einsum("lij->ijl", dg))
    return 0.5 * np.einsum("kl,ijl->kij", g_inv, sym)


def fd_christoffel(metric_fn, coords, step=FD_STEP):
    """Connection coefficients by finite differences of metric components."""
    g = metric_fn(np.asarray(coords, dtype=float))
    dg = fd_metric_derivs(metric_fn, coords, step=step)
    return christoffel_from_metric(g, dg)


def curvature_tensor(chris_fn, coords, step=FD_STEP):
    """R[l,i,j,k] by central differences of the connection coefficients."""
    coords = np.asarray(coords, dtype=float)
    m = coords.size
    gamma = chris_fn(coords)
    dgamma = np.empty((m, m, m, m))  # dgamma[i] = ∂_i Γ
    for i in range(m):
        h = step * (1.0 + abs(coords[i]))
        up, dn = coords.copy(), coords.copy()
        up[i] += h
        dn[i] -= h
        dgamma[i] = (chris_fn(up) - chris_fn(dn)) / (2 * h)
    # dgamma[i, l, j, k] holds ∂_i Γ^l_{jk}
    riem = np.einsum("iljk->lijk", dgamma) - np.einsum("jlik->lijk", dgamma)
    riem += np.einsum("lim,mjk->lijk", gamma, gamma)
    riem -= np.einsum("ljm,mik->lijk", gamma, gamma)
    return riem


def apply_curvature(riem, u, v, w):
    """Components of R(u, v) w."""
    return np.einsum("lijk,i,j,k->l", riem, u, v, w)


def sectional_curvature(g, riem, u, v, tol=1e-12):
    """K(span(u,v)) = g(R(u,v)v, u) / (|u|²|v|² − g(u,v)²)."""
    gu = g @ u
    gv = g @ v
    gram = (u @ gu) * (v @ gv) - (u @ gv) ** 2
    if gram <= tol * max(1.0, float(u @ gu) * float(v @ gv)):
        raise DegeneratePlaneError("plane spanning vectors are nearly dependent")
    num = apply_curvature(riem, u, v, v) @ gu
    return float(num / gram)


class CurveRecord:
    """Dense curve s ↦ (position, velocity) in one chart."""

    def __init__(self, point_fn, velocity_fn, s_max, s_min=0.0):
        self._point = point_fn
        self._velocity = velocity_fn
        self.s_min = float(s_min)
        self.s_max = float(s_max)

    def point(self, s):
        self._check(s)
        return np.asarray(self._point(float(s)), dtype=float)

    def velocity(self, s):
        self._check(s)
        return np.asarray(self._velocity(float(s)), dtype=float)

    def _check(self, s):
        if s < self.s_min - 1e-12 or s > self.s_max + 1e-12:
            raise ChartDomainError(
                f"curve parameter {s} outside [{self.s_min}, {self.s_max}]",
                exit_parameter=self.s_max)


def integrate_geodesic(geom, x0, v0, s_max, rtol=ODE_RTOL, atol=ODE_ATOL):
    """Integrate the geodesic equation in a chart; stops at the chart boundary.

    ``geom`` needs ``dim``, ``christoffel(coords)`` and ``box_margin(coords)``
    (positive inside the declared validity box).
    """
    m = geom.dim
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)

    def rhs(_s, y):
        x, v = y[:m], y[m:]
        gamma = geom.christoffel(x)
        acc = -np.einsum("kij,i,j->k", gamma, v, v)
        return np.concatenate([v, acc])

    def exit_event(_s, y):
        return geom.box_margin(y[:m])

    exit_event.terminal = True
    exit_event.direction = -1

    sol = solve_ivp(rhs, (0.0, float(s_max)), np.concatenate([x0, v0]),
                    method="DOP853", dense_output=True, rtol=rtol, atol=atol,
                    events=exit_event)
    if not sol.success:
        raise ChartDomainError(f"geodesic integration failed: {sol.message}")
    reached = sol.t[-1]
    if sol.status == 1 and reached < s_max * (1 - 1e-12):
        raise ChartDomainError(
            f"geodesic left the chart at parameter {reached:.6g} "
            f"(requested {s_max:.6g})", exit_parameter=reached)
    return CurveRecord(lambda s: sol.sol(s)[:m], lambda s: sol.sol(s)[m:], s_max)


def parallel_frame(geom, curve, vectors, s_samples):
    """Parallel-transport ``vectors`` (rows) along a curve record.

    Returns an array of shape (len(s_samples), len(vectors), dim) and the
    dense transporter callable.
    """
    m = geom.dim
    vectors = np.asarray(vectors, dtype=float)
    k = vectors.shape[0]

    def rhs(s, y):
        x = curve.point(s)
        v = curve.velocity(s)
        gamma = geom.christoffel(x)
        e = y.reshape(k, m)
        de = -np.einsum("lij,i,aj->al", gamma, v, e)
        return de.ravel()

    s_samples = np.asarray(s_samples, dtype=float)
    sol = solve_ivp(rhs, (s_samples[0], s_samples[-1]), vectors.ravel(),
                    method="DOP853", dense_output=True,
                    rtol=ODE_RTOL, atol=ODE_ATOL)
    if not sol.success:
        raise ChartDomainError(f"frame transport failed: {sol.message}")
    frames = np.array([sol.sol(s).reshape(k, m) for s in s_samples])
    return frames, lambda s: sol.sol(s).reshape(k, m)


def gram_schmidt(metric, vectors, tol=1e-12):
    """Orthonormalize rows against a positive-definite metric matrix."""
    out = []
    for vec in np.asarray(vectors, dtype=float):
        w = vec.copy()
        for b in out:
            w = w - (b @ metric @ w) * b
        norm2 = w @ metric @ w
        if norm2 > tol:
            out.append(w / np.sqrt(norm2))
    return np.array(out)
