"""Scalar fields on chart coordinates, with derivatives.

Expression-backed fields differentiate analytically; callable-backed fields
use central finite differences (relative step 1e-5 for first derivatives,
1e-4 for second ones). A callable field may optionally carry an analytic
gradient hook, in which case second derivatives are first differences of
that gradient.
"""

from __future__ import annotations

import numpy as np

from . import expressions as ex

FD_STEP_1 = 1e-5
FD_STEP_2 = 1e-4


def _step(x, rel):
    return rel * (1.0 + abs(float(x)))


class ScalarField:
    """Scalar function of one or several chart coordinates."""

    def __init__(self, fn, nvars, grad_fn=None, label=""):
        self._fn = fn
        self.nvars = int(nvars)
        self._grad_fn = grad_fn
        self.label = label or getattr(fn, "__name__", "field")

    # -- constructors -------------------------------------------------

    @classmethod
    def from_expression(cls, expr, var_names, params=None):
        """Field backed by an AST (or source text); analytic derivatives."""
        if isinstance(expr, str):
            expr = ex.parse(expr)
        if params:
            expr = ex.bind(expr, params)
        var_names = list(var_names)
        field = cls(None, len(var_names), label=ex.to_text(expr))
        field.expr = expr
        field.var_names = var_names
        field._partials = {}
        return field

    @classmethod
    def from_callable(cls, fn, nvars, grad_fn=None, label=""):
        return cls(fn, nvars, grad_fn=grad_fn, label=label)

    # -- evaluation ---------------------------------------------------

    @property
    def is_expression(self):
        return getattr(self, "expr", None) is not None

    def _env(self, coords):
        return {name: coords[i] for i, name in enumerate(self.var_names)}

    def __call__(self, coords):
        coords = np.atleast_1d(np.asarray(coords, dtype=float))
        if self.is_expression:
            return float(ex.evaluate(self.expr, self._env(coords)))
        return float(self._fn(coords))

    def _partial_expr(self, index):
        key = (index,)
        if key not in self._partials:
            self._partials[key] = ex.derivative(self.expr, self.var_names[index])
        return self._partials[key]

    def partial(self, coords, index):
        coords = np.atleast_1d(np.asarray(coords, dtype=float))
        if self.is_expression:
            return float(ex.evaluate(self._partial_expr(index), self._env(coords)))
        if self._grad_fn is not None:
            return float(np.asarray(self._grad_fn(coords))[index])
        h = _step(coords[index], FD_STEP_1)
        up = coords.copy()
        dn = coords.copy()
        up[index] += h
        dn[index] -= h
        return (float(self._fn(up)) - float(self._fn(dn))) / (2 * h)

    def gradient(self, coords):
        coords = np.atleast_1d(np.asarray(coords, dtype=float))
        if not self.is_expression and self._grad_fn is not None:
            return np.asarray(self._grad_fn(coords), dtype=float)
        return np.array([self.partial(coords, i) for i in range(self.nvars)])

    def second(self, coords, i, j):
        coords = np.atleast_1d(np.asarray(coords, dtype=float))
        if self.is_expression:
            key = (i, j) if i <= j else (j, i)
            if key not in self._partials:
                first = self._partial_expr(key[0])
                self._partials[key] = ex.derivative(first, self.var_names[key[1]])
            return float(ex.evaluate(self._partials[key], self._env(coords)))
        if self._grad_fn is not None:
            # first difference of the analytic gradient, symmetrized
            h = _step(coords[j], FD_STEP_1)
            up, dn = coords.copy(), coords.copy()
            up[j] += h
            dn[j] -= h
            dij = (self._grad_fn(up)[i] - self._grad_fn(dn)[i]) / (2 * h)
            h = _step(coords[i], FD_STEP_1)
            up, dn = coords.copy(), coords.copy()
            up[i] += h
            dn[i] -= h
            dji = (self._grad_fn(up)[j] - self._grad_fn(dn)[j]) / (2 * h)
            return 0.5 * (dij + dji)
        if i == j:
            h = _step(coords[i], FD_STEP_2)
            up, dn = coords.copy(), coords.copy()
            up[i] += h
            dn[i] -= h
            return (float(self._fn(up)) - 2 * float(self._fn(coords))
                    + float(self._fn(dn))) / h**2
        hi = _step(coords[i], FD_STEP_2)
        hj = _step(coords[j], FD_STEP_2)
        pp, pm, mp, mm = (coords.copy() for _ in range(4))
        pp[i] += hi
        pp[j] += hj
        pm[i] += hi
        pm[j] -= hj
        mp[i] -= hi
        mp[j] += hj
        mm[i] -= hi
        mm[j] -= hj
        return (float(self._fn(pp)) - float(self._fn(pm))
                - float(self._fn(mp)) + float(self._fn(mm))) / (4 * hi * hj)

    def hessian_matrix(self, coords):
        n = self.nvars
        out = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                out[i, j] = out[j, i] = self.second(coords, i, j)
        return out


class Profile1D:
    """Convenience wrapper for one-variable fields: value + three derivatives."""

    def __init__(self, field: ScalarField, var="t"):
        if isinstance(field, str):
            field = ScalarField.from_expression(field, [var])
        self.field = field
        self.var = var

    def __call__(self, t):
        return self.field(np.array([t]))

    def d1(self, t):
        return self.field.partial(np.array([t]), 0)

    def d2(self, t):
        return self.field.second(np.array([t]), 0, 0)

    def d3(self, t):
        if self.field.is_expression:
            expr = ex.derivative(self.field.expr, self.var, order=3)
            return float(ex.evaluate(expr, {self.var: t}))
        h = _step(t, FD_STEP_2)
        return (self.d2(t + h) - self.d2(t - h)) / (2 * h)
