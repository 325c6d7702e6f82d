"""Numerical building blocks for the backward recursions.

All recursions have the form ``f -> (1/m) log E exp(m f(x + sigma Z))`` (or
``E f(x + sigma Z)`` when ``m = 0``) with ``Z`` standard Gaussian.  Functions
are held as *levels*: the exact boundary ``|x|``, the exact one-step image of
``|x|``, or values on a uniform grid with cubic interpolation.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import log_ndtr, logsumexp, ndtr

SMALL_M = 1e-4
SQRT_2PI = np.sqrt(2.0 * np.pi)


@lru_cache(maxsize=None)
def gauss_hermite(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights with ``sum w f(z) ~ E f(Z)`` for standard Gaussian Z."""
    z, w = hermegauss(order)
    w = w / SQRT_2PI
    z.setflags(write=False)
    w.setflags(write=False)
    return z, w


# ---------------------------------------------------------------------------
# uniform-grid cubic interpolation with linear tails
# ---------------------------------------------------------------------------


def _lagrange_weights(t):
    return ((-t * (t - 1.0) * (t - 2.0) / 6.0),
            ((t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0),
            (-(t + 1.0) * t * (t - 2.0) / 2.0),
            ((t + 1.0) * t * (t - 1.0) / 6.0))


def interp_cubic(values: np.ndarray, x0: float, h: float, xq, axis: int = -1):
    """Four-point Lagrange interpolation on the uniform grid ``x0 + h*j``.

    Beyond the grid the function is continued linearly with the one-sided
    second-order edge slope.  ``values`` is 1-D; ``xq`` any shape.
    """
    v = np.asarray(values)
    n = v.shape[0]
    xq = np.asarray(xq, dtype=float)
    u = (xq - x0) / h
    uc = np.clip(u, 0.0, n - 1.0)
    i = np.clip(np.floor(uc).astype(np.int64), 1, n - 3)
    t = uc - i
    w0, w1, w2, w3 = _lagrange_weights(t)
    out = w0 * v[i - 1] + w1 * v[i] + w2 * v[i + 1] + w3 * v[i + 2]
    lo_slope = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
    hi_slope = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    out = np.where(u < 0, v[0] + lo_slope * (u * h), out)
    out = np.where(u > n - 1, v[-1] + hi_slope * ((u - (n - 1)) * h), out)
    return out


def interp_cubic_rows(values: np.ndarray, x0: float, h: float, xq: np.ndarray) -> np.ndarray:
    """Row-wise version: ``values`` (R, n), ``xq`` (R, ...); interpolates each row on its own grid."""
    R, n = values.shape
    u = (xq - x0) / h
    uc = np.clip(u, 0.0, n - 1.0)
    i = np.clip(np.floor(uc).astype(np.int64), 1, n - 3)
    t = uc - i
    w0, w1, w2, w3 = _lagrange_weights(t)
    rows = np.arange(R).reshape((R,) + (1,) * (xq.ndim - 1))
    out = (w0 * values[rows, i - 1] + w1 * values[rows, i]
           + w2 * values[rows, i + 1] + w3 * values[rows, i + 2])
    lo_slope = ((-3.0 * values[:, 0] + 4.0 * values[:, 1] - values[:, 2]) / (2.0 * h)).reshape(rows.shape)
    hi_slope = ((3.0 * values[:, -1] - 4.0 * values[:, -2] + values[:, -3]) / (2.0 * h)).reshape(rows.shape)
    out = np.where(u < 0, values[rows, 0] + lo_slope * (u * h), out)
    out = np.where(u > n - 1, values[rows, -1] + hi_slope * ((u - (n - 1)) * h), out)
    return out


# ---------------------------------------------------------------------------
# levels
# ---------------------------------------------------------------------------


class AbsLevel:
    """The boundary function ``|x|``."""

    smooth_var = 0.0

    def value(self, x):
        return np.abs(x)

    def deriv(self, x):
        return np.sign(x)


@dataclass(frozen=True)
class SmoothedAbsLevel:
    """Exact image of ``|x|`` under one recursion step with exponent ``m`` and variance ``var``."""

    m: float
    var: float

    @property
    def smooth_var(self) -> float:
        return self.var

    def _logs(self, x):
        s = np.sqrt(self.var)
        m = self.m
        la = m * x + log_ndtr(x / s + m * s)
        lb = -m * x + log_ndtr(-x / s + m * s)
        return la, lb

    def value(self, x):
        x = np.asarray(x, dtype=float)
        s = np.sqrt(self.var)
        if self.var == 0.0:
            return np.abs(x)
        mean = x * (2.0 * ndtr(x / s) - 1.0) + 2.0 * s * np.exp(-0.5 * (x / s) ** 2) / SQRT_2PI
        if self.m < SMALL_M:
            return mean + 0.5 * self.m * (x * x + self.var - mean * mean)
        la, lb = self._logs(x)
        return (0.5 * self.m ** 2 * self.var + np.logaddexp(la, lb)) / self.m

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        if self.var == 0.0:
            return np.sign(x)
        la, lb = self._logs(x)
        return np.tanh(0.5 * (la - lb))


@dataclass(frozen=True)
class GridLevel:
    x0: float
    h: float
    values: np.ndarray
    smooth_var: float

    @property
    def grad(self) -> np.ndarray:
        g = self.__dict__.get("_grad")
        if g is None:
            g = np.gradient(self.values, self.h, edge_order=2)
            object.__setattr__(self, "_grad", g)
        return g

    def value(self, x):
        return interp_cubic(self.values, self.x0, self.h, x)

    def deriv(self, x):
        return interp_cubic(self.grad, self.x0, self.h, x)


def log_moment(F: np.ndarray, w: np.ndarray, m: float, shift: np.ndarray | None = None,
               base: np.ndarray | None = None, axis: int = -1) -> np.ndarray:
    """``(1/m) log sum_j w_j exp(m F_j - shift_j)``, or ``sum_j w_j F_j`` at ``m = 0``.

    ``shift`` carries the Cameron-Martin correction of a tilted rule and
    ``base`` is a per-row constant subtracted before exponentiation.
    For tiny ``m`` the second-order cumulant expansion is used instead.
    """
    if m < SMALL_M:
        mean = np.sum(w * F, axis=axis)
        if m == 0.0:
            return mean
        second = np.sum(w * F * F, axis=axis)
        return mean + 0.5 * m * (second - mean * mean)
    if base is None:
        base = np.zeros(F.shape[:-1])
    expo = m * (F - np.expand_dims(base, axis)) + np.log(w)
    if shift is not None:
        expo = expo - shift
    return base + logsumexp(expo, axis=axis) / m


def recursion_step(level, m: float, var: float, x: np.ndarray, order: int) -> np.ndarray:
    """Values at points ``x`` of the image of ``level`` under one recursion step.

    For ``m > 0`` the Gauss-Hermite rule is shifted by ``a = m sigma f'(x)`` so the
    integrand is centred on the tilted Gaussian, and reweighted exactly.
    """
    if var <= 0.0:
        return np.asarray(level.value(x), dtype=float)
    if isinstance(level, AbsLevel):
        return SmoothedAbsLevel(m, var).value(x)
    z, w = gauss_hermite(order)
    s = np.sqrt(var)
    x = np.asarray(x, dtype=float)
    if m < SMALL_M:
        F = level.value(x[..., None] + s * z)
        return log_moment(F, w, m)
    a = m * s * np.asarray(level.deriv(x), dtype=float)
    za = z + a[..., None]
    F = level.value(x[..., None] + s * za)
    shift = a[..., None] * za - 0.5 * a[..., None] ** 2
    return log_moment(F, w, m, shift=shift, base=np.asarray(level.value(x), dtype=float))
