"""Scalar fields with analytic gradients and Hessians.

The benchmark solutions and their source terms are assembled from a few
closed-form building blocks combined through exact sum/product rules, so
every derivative the error norms need (through second order) is analytic.
"""

from __future__ import annotations

import numpy as np

_EYE = np.eye(3)


class Field:
    """A scalar field bundling value, gradient, and Hessian callables."""

    def __init__(self, value, grad, hess):
        self._value = value
        self._grad = grad
        self._hess = hess

    def __call__(self, points):
        return self._value(np.atleast_2d(np.asarray(points, dtype=float)))

    def gradient(self, points):
        return self._grad(np.atleast_2d(np.asarray(points, dtype=float)))

    def hessian(self, points):
        return self._hess(np.atleast_2d(np.asarray(points, dtype=float)))

    def laplacian(self, points):
        return np.trace(self.hessian(points), axis1=-2, axis2=-1)

    def __add__(self, other):
        if np.isscalar(other):
            return Field(
                lambda p: self(p) + other, self._grad, self._hess
            )
        return Field(
            lambda p: self(p) + other(p),
            lambda p: self.gradient(p) + other.gradient(p),
            lambda p: self.hessian(p) + other.hessian(p),
        )

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * other if isinstance(other, Field) else self + (-other)

    def __mul__(self, other):
        if np.isscalar(other):
            return Field(
                lambda p: self(p) * other,
                lambda p: self.gradient(p) * other,
                lambda p: self.hessian(p) * other,
            )

        def value(p):
            return self(p) * other(p)

        def grad(p):
            return (
                self(p)[:, None] * other.gradient(p)
                + other(p)[:, None] * self.gradient(p)
            )

        def hess(p):
            f, g = self(p), other(p)
            df, dg = self.gradient(p), other.gradient(p)
            cross = df[:, :, None] * dg[:, None, :]
            return (
                f[:, None, None] * other.hessian(p)
                + g[:, None, None] * self.hessian(p)
                + cross
                + np.swapaxes(cross, 1, 2)
            )

        return Field(value, grad, hess)

    __rmul__ = __mul__


def constant(c):
    c = float(c)
    return Field(
        lambda p: np.full(len(p), c),
        lambda p: np.zeros((len(p), 3)),
        lambda p: np.zeros((len(p), 3, 3)),
    )


def affine(coeffs, offset=0.0):
    """coeffs . X + offset"""
    a = np.asarray(coeffs, dtype=float)
    return Field(
        lambda p: p @ a + offset,
        lambda p: np.broadcast_to(a, (len(p), 3)).copy(),
        lambda p: np.zeros((len(p), 3, 3)),
    )


def radial_power(p_exp, center=(0.0, 0.0, 0.0)):
    """|X - center|^p with derivatives guarded at the center."""
    c = np.asarray(center, dtype=float)
    p_exp = float(p_exp)

    def value(p):
        return np.linalg.norm(p - c, axis=-1) ** p_exp

    def grad(p):
        d = p - c
        r = np.linalg.norm(d, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        return p_exp * safe[:, None] ** (p_exp - 2) * d * (r > 0)[:, None]

    def hess(p):
        d = p - c
        r = np.linalg.norm(d, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        outer = d[:, :, None] * d[:, None, :]
        out = p_exp * (p_exp - 2) * safe[:, None, None] ** (p_exp - 4) * outer
        out += p_exp * safe[:, None, None] ** (p_exp - 2) * _EYE
        return out * (r > 0)[:, None, None]

    return Field(value, grad, hess)


def sphere_quadric(center, radius):
    """|X - center|^2 - radius^2"""
    c = np.asarray(center, dtype=float)
    rsq = float(radius) ** 2
    return Field(
        lambda p: ((p - c) ** 2).sum(-1) - rsq,
        lambda p: 2.0 * (p - c),
        lambda p: np.broadcast_to(2.0 * _EYE, (len(p), 3, 3)).copy(),
    )


def torus_quartic(R, r, axis):
    """(|X|^2 + R^2 - r^2)^2 - 4 R^2 q, with q = |X|^2 minus the axis coordinate squared.

    Zero on the torus of major radius R and minor radius r around the given
    coordinate axis.
    """
    R, r = float(R), float(r)
    c = R * R - r * r
    mask = np.ones(3)
    mask[axis] = 0.0
    M = np.diag(mask)

    def value(p):
        s = (p**2).sum(-1)
        q = (p**2 * mask).sum(-1)
        return (s + c) ** 2 - 4 * R * R * q

    def grad(p):
        s = (p**2).sum(-1)
        return 4.0 * (s + c)[:, None] * p - 8.0 * R * R * (p * mask)

    def hess(p):
        s = (p**2).sum(-1)
        out = 8.0 * p[:, :, None] * p[:, None, :]
        out += 4.0 * (s + c)[:, None, None] * _EYE
        out -= 8.0 * R * R * M
        return out

    return Field(value, grad, hess)


def finite_difference_laplacian(fn, points, step):
    """4th-order central Laplacian, for cross-checking coded sources."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    acc = np.zeros(len(points))
    for a in range(3):
        e = np.zeros(3)
        e[a] = step
        acc += (
            -fn(points + 2 * e)
            + 16 * fn(points + e)
            - 30 * fn(points)
            + 16 * fn(points - e)
            - fn(points - 2 * e)
        ) / (12 * step * step)
    return acc
