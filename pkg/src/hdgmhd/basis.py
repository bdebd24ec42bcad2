"""Orthonormal polynomial bases and Gauss quadrature on the reference triangle and segment."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import factorial

import mpmath
import numpy as np
from scipy.special import eval_legendre, roots_jacobi, roots_legendre

MAX_QUAD_DEGREE = 30


def dim_p(k: int) -> int:
    """Dimension of P_k on a triangle (0 for k < 0)."""
    return (k + 1) * (k + 2) // 2 if k >= 0 else 0


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # (nq, dim) reference coordinates
    weights: np.ndarray  # (nq,)
    degree: int


@lru_cache(maxsize=None)
def triangle_quadrature(degree: int) -> QuadratureRule:
    """Collapsed Gauss-Jacobi x Gauss-Legendre rule on (0,0), (1,0), (0,1), exact to ``degree``."""
    if not 0 <= degree <= MAX_QUAD_DEGREE:
        raise ValueError(f"quadrature degree {degree} outside 0..{MAX_QUAD_DEGREE}")
    n = degree // 2 + 1
    gs, gw = roots_legendre(n)
    js, jw = roots_jacobi(n, 1.0, 0.0)
    s = 0.5 * (gs + 1.0)
    t = 0.5 * (js + 1.0)
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(0.5 * gw, 0.25 * jw)
    pts = np.column_stack([(S * (1.0 - T)).ravel(), T.ravel()])
    return QuadratureRule(pts, W.ravel(), degree)


@lru_cache(maxsize=None)
def edge_quadrature(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1]."""
    if not 0 <= degree <= MAX_QUAD_DEGREE:
        raise ValueError(f"quadrature degree {degree} outside 0..{MAX_QUAD_DEGREE}")
    x, w = roots_legendre(degree // 2 + 1)
    return QuadratureRule(0.5 * (x + 1.0), 0.5 * w, degree)


def monomial_exponents(k: int) -> list[tuple[int, int]]:
    """Exponents (a, b) of x^a y^b ordered by total degree, then by decreasing a."""
    return [(n - j, j) for n in range(k + 1) for j in range(n + 1)]


@lru_cache(maxsize=None)
def _orthonormal_coefficients(k: int) -> np.ndarray:
    # Exact monomial Gram matrix on the reference triangle, integral x^a y^b = a! b! / (a+b+2)!,
    # orthonormalized with a 40-digit Cholesky so the float coefficients are correctly rounded.
    exps = monomial_exponents(k)
    n = len(exps)
    gram = mpmath.matrix(n, n)
    with mpmath.workdps(40):
        for i, (a1, b1) in enumerate(exps):
            for j, (a2, b2) in enumerate(exps):
                a, b = a1 + a2, b1 + b2
                fr = Fraction(factorial(a) * factorial(b), factorial(a + b + 2))
                gram[i, j] = mpmath.mpf(fr.numerator) / fr.denominator
        chol = mpmath.cholesky(gram)
        coef = mpmath.inverse(chol)          # rows: basis functions in monomial coordinates
        return np.array([[float(coef[i, j]) for j in range(n)] for i in range(n)])


class TriangleBasis:
    """L2-orthonormal, degree-hierarchical basis of P_k on the reference triangle.

    The first ``dim_p(m)`` functions span P_m for every m <= k, so lower
    degree subspaces are prefixes of the basis.
    """

    def __init__(self, k: int):
        if k < 0:
            raise ValueError("order must be >= 0")
        self.k = k
        self.n = dim_p(k)
        self.exponents = np.array(monomial_exponents(k))
        self.coef = _orthonormal_coefficients(k)

    def _powers(self, x, d=0):
        # x^{a-d} a!/(a-d)! with zero for a < d
        xs = np.asarray(x, dtype=float)[..., None]
        out = np.ones(xs.shape[:-1] + (self.k + 1,))
        for p in range(1, self.k + 1):
            out[..., p] = out[..., p - 1] * xs[..., 0]
        if d == 0:
            return out
        dv = np.zeros_like(out)
        dv[..., 1:] = out[..., :-1] * np.arange(1, self.k + 1)
        return dv

    def eval(self, pts) -> np.ndarray:
        """Values at ``pts (..., 2)``: shape (..., n)."""
        pts = np.asarray(pts, dtype=float)
        px = self._powers(pts[..., 0])
        py = self._powers(pts[..., 1])
        mono = px[..., self.exponents[:, 0]] * py[..., self.exponents[:, 1]]
        return mono @ self.coef.T

    def eval_grad(self, pts) -> np.ndarray:
        """Reference gradients at ``pts (..., 2)``: shape (..., n, 2)."""
        pts = np.asarray(pts, dtype=float)
        px, py = self._powers(pts[..., 0]), self._powers(pts[..., 1])
        dx, dy = self._powers(pts[..., 0], 1), self._powers(pts[..., 1], 1)
        a, b = self.exponents[:, 0], self.exponents[:, 1]
        gx = (dx[..., a] * py[..., b]) @ self.coef.T
        gy = (px[..., a] * dy[..., b]) @ self.coef.T
        return np.stack([gx, gy], axis=-1)


class EdgeBasis:
    """Orthonormal shifted Legendre polynomials sqrt(2i+1) P_i(2s-1) on [0, 1]."""

    def __init__(self, k: int):
        self.k = k
        self.n = k + 1

    def eval(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        i = np.arange(self.n)
        return np.sqrt(2 * i + 1) * eval_legendre(i, 2.0 * s[..., None] - 1.0)


def eval_basis(basis, points) -> np.ndarray:
    return basis.eval(points)


def eval_grad(basis, points) -> np.ndarray:
    return basis.eval_grad(points)
