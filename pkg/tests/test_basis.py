import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from hdgmhd.basis import (EdgeBasis, TriangleBasis, dim_p, edge_quadrature, monomial_exponents,
                          triangle_quadrature)


@pytest.mark.parametrize("k", range(0, 5))
def test_dim(k):
    assert dim_p(k) == len(monomial_exponents(k)) == (k + 1) * (k + 2) // 2


def _sympy_monomial(a, b):
    x, y = sp.symbols("x y")
    return float(sp.integrate(sp.integrate(x ** a * y ** b, (y, 0, 1 - x)), (x, 0, 1)))


@pytest.mark.parametrize("deg", [0, 1, 2, 5, 8, 12])
def test_triangle_quadrature_exact_against_sympy(deg):
    q = triangle_quadrature(deg)
    for a in range(deg + 1):
        for b in range(deg + 1 - a):
            val = np.sum(q.weights * q.points[:, 0] ** a * q.points[:, 1] ** b)
            assert val == pytest.approx(_sympy_monomial(a, b), rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("deg", [0, 3, 7, 20])
def test_edge_quadrature_exact(deg):
    q = edge_quadrature(deg)
    for a in range(deg + 1):
        assert np.sum(q.weights * q.points ** a) == pytest.approx(1.0 / (a + 1), rel=1e-13)


@pytest.mark.parametrize("k", [0, 1, 2, 3, 4])
def test_triangle_basis_orthonormal(k):
    basis = TriangleBasis(k)
    q = triangle_quadrature(2 * k)
    phi = basis.eval(q.points)
    gram = np.einsum("q,qi,qj->ij", q.weights, phi, phi)
    assert np.allclose(gram, np.eye(basis.n), atol=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_hierarchical_prefix_spans_lower_degree(k):
    basis = TriangleBasis(k)
    q = triangle_quadrature(2 * k)
    phi = basis.eval(q.points)
    n1 = dim_p(k - 1)
    for a, b in monomial_exponents(k - 1):
        f = q.points[:, 0] ** a * q.points[:, 1] ** b
        c = np.einsum("q,qi,q->i", q.weights, phi, f)
        assert np.allclose(c[n1:], 0.0, atol=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_monomials_reproduced(k):
    basis = TriangleBasis(k)
    q = triangle_quadrature(2 * k)
    phi = basis.eval(q.points)
    pts = np.array([[0.1, 0.7], [0.33, 0.33], [0.9, 0.05]])
    ph = basis.eval(pts)
    for a, b in monomial_exponents(k):
        c = np.einsum("q,qi,q->i", q.weights, phi, q.points[:, 0] ** a * q.points[:, 1] ** b)
        assert np.allclose(ph @ c, pts[:, 0] ** a * pts[:, 1] ** b, atol=1e-12)


@given(st.floats(0.05, 0.9), st.floats(0.05, 0.9))
def test_gradient_matches_finite_differences(x, y):
    basis = TriangleBasis(3)
    p = np.array([x, y * (1 - x)])
    g = basis.eval_grad(p)
    h = 1e-6
    fd = np.stack([(basis.eval(p + [h, 0]) - basis.eval(p - [h, 0])) / (2 * h),
                   (basis.eval(p + [0, h]) - basis.eval(p - [0, h])) / (2 * h)], axis=-1)
    assert np.allclose(g, fd, atol=1e-6)


@pytest.mark.parametrize("k", [0, 1, 3])
def test_edge_basis_orthonormal(k):
    e = EdgeBasis(k)
    q = edge_quadrature(2 * k)
    psi = e.eval(q.points)
    assert np.allclose(np.einsum("q,qi,qj->ij", q.weights, psi, psi), np.eye(k + 1), atol=1e-13)


def test_reference_area():
    assert math.isclose(triangle_quadrature(0).weights.sum(), 0.5)
