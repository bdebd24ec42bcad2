import mpmath
import numpy as np
import pytest
import sympy as sp
from scipy import integrate

from hdgmhd.problems import (PROBLEMS, SINGULAR_LAMBDA, get_problem, hartmann_problem, strong_residuals,
                             zero_data)

X, Y = sp.symbols("x y", real=True)


def _curl(v):
    return sp.diff(v[1], X) - sp.diff(v[0], Y)


def sympy_forcing(u, b, p, r, w, d, Re, Rm, kappa):
    """Momentum and induction left-hand sides of the 2D linearized system, derived symbolically."""
    lap = [sp.diff(c, X, 2) + sp.diff(c, Y, 2) for c in u]
    cb = _curl(b)
    g = [-lap[i] / Re + sp.diff(p, (X, Y)[i]) + w[0] * sp.diff(u[i], X) + w[1] * sp.diff(u[i], Y)
         + kappa * cb * (d[1], -d[0])[i] for i in range(2)]
    s = u[0] * d[1] - u[1] * d[0]
    ccb = (sp.diff(cb, Y), -sp.diff(cb, X))
    cs = (sp.diff(s, Y), -sp.diff(s, X))
    f = [kappa / Rm * ccb[i] + sp.diff(r, (X, Y)[i]) - kappa * cs[i] for i in range(2)]
    return g, f


def _pts(domain, n=7, seed=0):
    rng = np.random.default_rng(seed)
    if domain == "hartmann":
        return np.stack([rng.uniform(0, 0.025, n), rng.uniform(-0.99, 0.99, n)], -1)
    pts = rng.uniform(-0.95, 0.95, (4 * n, 2))
    keep = ~((pts[:, 0] > 0) & (pts[:, 1] < 0)) & (np.hypot(*pts.T) > 0.1)
    return pts[keep][:n]


def _lshaped_sympy():
    A = Y * sp.cos(Y) + sp.sin(Y)
    u = [-A * sp.exp(X), Y * sp.sin(Y) * sp.exp(X)]
    p = 2 * sp.exp(X) * sp.sin(Y)
    r = -sp.sin(sp.pi * X) * sp.sin(sp.pi * Y)
    return u, u, p, r


def _compare_fields(pr, u, b, p_raw, r, pts):
    ex = pr.exact
    fu = sp.lambdify((X, Y), u, "numpy")
    fb = sp.lambdify((X, Y), b, "numpy")
    jac_u = sp.lambdify((X, Y), sp.Matrix(u).jacobian([X, Y]), "numpy")
    jac_b = sp.lambdify((X, Y), sp.Matrix(b).jacobian([X, Y]), "numpy")
    hess_u = [sp.lambdify((X, Y), sp.hessian(c, (X, Y)), "numpy") for c in u]
    fp = sp.lambdify((X, Y), p_raw, "numpy")
    fr = sp.lambdify((X, Y), r, "numpy")
    for x in pts:
        assert np.allclose(ex.u(x), np.ravel(fu(*x)), rtol=1e-12, atol=1e-12)
        assert np.allclose(ex.b(x), np.ravel(fb(*x)), rtol=1e-12, atol=1e-12)
        assert np.allclose(ex.grad_u(x), np.array(jac_u(*x), dtype=float), rtol=1e-11, atol=1e-11)
        assert np.allclose(ex.grad_b(x), np.array(jac_b(*x), dtype=float), rtol=1e-11, atol=1e-11)
        for i in range(2):
            assert np.allclose(ex.hess_u(x)[i], np.array(hess_u[i](*x), dtype=float), rtol=1e-10, atol=1e-10)
        assert np.isclose(ex.p_raw(x), float(fp(*x)), rtol=1e-12, atol=1e-12)
        assert np.isclose(ex.r(x), float(fr(*x)), rtol=1e-12, atol=1e-12)


def test_lshaped_fields_and_forcing_against_sympy():
    pr = get_problem("lshaped")
    u, b, p, r = _lshaped_sympy()
    pts = _pts("lshaped")
    _compare_fields(pr, u, b, p, r, pts)
    g, f = sympy_forcing(u, b, p, r, (2, 1), (X, -Y), 1, 1, 1)
    fg, ff = sp.lambdify((X, Y), g, "numpy"), sp.lambdify((X, Y), f, "numpy")
    for x in pts:
        assert np.allclose(pr.g(x), fg(*x), rtol=1e-10, atol=1e-10)
        assert np.allclose(pr.f(x), ff(*x), rtol=1e-10, atol=1e-10)


def _poly_sympy(c):
    return sum(float(c[a, b]) * X ** a * Y ** b for a in range(c.shape[0]) for b in range(c.shape[1]))


@pytest.mark.parametrize("k", [1, 2, 3])
def test_polynomial_problem_against_sympy(k):
    pr = get_problem(f"poly{k}")
    ex = pr.exact
    u = [_poly_sympy(c) for c in ex._uc]
    b = [_poly_sympy(c) for c in ex._bc]
    p, r = _poly_sympy(ex._pc), _poly_sympy(ex._rc)
    # degree k, divergence free
    for c in u + b:
        assert sp.Poly(c, X, Y).total_degree() <= k
    assert sp.simplify(sp.diff(u[0], X) + sp.diff(u[1], Y)) == 0
    assert sp.simplify(sp.diff(b[0], X) + sp.diff(b[1], Y)) == 0
    pts = _pts("lshaped", seed=k)
    _compare_fields(pr, u, b, p, r, pts)
    w = (1 + Y / 2, sp.Rational(1, 4) - X / 2)
    d = (1 + sp.Rational(3, 10) * X, -sp.Rational(1, 2) + sp.Rational(1, 5) * Y)
    g, f = sympy_forcing(u, b, p, r, w, d, sp.Rational(3, 2), 2, sp.Rational(7, 10))
    fg, ff = sp.lambdify((X, Y), g, "numpy"), sp.lambdify((X, Y), f, "numpy")
    for x in pts:
        assert np.allclose(pr.g(x), fg(*x), atol=1e-10)
        assert np.allclose(pr.f(x), ff(*x), atol=1e-10)


def _hartmann_sympy(Re, Rm, kappa, Ha):
    u1 = Re / (Ha * sp.tanh(Ha)) * (1 - sp.cosh(Ha * Y) / sp.cosh(Ha))
    b1 = (sp.sinh(Ha * Y) / sp.sinh(Ha) - Y) / kappa
    return [u1, sp.Integer(0)], [b1, sp.Integer(1)], -kappa * b1 ** 2 / 2


def test_hartmann_profile_solves_the_system_with_constant_forcing():
    Re = Rm = sp.Rational(707, 100)
    kappa = sp.Integer(200)
    Ha = sp.sqrt(kappa * Re * Rm)
    u, b, p = _hartmann_sympy(Re, Rm, kappa, Ha)
    g, f = sympy_forcing(u, b, p, sp.Integer(0), u, b, Re, Rm, kappa)
    for y in ("-0.9", "-0.3", "0", "0.45", "0.99"):
        with mpmath.workdps(50):
            vals = [sp.N(e.subs({X: 0, Y: sp.Rational(y)}), 40) for e in g + f]
        assert abs(vals[0] - 1) < 1e-25 and abs(vals[1]) < 1e-25
        assert abs(vals[2]) < 1e-25 and abs(vals[3]) < 1e-25


def test_hartmann_fields_against_sympy():
    pr = hartmann_problem()
    Re = Rm = 7.07
    u, b, p = _hartmann_sympy(sp.Float(Re), sp.Float(Rm), sp.Float(200.0), sp.sqrt(200.0 * Re * Rm))
    _compare_fields(pr, u, b, p, sp.Integer(0), _pts("hartmann"))
    assert np.allclose(pr.g(np.zeros((3, 2))), [1.0, 0.0])
    assert np.allclose(pr.f(np.zeros((3, 2))), 0.0)


def test_hartmann_strong_residual_matches_constant_forcing():
    pr = hartmann_problem()
    x = _pts("hartmann", 20)
    g, f = strong_residuals(pr.exact, pr.coeffs, x)
    assert np.allclose(g, [1.0, 0.0], atol=1e-9)
    assert np.allclose(f, 0.0, atol=1e-9)


def test_hartmann_other_ha_uses_general_forcing():
    pr = hartmann_problem(Ha=10.0)
    assert pr.f_const is None
    x = _pts("hartmann")
    assert np.allclose(pr.f(x), strong_residuals(pr.exact, pr.coeffs, x)[1])


def test_hartmann_pressure_mean():
    pr = hartmann_problem()
    ex = pr.exact
    mean = mpmath.quad(lambda y: ex.p_raw(np.array([0.0, float(y)])), [-1, -0.9, 0, 0.9, 1]) / 2
    assert ex.p0 == pytest.approx(float(mean), rel=1e-12)


def test_singular_exponent_solves_corner_equation():
    lam = mpmath.findroot(lambda l: mpmath.sin(1.5 * mpmath.pi * l) - l, 0.5)
    assert float(lam) == pytest.approx(SINGULAR_LAMBDA, abs=1e-13)


def test_singular_velocity_vanishes_on_corner_edges():
    ex = get_problem("singular").exact
    rho = np.linspace(0.05, 1.0, 9)
    for phi in (0.0, 1.5 * np.pi):
        x = np.stack([rho * np.cos(phi), rho * np.sin(phi)], -1)
        assert np.abs(ex.u(x)).max() < 1e-12


def test_singular_stokes_part_and_curl_free_field():
    pr = get_problem("singular")
    x = _pts("lshaped", 20)
    ex = pr.exact
    # closed-form derivatives against central differences
    h = 1e-6
    for i, dx in enumerate((np.array([h, 0]), np.array([0, h]))):
        fd = (ex.grad_u(x + dx) - ex.grad_u(x - dx)) / (2 * h)
        assert np.allclose(ex.hess_u(x)[..., i], fd, rtol=1e-5, atol=1e-5)
        fdp = (ex.p_raw(x + dx) - ex.p_raw(x - dx)) / (2 * h)
        assert np.allclose(ex.grad_p(x)[..., i], fdp, rtol=1e-5, atol=1e-5)
    gb = ex.grad_b(x)
    assert np.allclose(gb[..., 1, 0] - gb[..., 0, 1], 0.0, atol=1e-10)
    assert np.allclose(pr.g(x), 0.0, atol=1e-9)


def test_singular_pressure_mean():
    ex = get_problem("singular").exact
    total = 0.0
    for x0, x1, y0, y1 in [(-1, 0, -1, 0), (-1, 0, 0, 1), (0, 1, 0, 1)]:
        val, _ = integrate.dblquad(lambda y, x: ex.p_raw(np.array([x, y])), x0, x1, y0, y1,
                                   epsabs=1e-11, epsrel=1e-11)
        total += val
    assert ex.p0 == pytest.approx(total / 3.0, abs=1e-7)


@pytest.mark.parametrize("name", PROBLEMS)
def test_fields_are_solenoidal(name):
    pr = get_problem(name)
    x = _pts(pr.domain if pr.domain == "hartmann" else "lshaped")
    for grad in (pr.exact.grad_u(x), pr.exact.grad_b(x)):
        assert np.allclose(grad[..., 0, 0] + grad[..., 1, 1], 0.0, atol=1e-10)


@pytest.mark.parametrize("name", ["lshaped", "poly2"])
def test_pressure_has_zero_mean(name):
    from hdgmhd.problems import LSHAPED_RECTS, rect_integral
    ex = get_problem(name).exact
    assert abs(rect_integral(ex.p, LSHAPED_RECTS, n=30)) < 1e-12


def test_zero_data_problem():
    z = zero_data(get_problem("lshaped"))
    x = _pts("lshaped")
    assert np.all(z.g(x) == 0) and np.all(z.f(x) == 0)
    assert np.all(z.exact.u(x) == 0) and np.all(z.exact.r(x) == 0)


def test_registry_errors_and_overrides():
    with pytest.raises(KeyError):
        get_problem("nope")
    with pytest.raises(ValueError):
        get_problem("lshaped", stabilization="corner")
    assert get_problem("hartmann", alpha1=3.0).coeffs.alpha1 == 3.0
    assert get_problem("singular").coeffs.alpha3 == 20.0
    assert get_problem("singular", stabilization="default").coeffs.alpha3 == 1.0
    d = get_problem("hartmann", stabilization="default").coeffs
    assert d.alpha2 == 1.0 and d.alpha1 == max(1.0, d.w_inf)
