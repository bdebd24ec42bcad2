"""Manufactured MHD problems: exact fields, forcing and Dirichlet data.

Every exact solution supplies closed-form values, gradients and Hessians of
``u`` and ``b`` and gradients of ``p`` and ``r``; the forcing is built from
those, never from numerical differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.special import roots_legendre

from .local import Coefficients, curl2, curl_scalar, vcross
from .mesh import build_hartmann_mesh, build_lshaped_mesh
from .polar import PolarTerm, Trig, polar_coordinates
from .system import BoundaryData

LSHAPED_RECTS = [(-1.0, 0.0, -1.0, 0.0), (-1.0, 0.0, 0.0, 1.0), (0.0, 1.0, 0.0, 1.0)]
HARTMANN_RECTS = [(0.0, 0.025, -1.0, 1.0)]
SINGULAR_LAMBDA = 0.54448373678246
CORNER_ALPHA3 = 20.0


class ExactSolution:
    """Base class; subclasses implement the raw fields, ``p`` without its mean shift."""

    Re = Rm = kappa = 1.0
    p0 = 0.0

    def u(self, x): raise NotImplementedError
    def grad_u(self, x): raise NotImplementedError
    def hess_u(self, x): raise NotImplementedError
    def b(self, x): raise NotImplementedError
    def grad_b(self, x): raise NotImplementedError
    def hess_b(self, x): raise NotImplementedError
    def p_raw(self, x): raise NotImplementedError
    def grad_p(self, x): raise NotImplementedError

    def r(self, x):
        return np.zeros(np.shape(x)[:-1])

    def grad_r(self, x):
        return np.zeros(np.shape(x))

    def p(self, x):
        return self.p_raw(x) - self.p0

    def L(self, x):
        """Velocity gradient over Re, shape (..., 2, 2)."""
        return self.grad_u(x) / self.Re

    def H(self, x):
        return self.kappa / self.Rm * curl2(self.grad_b(x))

    def bt(self, x):
        return self.b(x)


def strong_residuals(ex: ExactSolution, coeffs: Coefficients, x):
    """Left-hand sides of momentum and induction equations (g and f if exact)."""
    Re, Rm, kap = coeffs.Re, coeffs.Rm, coeffs.kappa
    gu = ex.grad_u(x)
    lap = np.einsum("...ijj->...i", ex.hess_u(x))
    w = coeffs.w(x)
    d = coeffs.d(x)
    gb = ex.grad_b(x)
    hb = ex.hess_b(x)
    curl_b = curl2(gb)
    g = -lap / Re + ex.grad_p(x) + np.einsum("...ij,...j->...i", gu, w) + kap * vcross(d, curl_b)
    grad_curl_b = hb[..., 1, 0, :] - hb[..., 0, 1, :]
    u = ex.u(x)
    gd = coeffs.grad_d(x)
    grad_sigma = (gu[..., 0, :] * d[..., 1, None] + u[..., 0, None] * gd[..., 1, :]
                  - gu[..., 1, :] * d[..., 0, None] - u[..., 1, None] * gd[..., 0, :])
    f = kap / Rm * curl_scalar(grad_curl_b) + ex.grad_r(x) - kap * curl_scalar(grad_sigma)
    return g, f


def rect_integral(func, rects, n: int = 40):
    """Tensor Gauss-Legendre integral over a union of rectangles (smooth integrands)."""
    s, w = roots_legendre(n)
    total = 0.0
    for x0, x1, y0, y1 in rects:
        X = 0.5 * (x1 - x0) * (s + 1) + x0
        Y = 0.5 * (y1 - y0) * (s + 1) + y0
        P = np.stack(np.meshgrid(X, Y, indexing="ij"), axis=-1)
        W = np.outer(w, w) * 0.25 * (x1 - x0) * (y1 - y0)
        total += float(np.sum(W * func(P)))
    return total


@dataclass
class ManufacturedProblem:
    name: str
    coeffs: Coefficients
    exact: ExactSolution
    domain: str
    area: float
    g_const: np.ndarray | None = None     # set when a forcing is a known constant
    f_const: np.ndarray | None = None
    load_boost: int = 0
    metadata: dict = field(default_factory=dict)

    def g(self, x):
        if self.g_const is not None:
            return np.broadcast_to(self.g_const, np.shape(x)).copy()
        return strong_residuals(self.exact, self.coeffs, x)[0]

    def f(self, x):
        if self.f_const is not None:
            return np.broadcast_to(self.f_const, np.shape(x)).copy()
        return strong_residuals(self.exact, self.coeffs, x)[1]

    @property
    def bc(self) -> BoundaryData:
        return BoundaryData(self.exact.u, self.exact.bt, self.exact.r)

    def build_mesh(self, level: int):
        return build_hartmann_mesh(level) if self.domain == "hartmann" else build_lshaped_mesh(level)


# --- Hartmann ----------------------------------------------------------------

class HartmannSolution(ExactSolution):
    """Hartmann channel profile; all hyperbolic ratios evaluated overflow-free."""

    def __init__(self, Re, Rm, kappa, Ha):
        self.Re, self.Rm, self.kappa, self.Ha = Re, Rm, kappa, Ha
        self.p0 = self.mean_p_raw()

    def _ratios(self, y):
        Ha = self.Ha
        ay = np.abs(y)
        e = np.exp(Ha * (ay - 1.0))
        q = np.exp(-2.0 * Ha * ay)
        q1 = np.exp(-2.0 * Ha)
        rc = e * (1.0 + q) / (1.0 + q1)                 # cosh(Ha y) / cosh(Ha)
        rs = np.sign(y) * e * (1.0 - q) / (1.0 - q1)    # sinh(Ha y) / sinh(Ha)
        return rc, rs

    def profile(self, y):
        """u1, u1', u1'', b1, b1', b1''."""
        Ha, Re, kap = self.Ha, self.Re, self.kappa
        rc, rs = self._ratios(y)
        th = np.tanh(Ha)
        u1 = Re / (Ha * th) * (1.0 - rc)
        du1 = -Re * rs
        ddu1 = -Re * Ha * rc / th
        b1 = (rs - y) / kap
        db1 = (Ha * rc / th - 1.0) / kap
        ddb1 = Ha * Ha * rs / kap
        return u1, du1, ddu1, b1, db1, ddb1

    def u(self, x):
        u1 = self.profile(x[..., 1])[0]
        return np.stack([u1, np.zeros_like(u1)], axis=-1)

    def grad_u(self, x):
        du1 = self.profile(x[..., 1])[1]
        out = np.zeros(np.shape(x)[:-1] + (2, 2))
        out[..., 0, 1] = du1
        return out

    def hess_u(self, x):
        ddu1 = self.profile(x[..., 1])[2]
        out = np.zeros(np.shape(x)[:-1] + (2, 2, 2))
        out[..., 0, 1, 1] = ddu1
        return out

    def b(self, x):
        b1 = self.profile(x[..., 1])[3]
        return np.stack([b1, np.ones_like(b1)], axis=-1)

    def grad_b(self, x):
        db1 = self.profile(x[..., 1])[4]
        out = np.zeros(np.shape(x)[:-1] + (2, 2))
        out[..., 0, 1] = db1
        return out

    def hess_b(self, x):
        ddb1 = self.profile(x[..., 1])[5]
        out = np.zeros(np.shape(x)[:-1] + (2, 2, 2))
        out[..., 0, 1, 1] = ddb1
        return out

    def p_raw(self, x):
        _, _, _, b1, _, _ = self.profile(x[..., 1])
        return -0.5 * self.kappa * b1 * b1

    def grad_p(self, x):
        _, _, _, b1, db1, _ = self.profile(x[..., 1])
        out = np.zeros(np.shape(x))
        out[..., 1] = -self.kappa * b1 * db1
        return out

    def mean_p_raw(self, n: int = 64, panels: int = 64):
        # composite Gauss-Legendre in x2, graded toward the walls
        s, w = roots_legendre(n)
        edges = np.tanh(np.linspace(-3, 3, panels + 1)) / np.tanh(3)
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            y = 0.5 * (b - a) * (s + 1) + a
            pts = np.stack([np.zeros_like(y), y], axis=-1)
            total += 0.5 * (b - a) * np.sum(w * self.p_raw(pts))
        return total / 2.0


def hartmann_problem(Re: float = 7.07, Rm: float = 7.07, kappa: float = 200.0,
                     Ha: float | None = None, stabilization: str = "coupled",
                     **alphas) -> ManufacturedProblem:
    """Hartmann flow with ``w = u`` and ``d = b``, forcing ``g = (1, 0)``.

    ``Ha`` defaults to ``sqrt(kappa Re Rm)``, for which the profile solves the
    system with ``f = 0``; other values yield the matching nonzero ``f``.
    ``stabilization="coupled"`` scales the stabilization with the coupling,
    ``alpha1 = sqrt(kappa) |d|_inf`` and ``alpha2 = kappa |d|_inf``;
    ``"default"`` keeps the O(1) defaults.
    """
    if min(Re, Rm, kappa) <= 0:
        raise ValueError("parameters must be positive")
    if Ha is None:
        Ha = float(np.sqrt(kappa * Re * Rm))
    ex = HartmannSolution(Re, Rm, kappa, Ha)
    w_inf = float(ex.u(np.array([0.0, 0.0]))[0])
    y = np.linspace(-1.0, 1.0, 4001)
    d_inf = float(np.max(np.linalg.norm(ex.b(np.stack([np.zeros_like(y), y], -1)), axis=-1)))
    alphas = dict(_stabilization(stabilization, kappa=kappa, d_inf=d_inf, w_inf=w_inf), **alphas)
    coeffs = Coefficients(Re=Re, Rm=Rm, kappa=kappa, w=ex.u, d=ex.b, grad_d=ex.grad_b,
                          w_inf=w_inf, field_degree=None, **alphas)
    exact_f = abs(Ha * Ha - kappa * Re * Rm) <= 1e-12 * Ha * Ha
    return ManufacturedProblem("hartmann", coeffs, ex, "hartmann", 0.05,
                               g_const=np.array([1.0, 0.0]),
                               f_const=np.zeros(2) if exact_f else None,
                               metadata={"Ha": Ha, "d_inf": d_inf, "stabilization": stabilization})


def _stabilization(kind: str, kappa: float = 1.0, d_inf: float = 0.0, w_inf: float = 0.0) -> dict:
    """Stabilization presets; explicit ``alpha*`` arguments override them."""
    if kind == "default":
        return {}
    if kind == "coupled":
        return {"alpha1": max(1.0, w_inf, float(np.sqrt(kappa)) * d_inf),
                "alpha2": max(1.0, kappa * d_inf)}
    if kind == "corner":
        return {"alpha3": CORNER_ALPHA3}
    raise ValueError(f"unknown stabilization {kind!r}")


# --- smooth L-shaped ---------------------------------------------------------

class LShapedSolution(ExactSolution):
    """u = b = (-(y cos y + sin y) e^x, y sin y e^x), p = 2 e^x sin y, r = -sin(pi x) sin(pi y)."""

    def __init__(self):
        self.p0 = rect_integral(self.p_raw, LSHAPED_RECTS) / 3.0

    @staticmethod
    def _parts(x):
        X, Y = x[..., 0], x[..., 1]
        ex = np.exp(X)
        c, s = np.cos(Y), np.sin(Y)
        A = Y * c + s
        dA = 2 * c - Y * s
        ddA = -3 * s - Y * c
        B = Y * s
        return ex, A, dA, ddA, B

    def u(self, x):
        ex, A, _, _, B = self._parts(x)
        return np.stack([-A * ex, B * ex], axis=-1)

    def grad_u(self, x):
        ex, A, dA, _, B = self._parts(x)
        return np.stack([np.stack([-A * ex, -dA * ex], -1), np.stack([B * ex, A * ex], -1)], -2)

    def hess_u(self, x):
        ex, A, dA, ddA, B = self._parts(x)
        h1 = np.stack([np.stack([-A, -dA], -1), np.stack([-dA, -ddA], -1)], -2) * ex[..., None, None]
        h2 = np.stack([np.stack([B, A], -1), np.stack([A, dA], -1)], -2) * ex[..., None, None]
        return np.stack([h1, h2], axis=-3)

    b, grad_b, hess_b = u, grad_u, hess_u

    def p_raw(self, x):
        return 2 * np.exp(x[..., 0]) * np.sin(x[..., 1])

    def grad_p(self, x):
        ex = np.exp(x[..., 0])
        return np.stack([2 * ex * np.sin(x[..., 1]), 2 * ex * np.cos(x[..., 1])], axis=-1)

    def r(self, x):
        return -np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])

    def grad_r(self, x):
        X, Y = np.pi * x[..., 0], np.pi * x[..., 1]
        return -np.pi * np.stack([np.cos(X) * np.sin(Y), np.sin(X) * np.cos(Y)], axis=-1)


def _const(v):
    v = np.asarray(v, dtype=float)
    return lambda x: np.broadcast_to(v, np.shape(x)[:-1] + v.shape).copy()


def lshaped_problem(**alphas) -> ManufacturedProblem:
    coeffs = Coefficients(
        Re=1.0, Rm=1.0, kappa=1.0, w=_const([2.0, 1.0]),
        d=lambda x: np.stack([x[..., 0], -x[..., 1]], axis=-1),
        grad_d=_const([[1.0, 0.0], [0.0, -1.0]]), w_inf=float(np.sqrt(5.0)),
        field_degree=1, **alphas)
    return ManufacturedProblem("lshaped", coeffs, LShapedSolution(), "lshaped", 3.0)


# --- singular corner solution -----------------------------------------------

class SingularSolution(ExactSolution):
    """Corner-singular Stokes flow and gradient magnetic field on the L-shaped domain."""

    def __init__(self, lam: float = SINGULAR_LAMBDA, omega: float = 1.5 * np.pi):
        self.lam, self.omega = lam, omega
        l = lam
        psi = (Trig.sin(1 + l, np.cos(l * omega) / (1 + l)) + Trig.sin(1 - l, -np.cos(l * omega) / (1 - l))
               + Trig.cos(1 + l, -1.0) + Trig.cos(1 - l, 1.0))
        dpsi = psi.diff()
        u1 = PolarTerm(l, psi.times_sin().scale(1 + l) + dpsi.times_cos())
        u2 = PolarTerm(l, psi.times_cos().scale(-(1 + l)) + dpsi.times_sin())
        pt = PolarTerm(l - 1, (dpsi.scale((1 + l) ** 2) + dpsi.diff().diff()).scale(-1.0 / (1 - l)))
        phi_b = PolarTerm(2.0 / 3.0, Trig.sin(2.0 / 3.0))
        b1, b2 = phi_b.grad()
        self._u = [u1, u2]
        self._gu = [list(c.grad()) for c in self._u]
        self._hu = [[list(g.grad()) for g in row] for row in self._gu]
        self._b = [b1, b2]
        self._gb = [list(c.grad()) for c in self._b]
        self._hb = [[list(g.grad()) for g in row] for row in self._gb]
        self._p = pt
        self._gp = list(pt.grad())
        self.p0 = self.mean_p_raw()

    @staticmethod
    def _eval(terms, x):
        rho, phi = polar_coordinates(x)
        arr = np.asarray(terms, dtype=object)
        out = np.empty(arr.shape + rho.shape)
        for idx in np.ndindex(arr.shape):
            out[idx] = arr[idx](rho, phi)
        return np.moveaxis(out, list(range(arr.ndim)), list(range(-arr.ndim, 0))) if arr.ndim else out

    def u(self, x): return self._eval(self._u, x)
    def grad_u(self, x): return self._eval(self._gu, x)
    def hess_u(self, x): return self._eval(self._hu, x)
    def b(self, x): return self._eval(self._b, x)
    def grad_b(self, x): return self._eval(self._gb, x)
    def hess_b(self, x): return self._eval(self._hb, x)
    def p_raw(self, x): return self._p(*polar_coordinates(x))
    def grad_p(self, x): return self._eval(self._gp, x)

    def mean_p_raw(self, n: int = 40):
        # star-shaped domain: int rho^(a) F rho drho dphi = int F R(phi)^(a+2)/(a+2) dphi
        a = self._p.a
        s, w = roots_legendre(n)
        total = 0.0
        for j in range(6):
            lo, hi = j * np.pi / 4, (j + 1) * np.pi / 4
            phi = 0.5 * (hi - lo) * (s + 1) + lo
            R = 1.0 / np.maximum(np.abs(np.cos(phi)), np.abs(np.sin(phi)))
            total += 0.5 * (hi - lo) * np.sum(w * self._p.F(phi) * R ** (a + 2) / (a + 2))
        return total / 3.0


def singular_problem(stabilization: str = "corner", **alphas) -> ManufacturedProblem:
    """Corner-singular problem; ``stabilization="corner"`` raises ``alpha3``."""
    alphas = dict(_stabilization(stabilization), **alphas)
    coeffs = Coefficients(Re=1.0, Rm=1.0, kappa=1.0, w=_const([0.0, 0.0]), d=_const([-1.0, 1.0]),
                          grad_d=_const([[0.0, 0.0], [0.0, 0.0]]), w_inf=0.0, field_degree=0,
                          **alphas)
    lam = SINGULAR_LAMBDA
    return ManufacturedProblem(
        "singular", coeffs, SingularSolution(lam), "lshaped", 3.0, load_boost=6,
        metadata={"lambda": lam, "stabilization": stabilization,
                  "regularity": {"u": f"H^{1 + lam}", "p": f"H^{lam}", "b": "H^(2/3)"}})


# --- polynomial reproduction ------------------------------------------------

class PolynomialSolution(ExactSolution):
    """Stream-function velocity and magnetic field of degree k, polynomial p and r."""

    def __init__(self, k: int, Re, Rm, kappa, seed: int = 20240611):
        rng = np.random.default_rng(seed + k)
        self.k, self.Re, self.Rm, self.kappa = k, Re, Rm, kappa

        def rand_poly(deg):
            c = rng.uniform(-1, 1, (deg + 1, deg + 1))
            a, b = np.indices(c.shape)
            c[a + b > deg] = 0.0
            return c

        su, sb = rand_poly(k + 1), rand_poly(k + 1)
        # u = (d_y s, -d_x s)
        self._uc = [npoly.polyder(su, axis=1), -npoly.polyder(su, axis=0)]
        self._bc = [npoly.polyder(sb, axis=1), -npoly.polyder(sb, axis=0)]
        self._pc = rand_poly(k)
        self._rc = rand_poly(k)
        self.p0 = rect_integral(self.p_raw, LSHAPED_RECTS, n=k + 2) / 3.0

    @staticmethod
    def _val(c, x):
        return npoly.polyval2d(x[..., 0], x[..., 1], c)

    def _grad(self, c, x):
        return np.stack([self._val(npoly.polyder(c, axis=0), x), self._val(npoly.polyder(c, axis=1), x)], -1)

    def _hess(self, c, x):
        return np.stack([self._grad(npoly.polyder(c, axis=0), x), self._grad(npoly.polyder(c, axis=1), x)], -2)

    def u(self, x): return np.stack([self._val(c, x) for c in self._uc], -1)
    def grad_u(self, x): return np.stack([self._grad(c, x) for c in self._uc], -2)
    def hess_u(self, x): return np.stack([self._hess(c, x) for c in self._uc], -3)
    def b(self, x): return np.stack([self._val(c, x) for c in self._bc], -1)
    def grad_b(self, x): return np.stack([self._grad(c, x) for c in self._bc], -2)
    def hess_b(self, x): return np.stack([self._hess(c, x) for c in self._bc], -3)
    def p_raw(self, x): return self._val(self._pc, x)
    def grad_p(self, x): return self._grad(self._pc, x)
    def r(self, x): return self._val(self._rc, x)
    def grad_r(self, x): return self._grad(self._rc, x)


def polynomial_problem(k: int, **alphas) -> ManufacturedProblem:
    if k < 1:
        raise ValueError("k must be >= 1")
    Re, Rm, kappa = 1.5, 2.0, 0.7
    coeffs = Coefficients(
        Re=Re, Rm=Rm, kappa=kappa,
        w=lambda x: np.stack([1.0 + 0.5 * x[..., 1], 0.25 - 0.5 * x[..., 0]], axis=-1),
        d=lambda x: np.stack([1.0 + 0.3 * x[..., 0], -0.5 + 0.2 * x[..., 1]], axis=-1),
        grad_d=_const([[0.3, 0.0], [0.0, 0.2]]), w_inf=2.0, field_degree=1, **alphas)
    return ManufacturedProblem(f"poly{k}", coeffs, PolynomialSolution(k, Re, Rm, kappa), "lshaped", 3.0)


def zero_data(problem: ManufacturedProblem) -> ManufacturedProblem:
    """Same coefficients and mesh, with all forcing and boundary data set to zero."""
    return ManufacturedProblem(problem.name + "-zero", problem.coeffs, ZeroSolution(problem.exact),
                               problem.domain, problem.area, g_const=np.zeros(2), f_const=np.zeros(2))


class ZeroSolution(ExactSolution):
    def __init__(self, like: ExactSolution):
        self.Re, self.Rm, self.kappa = like.Re, like.Rm, like.kappa

    def u(self, x): return np.zeros(np.shape(x))
    def grad_u(self, x): return np.zeros(np.shape(x) + (2,))
    def hess_u(self, x): return np.zeros(np.shape(x) + (2, 2))
    b, grad_b, hess_b = u, grad_u, hess_u
    def p_raw(self, x): return np.zeros(np.shape(x)[:-1])
    def grad_p(self, x): return np.zeros(np.shape(x))


def get_problem(name: str, **overrides) -> ManufacturedProblem:
    """Registry: ``hartmann``, ``lshaped``, ``singular``, ``poly<k>``.

    Accepted overrides: ``alpha1..3`` for every problem, ``stabilization`` for
    ``hartmann`` and ``singular``, and ``Re, Rm, kappa, Ha`` for ``hartmann``.
    """
    kw = {k: v for k, v in overrides.items() if k.startswith("alpha") and v is not None}
    stab = overrides.get("stabilization")
    if stab is not None:
        if name not in ("hartmann", "singular"):
            if stab != "default":
                raise ValueError(f"problem {name!r} only supports the default stabilization")
        else:
            kw["stabilization"] = stab
    if name == "hartmann":
        phys = {k: overrides[k] for k in ("Re", "Rm", "kappa", "Ha") if overrides.get(k) is not None}
        return hartmann_problem(**phys, **kw)
    if name == "lshaped":
        return lshaped_problem(**kw)
    if name == "singular":
        return singular_problem(**kw)
    if name.startswith("poly") and name[4:].isdigit():
        return polynomial_problem(int(name[4:]), **kw)
    raise KeyError(f"unknown problem {name!r}")


PROBLEMS = ("hartmann", "lshaped", "singular", "poly1", "poly2", "poly3")
