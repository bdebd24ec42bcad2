"""Self-verification suites run by ``hdg-mhd verify``.

Each suite returns a :class:`SuiteResult`; the command exits with
``10 + i`` for the first failing suite ``i`` in :data:`SUITES` order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .analysis import VARIABLES, coefficient_l2, l2_errors, pair_orders, project_br, project_Lu
from .basis import edge_quadrature, triangle_quadrature
from .local import cross2, curl2, curl_scalar, vcross
from .postprocess import postprocess_b, postprocess_u
from .problems import get_problem, zero_data
from .space import Space
from .study import degrees_for, solve_level
from .system import solve_monolithic


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str


# --- integration identities ----------------------------------------------

def _random_triangle(rng):
    while True:
        v = rng.uniform(-1.0, 1.0, size=(3, 2))
        area = 0.5 * cross2(v[1] - v[0], v[2] - v[0])
        if abs(area) > 0.05:
            return v if area > 0 else v[::-1].copy()


class PolyField:
    """Vector polynomial ``sum c[i, a, b] x^a y^b`` for component ``i``."""

    def __init__(self, coef):
        self.coef = np.asarray(coef, dtype=float)       # (2, n, n)

    def __call__(self, x):
        return np.stack([npoly.polyval2d(x[..., 0], x[..., 1], c) for c in self.coef], axis=-1)

    def grad(self, x):
        cols = []
        for c in self.coef:
            cols.append(np.stack([npoly.polyval2d(x[..., 0], x[..., 1], npoly.polyder(c, axis=0)),
                                  npoly.polyval2d(x[..., 0], x[..., 1], npoly.polyder(c, axis=1))],
                                 axis=-1))
        return np.stack(cols, axis=-2)


def _cross_field(u: PolyField, d: PolyField) -> np.ndarray:
    """Monomial coefficients of the scalar ``u x d = u1 d2 - u2 d1``."""
    return _mul2d(u.coef[0], d.coef[1]) - _mul2d(u.coef[1], d.coef[0])


def _mul2d(a, b):
    out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1))
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            out[i:i + b.shape[0], j:j + b.shape[1]] += a[i, j] * b
    return out


def identity_defects(vertices, cu, cb, cd) -> tuple[float, float]:
    """Relative defects of the two integration-by-parts identities on one triangle.

    ``(u, d x curl b)_K = (b, curl(u x d))_K + <d x (n x b), u>_dK`` and,
    pointwise on the boundary, ``(d x (n x b)) . u = -(n x (u x d)) . b``.
    ``cu, cb, cd`` are (2, n, n) monomial coefficients.
    """
    u, b, d = PolyField(cu), PolyField(cb), PolyField(cd)
    deg = sum(c.shape[1] - 1 + c.shape[2] - 1 for c in (u.coef, b.coef, d.coef))
    v = np.asarray(vertices, dtype=float)
    J = np.stack([v[1] - v[0], v[2] - v[0]], axis=-1)
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    q = triangle_quadrature(max(deg, 1))
    x = v[0] + q.points @ J.T
    w = q.weights * det
    ux, bx, dx = u(x), b(x), d(x)
    curl_b = curl2(b.grad(x))
    lhs = np.sum(w * np.einsum("qc,qc->q", ux, vcross(dx, curl_b)))
    s = _cross_field(u, d)
    gs = np.stack([npoly.polyval2d(x[:, 0], x[:, 1], npoly.polyder(s, axis=0)),
                   npoly.polyval2d(x[:, 0], x[:, 1], npoly.polyder(s, axis=1))], axis=-1)
    vol = np.sum(w * np.einsum("qc,qc->q", bx, curl_scalar(gs)))
    eq = edge_quadrature(max(deg, 1))
    # scales from the factor magnitudes, so cancelling data do not divide roundoff by zero
    nu, nb, nd = (np.linalg.norm(a, axis=-1) for a in (ux, bx, dx))
    scale = np.sum(w * nu * nd * np.abs(curl_b)) + np.sum(w * nb * np.linalg.norm(gs, axis=-1))
    bnd, pointwise, pscale = 0.0, 0.0, 0.0
    for j in range(3):
        a, c = v[j], v[(j + 1) % 3]
        t = c - a
        length = math.hypot(*t)
        n = np.array([t[1], -t[0]]) / length
        xe = a + eq.points[:, None] * t
        we = eq.weights * length
        ue, be, de = u(xe), b(xe), d(xe)
        left = np.einsum("qc,qc->q", vcross(de, cross2(n, be)), ue)
        right = -np.einsum("qc,qc->q", vcross(n, cross2(ue, de)), be)
        mag = np.linalg.norm(ue, axis=-1) * np.linalg.norm(be, axis=-1) * np.linalg.norm(de, axis=-1)
        bnd += np.sum(we * left)
        scale += np.sum(we * mag)
        pointwise = max(pointwise, np.abs(left - right).max())
        pscale = max(pscale, mag.max())
    da = abs(lhs - vol - bnd) / max(scale, 1e-300)
    db = pointwise / max(pscale, 1e-300)
    return float(da), float(db)


def random_identity_case(rng, degree: int = 3):
    n = degree + 1
    def coef():
        c = rng.uniform(-1.0, 1.0, size=(2, n, n))
        a, b = np.indices((n, n))
        c[:, a + b > degree] = 0.0
        return c
    return _random_triangle(rng), coef(), coef(), coef()


# --- suites ------------------------------------------------------------------

def suite_quadrature(max_degree: int = 20) -> SuiteResult:
    worst = 0.0
    for deg in range(max_degree + 1):
        q = triangle_quadrature(deg)
        for a in range(deg + 1):
            for b in range(deg + 1 - a):
                exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
                val = np.sum(q.weights * q.points[:, 0] ** a * q.points[:, 1] ** b)
                worst = max(worst, abs(val - exact) / exact)
        e = edge_quadrature(deg)
        for a in range(deg + 1):
            worst = max(worst, abs(np.sum(e.weights * e.points ** a) * (a + 1) - 1.0))
    return SuiteResult("quadrature", worst <= 1e-12, f"max relative monomial error {worst:.2e}")


def suite_identities(cases: int = 200, seed: int = 0) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        worst = max(worst, *identity_defects(*random_identity_case(rng)))
    return SuiteResult("identities", worst <= 1e-12, f"{cases} cases, max relative defect {worst:.2e}")


def suite_wellposed(alphas: dict | None = None) -> SuiteResult:
    alphas = alphas or {}
    worst = 0.0
    try:
        for name, k in (("hartmann", 1), ("hartmann", 2), ("hartmann", 3), ("lshaped", 1)):
            pr = zero_data(get_problem(name, **alphas))
            sol = solve_level(pr, k, 2)
            worst = max(worst, max(coefficient_l2(sol.space, sol.field(v)) for v in VARIABLES),
                        float(np.abs(sol.trace).max()))
    except ValueError as exc:
        return SuiteResult("wellposed", False, f"alpha condition violated: {exc}")
    return SuiteResult("wellposed", worst <= 1e-10, f"zero data (hartmann k=1..3, lshaped k=1): max field norm {worst:.2e}")


def suite_consistency(flux_sign: float = 1.0) -> SuiteResult:
    worst = 0.0
    for k in (1, 2, 3):
        pr = get_problem(f"poly{k}")
        sol = solve_level(pr, k, 1, flux_sign=flux_sign)
        worst = max(worst, max(l2_errors(sol, pr.exact).values()))
    return SuiteResult("consistency", worst <= 1e-9, f"polynomial reproduction k=1..3: max error {worst:.2e}")


def relative_differences(a, b) -> dict[str, float]:
    return {v: coefficient_l2(a.space, a.field(v) - b.field(v)) / max(coefficient_l2(a.space, a.field(v)), 1e-300)
            for v in VARIABLES}


def suite_monolithic() -> SuiteResult:
    worst = 0.0
    for name, level in (("hartmann", 1), ("lshaped", 2)):
        pr = get_problem(name)
        deg = degrees_for(pr, 1)
        a = solve_level(pr, 1, level, deg)
        b = solve_monolithic(a.space, pr.coeffs, pr.g, pr.f, pr.bc, deg)
        worst = max(worst, max(relative_differences(a, b).values()))
    return SuiteResult("monolithic", worst <= 1e-8, f"max relative difference {worst:.2e}")


def projection_study(k: int, levels=(2, 4, 8, 16)):
    """Projection errors of the smooth L-shaped fields: dict name -> errors per level, and h."""
    pr = get_problem("lshaped")
    ex = pr.exact
    errs = {"L": [], "u": [], "b": [], "r": []}
    hs = []
    for level in levels:
        space = Space(pr.build_mesh(level), k)
        br = project_br(space, ex.b, ex.r, pr.coeffs.alpha3)
        lu = project_Lu(space, ex.L, ex.u, ex.p, ex.b, pr.coeffs, br)
        for n in errs:
            errs[n].append((br.errors if n in ("b", "r") else lu.errors)[n])
        hs.append(space.mesh.h)
    return {n: np.array(v) for n, v in errs.items()}, np.array(hs)


def projection_reproduction(k: int, level: int = 1) -> float:
    pr = get_problem(f"poly{k}")
    ex = pr.exact
    space = Space(pr.build_mesh(level), k)
    br = project_br(space, ex.b, ex.r, pr.coeffs.alpha3)
    lu = project_Lu(space, ex.L, ex.u, ex.p, ex.b, pr.coeffs, br)
    return max(*br.errors.values(), *lu.errors.values())


def suite_projections() -> SuiteResult:
    worst_rep, worst_gap = 0.0, math.inf
    for k in (1, 2):
        worst_rep = max(worst_rep, projection_reproduction(k))
        errs, h = projection_study(k)
        for e in errs.values():
            worst_gap = min(worst_gap, pair_orders(e, h)[-1] - (k + 0.8))
    ok = worst_rep <= 1e-10 and worst_gap >= 0
    return SuiteResult("projections", ok,
                       f"reproduction {worst_rep:.2e}, finest order minus (k+0.8) at least {worst_gap:.3f}")


def suite_postprocess() -> SuiteResult:
    worst = 0.0
    for name, level, k in (("hartmann", 2, 1), ("lshaped", 4, 1), ("lshaped", 4, 2)):
        sol = solve_level(get_problem(name), k, level)
        for field in (postprocess_u(sol), postprocess_b(sol)):
            d = field.diagnostics()
            worst = max(worst, d["div_max"], d["normal_jump"])
    return SuiteResult("postprocess", worst <= 1e-10, f"max relative divergence or normal jump {worst:.2e}")


SUITES = ("quadrature", "identities", "wellposed", "consistency", "monolithic", "projections", "postprocess")


def run_suites(names=None, alphas: dict | None = None, flux_sign: float = 1.0, printer=print):
    """Run the selected suites in :data:`SUITES` order; returns the results."""
    names = SUITES if not names else names
    for n in names:
        if n not in SUITES:
            raise ValueError(f"unknown suite {n!r}; choose from {', '.join(SUITES)}")
    table = {
        "quadrature": suite_quadrature,
        "identities": suite_identities,
        "wellposed": lambda: suite_wellposed(alphas),
        "consistency": lambda: suite_consistency(flux_sign),
        "monolithic": suite_monolithic,
        "projections": suite_projections,
        "postprocess": suite_postprocess,
    }
    results = []
    for n in SUITES:
        if n in names:
            res = table[n]()
            printer(f"[{'PASS' if res.passed else 'FAIL'}] {res.name}: {res.detail}")
            results.append(res)
    return results


def exit_code(results) -> int:
    for res in results:
        if not res.passed:
            return 10 + SUITES.index(res.name)
    return 0
