import numpy as np
import pytest
from hypothesis import given, strategies as st

from hdgmhd.analysis import (ErrorRow, ErrorTable, fitted_order, l2_errors, pair_orders, project_br,
                             project_Lu)
from hdgmhd.basis import dim_p
from hdgmhd.problems import get_problem
from hdgmhd.space import Space
from hdgmhd.study import solve_level
from hdgmhd.verify import projection_study


@given(st.floats(0.5, 4.0), st.floats(1e-3, 10.0))
def test_pair_orders_of_power_laws(p, c):
    h = np.array([0.5, 0.25, 0.125, 0.1])
    o = pair_orders(c * h ** p, h)
    assert np.isnan(o[0]) and np.allclose(o[1:], p)
    assert fitted_order(c * h ** p, h) == pytest.approx(p)


def test_equal_errors_give_zero_order():
    o = pair_orders([0.0, 0.0, 1e-3, 1e-3], [1, 0.5, 0.25, 0.125])
    assert o[1] == 0.0 and o[3] == 0.0


def test_error_table():
    t = ErrorTable("x", 1)
    for lv, h in ((1, 0.5), (2, 0.25)):
        t.add(ErrorRow(lv, h, 1, 1, {n: h ** 2 for n in ("L", "u", "p", "H", "b", "r")}))
    assert t.finest_orders()["u"] == pytest.approx(2.0)
    assert np.isnan(ErrorTable("y", 1, t.rows[:1]).finest_orders()["p"])


@pytest.mark.parametrize("k", [1, 2, 3])
def test_projection_systems_are_square(k):
    # 3N = 3 dim P_{k-1} + 3 (k + 1) and 6N = 6 dim P_{k-1} + 6 (k + 1)
    assert 3 * dim_p(k) == 3 * dim_p(k - 1) + 3 * (k + 1)
    assert 6 * dim_p(k) == 6 * dim_p(k - 1) + 6 * (k + 1)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_projections_reproduce_polynomials(k):
    pr = get_problem(f"poly{k}")
    ex = pr.exact
    space = Space(pr.build_mesh(1), k)
    br = project_br(space, ex.b, ex.r, pr.coeffs.alpha3)
    lu = project_Lu(space, ex.L, ex.u, ex.p, ex.b, pr.coeffs, br)
    assert max(*br.errors.values(), *lu.errors.values()) < 1e-10
    assert np.isfinite(br.condition) and np.isfinite(lu.condition)


def test_br_projection_moment_conditions():
    k = 2
    pr = get_problem("lshaped")
    ex = pr.exact
    space = Space(pr.build_mesh(1), k)
    deg = 2 * k + 6
    res = project_br(space, ex.b, ex.r, 0.7, deg)
    vt, et = space.volume(deg), space.edges(deg)
    bv = np.einsum("ecn,eqn->eqc", res.coefficients["b"], vt.phi)
    eb = ex.b(vt.x) - bv
    nm = dim_p(k - 1)
    vol = np.einsum("eq,eqc,eqi->eci", vt.w, eb, vt.phi[..., :nm])
    assert np.abs(vol).max() < 1e-12
    be = ex.b(et.x) - np.einsum("ecn,ejqn->ejqc", res.coefficients["b"], et.phi)
    re_ = ex.r(et.x) - np.einsum("ecn,ejqn->ejq", res.coefficients["r"], et.phi)
    edge = np.einsum("ejq,ejqm,ejq->ejm", et.w, et.psi, np.einsum("ejqc,ejc->ejq", be, et.normal) + 0.7 * re_)
    assert np.abs(edge).max() < 1e-12


def test_projection_rates_on_smooth_fields():
    errs, h = projection_study(1, levels=(2, 4, 8))
    for e in errs.values():
        assert pair_orders(e, h)[-1] >= 1.8


def test_l2_errors_vanish_for_reproduced_solution():
    pr = get_problem("poly2")
    sol = solve_level(pr, 2, 1)
    assert max(l2_errors(sol, pr.exact).values()) < 1e-10
