import numpy as np
import pytest
import scipy.sparse as sp

from hdgmhd.local import assemble_local, condense
from hdgmhd.problems import get_problem
from hdgmhd.space import Space
from hdgmhd.study import degrees_for, estimated_dofs, solve_level
from hdgmhd.system import (GlobalSystem, SkeletonDofMap, SolverError, assemble_global, format_stats,
                           recover_fields, solve, solve_monolithic)
from hdgmhd.verify import relative_differences


def test_dofmap_layout():
    dm = SkeletonDofMap(n_edges=5, n_elements=2, M=2)
    assert dm.per_edge == 8 and dm.n_trace == 40 and dm.total == 42 and dm.rho_offset == 40
    assert dm.edge_dofs([1]).tolist() == [list(range(8, 16))]
    assert dm.element_dofs(np.array([[0, 1, 2]])).shape == (1, 24)


@pytest.mark.parametrize("k", [1, 2])
def test_global_dimension(k):
    pr = get_problem("lshaped")
    mesh = pr.build_mesh(2)
    sol = solve_level(pr, k, 2)
    assert sol.stats["dim"] == estimated_dofs(mesh, k) == 4 * (k + 1) * mesh.n_edges + mesh.n_elements


def test_constraints_hold():
    sol = solve_level(get_problem("lshaped"), 2, 2)
    d = sol.constraint_defects()
    assert d["p_mean"] < 1e-9 and d["rho_sum"] < 1e-9 and d["element_flux"] < 1e-9
    assert sol.stats["residual"] < 1e-10


def test_pressure_shift_is_a_null_mode():
    pr = get_problem("lshaped")
    space = Space(pr.build_mesh(1), 1)
    deg = degrees_for(pr, 1)
    ce = condense(assemble_local(space, pr.coeffs, pr.g, pr.f, deg))
    system = assemble_global(ce, pr.bc)
    x = solve(system)
    shifted = x.copy()
    shifted[system.dofmap.rho_offset:] += 0.37 * space.geom.areas
    a, b = recover_fields(ce, x), recover_fields(ce, shifted)
    assert np.allclose(a.local, b.local, atol=1e-12) and np.array_equal(a.trace, b.trace)
    # the shifted vector solves every row except the pin
    r = system.matrix @ shifted - system.rhs
    r[system.dofmap.rho_offset + space.mesh.n_elements - 1] = 0.0
    assert np.abs(r).max() < 1e-10


def test_dirichlet_rows_reproduce_boundary_moments():
    pr = get_problem("poly1")
    sol = solve_level(pr, 1, 1)
    from hdgmhd.system import boundary_moments
    mom = boundary_moments(sol.space, pr.bc, 8)
    bd = sol.space.mesh.boundary
    assert np.allclose(sol.trace[bd], mom[bd], atol=1e-13)


@pytest.mark.parametrize("name,level", [("hartmann", 1), ("lshaped", 2)])
def test_condensed_equals_monolithic(name, level):
    pr = get_problem(name)
    deg = degrees_for(pr, 1)
    a = solve_level(pr, 1, level, deg)
    b = solve_monolithic(a.space, pr.coeffs, pr.g, pr.f, pr.bc, deg)
    assert max(relative_differences(a, b).values()) < 1e-8


def test_monolithic_guard():
    pr = get_problem("lshaped")
    space = Space(pr.build_mesh(16), 2)
    with pytest.raises(ValueError):
        solve_monolithic(space, pr.coeffs, pr.g, pr.f, pr.bc)


def test_singular_matrix_raises():
    A = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(SolverError):
        solve(GlobalSystem(A, np.ones(2), SkeletonDofMap(0, 2, 1)))


def test_stats_and_format():
    sol = solve_level(get_problem("poly1"), 1, 1)
    text = format_stats(sol.stats)
    for key in ("dim", "nnz", "fill", "residual"):
        assert f"{key}=" in text


def test_dof_guard():
    with pytest.raises(ValueError, match="guard"):
        solve_level(get_problem("lshaped"), 1, 2, dof_limit=10)


def test_threads_do_not_change_the_solution():
    pr = get_problem("lshaped")
    from hdgmhd.system import solve_condensed
    space = Space(pr.build_mesh(3), 2)
    deg = degrees_for(pr, 2)
    a = solve_condensed(space, pr.coeffs, pr.g, pr.f, pr.bc, deg, threads=1)
    b = solve_condensed(space, pr.coeffs, pr.g, pr.f, pr.bc, deg, threads=2)
    assert np.array_equal(a.local, b.local)


@pytest.mark.parametrize("name", ["hartmann", "lshaped"])
@pytest.mark.parametrize("level", [1, 2, 3])
def test_closed_form_dof_estimate(name, level):
    from hdgmhd.study import estimated_dofs_for
    pr = get_problem(name)
    assert estimated_dofs_for(pr, 2, level) == estimated_dofs(pr.build_mesh(level), 2)
