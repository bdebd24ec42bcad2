"""Convergence-study driver shared by the command line, the verify suites and the tests."""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

from .analysis import ErrorRow, ErrorTable, l2_errors
from .local import QuadratureDegrees, QuadratureWarning
from .postprocess import postprocess_b, postprocess_u, postprocessed_error
from .problems import ManufacturedProblem
from .space import Space
from .system import DiscreteSolution, solve_condensed

DOF_LIMIT = 500_000


def estimated_dofs(mesh, k: int) -> int:
    """Dimension of the condensed system: four trace blocks per edge plus one rho per element."""
    return 4 * (k + 1) * mesh.n_edges + mesh.n_elements


def estimated_dofs_for(problem: ManufacturedProblem, k: int, level: int) -> int:
    """Closed-form :func:`estimated_dofs` for the structured meshes, without building them."""
    if problem.domain == "hartmann":
        cells, boundary = 80 * level * level, 2 * (level + 80 * level)
    else:
        cells, boundary = 3 * level * level, 8 * level
    n_elem = 2 * cells
    n_edges = (3 * n_elem + boundary) // 2
    return 4 * (k + 1) * n_edges + n_elem


def degrees_for(problem: ManufacturedProblem, k: int, form: int | None = None,
                load: int | None = None) -> QuadratureDegrees:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", QuadratureWarning)
        deg = QuadratureDegrees.default(k, problem.coeffs, form=form, load=load)
    if load is None:
        deg = QuadratureDegrees(deg.form, deg.load + problem.load_boost)
    return deg


def solve_level(problem: ManufacturedProblem, k: int, level: int, degrees: QuadratureDegrees | None = None,
                threads: int = 1, flux_sign: float = 1.0, dof_limit: int = DOF_LIMIT) -> DiscreteSolution:
    mesh = problem.build_mesh(level)
    n = estimated_dofs(mesh, k)
    if n > dof_limit:
        raise ValueError(f"level {level} needs about {n} global unknowns, above the {dof_limit} guard")
    deg = degrees if degrees is not None else degrees_for(problem, k)
    space = Space(mesh, k)
    return solve_condensed(space, problem.coeffs, problem.g, problem.f, problem.bc, deg,
                           threads=threads, flux_sign=flux_sign)


@dataclass
class LevelResult:
    level: int
    solution: DiscreteSolution
    errors: dict
    seconds: float
    post: dict = field(default_factory=dict)


def convergence_study(problem: ManufacturedProblem, k: int, levels, degrees: QuadratureDegrees | None = None,
                      threads: int = 1, postprocess: bool = False, keep: bool = False, callback=None):
    """Solve on every level and collect an :class:`ErrorTable`.

    With ``postprocess`` the post-processed velocity and magnetic field are
    built on every level and their errors and divergence diagnostics are
    stored in ``LevelResult.post``. Solutions are dropped unless ``keep``
    (the last one is always returned).
    """
    deg = degrees if degrees is not None else degrees_for(problem, k)
    table = ErrorTable(problem.name, k)
    results = []
    for level in levels:
        t0 = time.perf_counter()
        sol = solve_level(problem, k, level, deg, threads=threads)
        errs = l2_errors(sol, problem.exact, deg.load)
        mesh = sol.space.mesh
        table.add(ErrorRow(level, mesh.h, mesh.n_elements, sol.stats["dim"], errs))
        res = LevelResult(level, sol, errs, time.perf_counter() - t0)
        if postprocess:
            ub, bb = postprocess_u(sol), postprocess_b(sol)
            res.post = {
                "u": ub, "b": bb,
                "err_u": postprocessed_error(ub, problem.exact.u, deg.load),
                "err_b": postprocessed_error(bb, problem.exact.b, deg.load),
                "diag_u": ub.diagnostics(), "diag_b": bb.diagnostics(),
            }
        if results and not keep:
            results[-1].solution = None
            results[-1].post = {key: v for key, v in results[-1].post.items() if key not in ("u", "b")}
        results.append(res)
        if callback is not None:
            callback(res)
    return table, results
