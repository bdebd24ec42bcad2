"""Skeleton DOF map, global condensed assembly, sparse solve and field recovery.

Global unknowns are the edge traces followed by one pressure integral
``rho_K`` per element. Interior edges carry the three weak flux-continuity
conditions, boundary edges the weak Dirichlet conditions. The per-element
compatibility conditions ``<u_hat.n, 1>_dK + sum_K' rho_K' = 0`` are stored as
the sparse rows ``<u_hat.n, 1>_dK = 0`` plus a pin of one ``rho``; the
constant pressure mode (``rho_K += c |K|`` with unchanged traces) is then
removed after the solve to enforce ``sum rho = 0``, which keeps every row
sparse without changing the solution.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .local import CondensedElements, assemble_local, blocks, condense, recover_local
from .space import Space


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SkeletonDofMap:
    n_edges: int
    n_elements: int
    M: int

    @property
    def per_edge(self) -> int:
        return 4 * self.M

    @property
    def n_trace(self) -> int:
        return self.per_edge * self.n_edges

    @property
    def rho_offset(self) -> int:
        return self.n_trace

    @property
    def total(self) -> int:
        return self.n_trace + self.n_elements

    def edge_dofs(self, edges) -> np.ndarray:
        edges = np.asarray(edges)
        return edges[..., None] * self.per_edge + np.arange(self.per_edge)

    def element_dofs(self, element_edges) -> np.ndarray:
        """(E, 12 M) global trace indices in the element's local edge order."""
        return self.edge_dofs(element_edges).reshape(len(element_edges), -1)


@dataclass
class GlobalSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofmap: SkeletonDofMap
    stats: dict = field(default_factory=dict)


@dataclass
class BoundaryData:
    """Dirichlet data callables: velocity, tangential magnetic field (as a vector) and r."""

    u: object
    bt: object
    r: object


def boundary_moments(space: Space, bc: BoundaryData, degree: int) -> np.ndarray:
    """Edge L2 moments of the Dirichlet data, laid out like the trace unknowns: (n_edges, 4, M)."""
    mesh = space.mesh
    from .basis import edge_quadrature

    q = edge_quadrature(degree)
    lo = mesh.vertices[mesh.edges[:, 0]]
    hi = mesh.vertices[mesh.edges[:, 1]]
    length = mesh.edge_lengths()
    x = lo[:, None, :] + q.points[None, :, None] * (hi - lo)[:, None, :]
    w = q.weights[None, :] * length[:, None]
    psi = space.edge_basis.eval(q.points)[None] / np.sqrt(length)[:, None, None]
    te = mesh.edge_tangents()
    uD = bc.u(x)
    bt = np.einsum("fqc,fc->fq", bc.bt(x), te)
    rD = bc.r(x)
    out = np.empty((mesh.n_edges, 4, space.M))
    out[:, 0] = np.einsum("fq,fq,fqm->fm", w, uD[..., 0], psi)
    out[:, 1] = np.einsum("fq,fq,fqm->fm", w, uD[..., 1], psi)
    out[:, 2] = np.einsum("fq,fq,fqm->fm", w, bt, psi)
    out[:, 3] = np.einsum("fq,fq,fqm->fm", w, rD, psi)
    return out


def assemble_global(ce: CondensedElements, bc: BoundaryData) -> GlobalSystem:
    """Condensed sparse system on traces and rho."""
    if ce.K is None:
        condense(ce)
    space = ce.space
    mesh = space.mesh
    E, M = mesh.n_elements, space.M
    dm = SkeletonDofMap(mesh.n_edges, E, M)
    t = 12 * M
    gd = dm.element_dofs(mesh.element_edges)              # (E, t)
    on_boundary = np.repeat(mesh.boundary[mesh.element_edges], 4 * M, axis=1)  # (E, t)

    rows, cols, vals = [], [], []
    keep = ~on_boundary
    R = np.broadcast_to(gd[:, :, None], (E, t, t))
    Cc = np.broadcast_to(gd[:, None, :], (E, t, t))
    mask = np.broadcast_to(keep[:, :, None], (E, t, t))
    rows.append(R[mask]); cols.append(Cc[mask]); vals.append(ce.K[mask])
    rho_col = dm.rho_offset + np.arange(E)
    rows.append(gd[keep]); cols.append(np.broadcast_to(rho_col[:, None], (E, t))[keep])
    vals.append(ce.k_rho[keep])
    rhs = np.zeros(dm.total)
    np.add.at(rhs, gd[keep], -ce.r0[keep])

    # weak Dirichlet rows (orthonormal edge basis: identity on the edge block)
    bedges = np.flatnonzero(mesh.boundary)
    bd = dm.edge_dofs(bedges).ravel()
    rows.append(bd); cols.append(bd); vals.append(np.ones(len(bd)))
    mom = boundary_moments(space, bc, ce.degrees.load)
    rhs[bd] = mom[bedges].reshape(-1)

    # compatibility rows <u_hat.n, 1>_dK = 0; the last one is redundant (the element
    # fluxes sum to the boundary data flux) and is replaced by the pin rho_last = 0
    last = E - 1
    fr = ce.flux_row
    er = np.repeat(dm.rho_offset + np.arange(E - 1), t)
    rows.append(er); cols.append(gd[:-1].ravel()); vals.append(fr[:-1].ravel())
    lr = dm.rho_offset + last
    rows.append(np.array([lr])); cols.append(np.array([lr])); vals.append(np.ones(1))

    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(dm.total, dm.total)).tocsr()
    A.eliminate_zeros()
    return GlobalSystem(A, rhs, dm, {"dim": dm.total, "nnz": A.nnz})


def _equilibrate(A: sp.csc_matrix):
    """Row then column max-norm scaling: returns (r, c) with diag(r) A diag(c) balanced."""
    absA = abs(A)
    r = 1.0 / np.maximum(absA.max(axis=1).toarray().ravel(), 1e-300)
    c = 1.0 / np.maximum((sp.diags(r) @ absA).max(axis=0).toarray().ravel(), 1e-300)
    return r, c


def solve(system: GlobalSystem, tol: float = 1e-10, max_refine: int = 4) -> np.ndarray:
    """Equilibrated sparse LU with iterative refinement.

    Raises :class:`SolverError` on a failed or inaccurate factorization.
    """
    A = sp.csc_matrix(system.matrix)
    b = system.rhs
    r, c = _equilibrate(A)
    As = sp.csc_matrix(sp.diags(r) @ A @ sp.diags(c))
    t0 = time.perf_counter()
    try:
        lu = sla.splu(As, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed: {exc}") from exc
    t1 = time.perf_counter()
    diag = np.abs(lu.U.diagonal())
    system.stats.update(factor_seconds=t1 - t0, fill=int(lu.L.nnz + lu.U.nnz),
                        min_pivot=float(diag.min()) if len(diag) else 0.0,
                        max_pivot=float(diag.max()) if len(diag) else 0.0)
    bs = r * b
    bnorm = np.linalg.norm(bs)
    bnorm = bnorm if bnorm > 0 else 1.0
    y = lu.solve(bs)
    res = np.linalg.norm(As @ y - bs) / bnorm
    steps = 0
    while steps < max_refine and np.isfinite(res) and res > 1e-15:
        y_new = y + lu.solve(bs - As @ y)
        res_new = np.linalg.norm(As @ y_new - bs) / bnorm
        steps += 1
        if not res_new < 0.5 * res:
            if res_new < res:
                y, res = y_new, res_new
            break
        y, res = y_new, res_new
    system.stats.update(residual=float(res), refinement_steps=steps)
    if not np.isfinite(res) or res > tol:
        raise SolverError(f"relative residual {res:.3e} exceeds {tol:g}; pivots in "
                          f"[{system.stats['min_pivot']:.3e}, {system.stats['max_pivot']:.3e}]")
    return c * y


def format_stats(stats: dict) -> str:
    keys = ["dim", "nnz", "fill", "factor_seconds", "residual", "refinement_steps"]
    return "\n".join(f"{k}={stats[k]}" for k in keys if k in stats)


@dataclass
class DiscreteSolution:
    """All recovered unknowns of one solve."""

    space: Space
    coeffs: object
    local: np.ndarray     # (E, 11 N)
    trace: np.ndarray     # (n_edges, 4, M)
    rho: np.ndarray       # (E,)
    condensed: CondensedElements | None = None
    stats: dict = field(default_factory=dict)

    def field(self, name: str) -> np.ndarray:
        """Coefficients (E, ncomp, N) of a local variable."""
        N = self.space.N
        sl = blocks(N)[name]
        return self.local[:, sl].reshape(len(self.local), -1, N)

    def element_traces(self) -> np.ndarray:
        return self.trace[self.space.mesh.element_edges].reshape(len(self.local), -1)

    def evaluate(self, name: str, degree: int):
        """Quadrature points, weights and values (E, Q, ncomp) of a local variable."""
        vt = self.space.volume(degree)
        vals = np.einsum("ecn,eqn->eqc", self.field(name), vt.phi)
        return vt, vals

    def constraint_defects(self) -> dict:
        """Relative defects of (p,1) = 0, sum rho = 0 and <u_hat.n, 1>_dK = 0."""
        sp_ = self.space
        means = sp_.element_means()
        p = self.field("p")[:, 0]
        pint = np.einsum("en,en->e", p, means)
        pabs = np.sqrt(np.sum(p * p)) * np.sqrt(sp_.geom.areas.sum())
        flux = np.einsum("et,et->e", self.condensed.flux_row, self.element_traces()) \
            if self.condensed is not None else None
        out = {
            "p_mean": abs(pint.sum()) / max(pabs, 1e-300),
            "rho_sum": abs(self.rho.sum()) / max(np.abs(self.rho).sum(), pabs, 1e-300),
        }
        if flux is not None:
            E = sp_.mesh.n_elements
            et = sp_.edges(2 * sp_.k)
            uh = self.element_traces().reshape(E, 3, 4, sp_.M)[:, :, :2]
            scale = np.einsum("ejq,ejcm,ejqm->e", et.w, np.abs(uh), np.abs(et.psi))
            out["element_flux"] = float(np.max(np.abs(flux) / np.maximum(scale, 1e-300))) \
                if np.any(scale > 0) else float(np.abs(flux).max())
        return out


def recover_fields(ce: CondensedElements, x: np.ndarray) -> DiscreteSolution:
    space = ce.space
    mesh = space.mesh
    dm = SkeletonDofMap(mesh.n_edges, mesh.n_elements, space.M)
    trace = x[:dm.n_trace].reshape(mesh.n_edges, 4, space.M)
    rho = x[dm.rho_offset:dm.rho_offset + mesh.n_elements].copy()
    # remove the pressure mode: sum rho = 0
    area = space.geom.areas
    rho -= area * rho.sum() / area.sum()
    lam = trace[mesh.element_edges].reshape(mesh.n_elements, -1)
    loc = recover_local(ce, lam, rho)
    return DiscreteSolution(space, ce.coeffs, loc, trace, rho, ce)


def solve_condensed(space: Space, coeffs, g, f, bc: BoundaryData, degrees=None,
                    threads: int = 1, flux_sign: float = 1.0) -> DiscreteSolution:
    """Full pipeline: local assembly, condensation, global solve, recovery."""
    t0 = time.perf_counter()
    ce = assemble_local(space, coeffs, g, f, degrees, flux_sign=flux_sign)
    condense(ce, threads=threads)
    t1 = time.perf_counter()
    system = assemble_global(ce, bc)
    x = solve(system)
    sol = recover_fields(ce, x)
    sol.stats = dict(system.stats, local_seconds=t1 - t0)
    return sol


MONOLITHIC_LIMIT = 20000


def solve_monolithic(space: Space, coeffs, g, f, bc: BoundaryData, degrees=None) -> DiscreteSolution:
    """Uncondensed solve of the original scheme with one multiplier for (p_h, 1) = 0.

    The multiplier enters every element's continuity rows through ``(q, 1)_K``;
    the consistent right-hand side makes it vanish, so the solution is that
    of the original scheme.
    """
    ce = assemble_local(space, coeffs, g, f, degrees)
    mesh = space.mesh
    E, M, N = mesh.n_elements, space.M, space.N
    n = 11 * N
    t = 12 * M
    dm = SkeletonDofMap(mesh.n_edges, E, M)
    nloc = E * n
    total = nloc + dm.n_trace + 1
    if total > MONOLITHIC_LIMIT:
        raise ValueError(f"monolithic system of dimension {total} exceeds the {MONOLITHIC_LIMIT} guard")
    p = blocks(N)["p"]
    A0 = ce.A.copy()
    A0[:, p, p] -= ce.aug
    means = space.element_means()

    ldofs = (np.arange(E) * n)[:, None] + np.arange(n)
    gd = nloc + dm.element_dofs(mesh.element_edges)
    mult = total - 1
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rr, cc = np.broadcast_arrays(r, c)
        rows.append(rr.ravel()); cols.append(cc.ravel()); vals.append(np.broadcast_to(v, rr.shape).ravel())

    add(ldofs[:, :, None], ldofs[:, None, :], A0)
    add(ldofs[:, :, None], gd[:, None, :], -ce.B)
    add(ldofs[:, p], np.full((E, N), mult), means)
    rhs = np.zeros(total)
    rhs[:nloc] = ce.F.ravel()

    bnd = np.repeat(mesh.boundary[mesh.element_edges], 4 * M, axis=1)
    keep = ~bnd
    rC = np.broadcast_to(gd[:, :, None], (E, t, n))
    cC = np.broadcast_to(ldofs[:, None, :], (E, t, n))
    mk = np.broadcast_to(keep[:, :, None], (E, t, n))
    rows.append(rC[mk]); cols.append(cC[mk]); vals.append(ce.C[mk])
    rD = np.broadcast_to(gd[:, :, None], (E, t, t))
    cD = np.broadcast_to(gd[:, None, :], (E, t, t))
    mD = np.broadcast_to(keep[:, :, None], (E, t, t))
    rows.append(rD[mD]); cols.append(cD[mD]); vals.append(ce.D[mD])

    bedges = np.flatnonzero(mesh.boundary)
    bd = nloc + dm.edge_dofs(bedges).ravel()
    add(bd, bd, 1.0)
    rhs[bd] = boundary_moments(space, bc, ce.degrees.load)[bedges].reshape(-1)
    add(np.full((E, N), mult), ldofs[:, p], means)

    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(total, total)).tocsr()
    system = GlobalSystem(A, rhs, dm, {"dim": total, "nnz": A.nnz})
    x = solve(system)
    loc = x[:nloc].reshape(E, n)
    trace = x[nloc:nloc + dm.n_trace].reshape(mesh.n_edges, 4, M)
    p_int = np.einsum("en,en->e", loc[:, p], means)
    sol = DiscreteSolution(space, coeffs, loc, trace, p_int, ce, dict(system.stats))
    sol.stats["multiplier"] = float(x[mult])
    return sol
