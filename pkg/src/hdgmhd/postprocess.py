"""Element-by-element reconstruction of exactly solenoidal velocity and magnetic fields.

The reconstruction lives in ``P_k(K)^2`` (the BDM space) and is fixed by
edge normal moments, moments against gradients of ``P_{k-1}`` and curl
moments weighted with the cubic bubble ``l0 l1 l2``. The curl moments are
taken against ``q`` in ``P_{k-2}``, which spans the same functionals as
``curl v`` for ``v`` in the filtered Nedelec space ``S_{k-1}`` (see
:func:`curl_image_rank`).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .basis import dim_p, triangle_quadrature
from .space import Space


@dataclass
class PostprocessedField:
    name: str
    coef: np.ndarray              # (E, 2, N)
    space: Space

    def evaluate(self, degree: int):
        vt = self.space.volume(degree)
        return vt, np.einsum("ecn,eqn->eqc", self.coef, vt.phi)

    def divergence(self, degree: int) -> np.ndarray:
        """Pointwise divergence at volume quadrature points: (E, Q)."""
        vt = self.space.volume(degree)
        return np.einsum("ecn,eqnc->eq", self.coef, vt.grad)

    def diagnostics(self, degree: int | None = None) -> dict:
        """Relative pointwise divergence and normal-trace jump.

        Both are scaled by the largest pointwise gradient (divergence) or
        value (jump) of the reconstructed field.
        """
        deg = 2 * self.space.k + 2 if degree is None else degree
        vt = self.space.volume(deg)
        grad = np.einsum("ecn,eqnj->eqcj", self.coef, vt.grad)
        div = np.abs(grad[..., 0, 0] + grad[..., 1, 1]).max()
        gscale = max(np.abs(grad).max(), 1e-300)
        jump, vscale = normal_jump(self.space, self.coef, deg)
        return {"div_max": float(div / gscale), "normal_jump": float(jump / max(vscale, 1e-300))}


def normal_jump(space: Space, coef: np.ndarray, degree: int):
    """Max normal-trace jump across interior edges and the max edge value."""
    mesh = space.mesh
    et = space.edges(degree)
    vals = np.einsum("ecn,ejqn->ejqc", coef, et.phi)
    vn = np.einsum("ejqc,ejc->ejq", vals, et.normal)          # outward from each element
    per_edge = np.zeros((mesh.n_edges, et.w.shape[2]))
    np.add.at(per_edge, mesh.element_edges, vn)               # both sides share the global point order
    interior = mesh.interior
    jump = np.abs(per_edge[interior]).max() if np.any(interior) else 0.0
    return float(jump), float(np.abs(vals).max())


def _system(space: Space, degree: int):
    """Left-hand side (E, 2N, 2N) and the test tables reused by the right-hand sides."""
    k, N, M = space.k, space.N, space.M
    if k < 1:
        raise ValueError("post-processing needs k >= 1")
    E = space.mesh.n_elements
    n1, n2 = dim_p(k - 1), dim_p(k - 2) if k >= 2 else 0
    vt = space.volume(degree)
    et = space.edges(degree)
    ref = triangle_quadrature(degree).points
    bubble = (1.0 - ref[:, 0] - ref[:, 1]) * ref[:, 0] * ref[:, 1]     # (Q,)
    A = np.zeros((E, 2 * N, 2 * N))
    row = 0
    for j in range(3):
        wpsi = et.w[:, j, :, None] * et.psi[:, j]
        for c in range(2):
            A[:, row:row + M, c * N:(c + 1) * N] = et.normal[:, j, c, None, None] * np.einsum(
                "eqm,eqn->emn", wpsi, et.phi[:, j])
        row += M
    gtest = vt.grad[:, :, 1:n1, :]                                       # grad of non-constant P_{k-1}
    for c in range(2):
        A[:, row:row + n1 - 1, c * N:(c + 1) * N] = np.einsum("eq,eqi,eqn->ein", vt.w, gtest[..., c], vt.phi)
    row += n1 - 1
    btest = vt.w[..., None] * bubble[None, :, None] * vt.phi[:, :, :n2]  # (E, Q, n2)
    if n2:
        A[:, row:row + n2, :N] = -np.einsum("eqi,eqn->ein", btest, vt.grad[..., 1])
        A[:, row:row + n2, N:] = np.einsum("eqi,eqn->ein", btest, vt.grad[..., 0])
    row += n2
    assert row == 2 * N
    return A, gtest, btest, n1, n2


def _reconstruct(space: Space, edge_data, field_coef, curl_target, degree: int) -> np.ndarray:
    """Solve for ``P_k^2`` coefficients from edge normal data (E, 3, Q), the field and curl target."""
    N, M = space.N, space.M
    A, gtest, btest, n1, n2 = _system(space, degree)
    et = space.edges(degree)
    vt = space.volume(degree)
    E = A.shape[0]
    rhs = np.zeros((E, 2 * N))
    rhs[:, :3 * M] = np.einsum("ejq,ejqm,ejq->ejm", et.w, et.psi, edge_data).reshape(E, -1)
    vals = np.einsum("ecn,eqn->eqc", field_coef, vt.phi)
    row = 3 * M
    rhs[:, row:row + n1 - 1] = np.einsum("eq,eqic,eqc->ei", vt.w, gtest, vals)
    row += n1 - 1
    if n2:
        target = np.einsum("en,eqn->eq", curl_target, vt.phi)
        rhs[:, row:row + n2] = np.einsum("eqi,eq->ei", btest, target)
    try:
        x = np.linalg.solve(A, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("singular post-processing system") from exc
    return x.reshape(E, 2, N)


def postprocess_u(sol, degree: int | None = None) -> PostprocessedField:
    """Solenoidal velocity matching ``u_hat.n`` on edges; curl target ``Re (L21 - L12)``."""
    space = sol.space
    deg = 2 * space.k + 2 if degree is None else degree
    et = space.edges(deg)
    E = space.mesh.n_elements
    tr = sol.element_traces().reshape(E, 3, 4, space.M)
    uhat = np.einsum("ejcm,ejqm->ejqc", tr[:, :, :2], et.psi)
    data = np.einsum("ejqc,ejc->ejq", uhat, et.normal)
    L = sol.field("L")
    target = sol.coeffs.Re * (L[:, 2] - L[:, 1])
    return PostprocessedField("u", _reconstruct(space, data, sol.field("u"), target, deg), space)


def postprocess_b(sol, degree: int | None = None) -> PostprocessedField:
    """Solenoidal magnetic field matching ``b.n + alpha3 (r - r_hat)``; curl target ``(Rm/kappa) H``."""
    space = sol.space
    co = sol.coeffs
    deg = 2 * space.k + 2 if degree is None else degree
    et = space.edges(deg)
    E = space.mesh.n_elements
    tr = sol.element_traces().reshape(E, 3, 4, space.M)
    rhat = np.einsum("ejm,ejqm->ejq", tr[:, :, 3], et.psi)
    bvals = np.einsum("ecn,ejqn->ejqc", sol.field("b"), et.phi)
    rvals = np.einsum("en,ejqn->ejq", sol.field("r")[:, 0], et.phi)
    data = np.einsum("ejqc,ejc->ejq", bvals, et.normal) + co.alpha3 * (rvals - rhat)
    target = co.Rm / co.kappa * sol.field("H")[:, 0]
    return PostprocessedField("b", _reconstruct(space, data, sol.field("b"), target, deg), space)


def postprocessed_error(field: PostprocessedField, exact, degree: int | None = None) -> float:
    deg = 2 * field.space.k + 6 if degree is None else degree
    vt, vals = field.evaluate(deg)
    ex = exact(vt.x)
    return float(np.sqrt(np.sum(vt.w[..., None] * (vals - ex) ** 2)))


def curl_image_rank(k: int) -> tuple[int, int, int]:
    """``(dim S_{k-1}, rank of curl on S_{k-1}, dim P_{k-2})`` on the reference triangle.

    ``S_{k-1}`` is the part of ``N_{k-1} = P_{k-2}^2 + {v homogeneous of
    degree k-1, v.x = 0}`` orthogonal to gradients of ``P_{k-1}``; curl maps
    it onto ``P_{k-2}`` exactly when the rank equals ``dim P_{k-2}``.
    """
    if k < 2:
        return 0, 0, 0
    q = triangle_quadrature(2 * k + 2)
    X, Y = q.points[:, 0], q.points[:, 1]
    # basis of N_{k-1}: values and curls at quadrature points
    vals, curls = [], []
    for a in range(k - 1):
        for b in range(k - 1 - a):
            m = X ** a * Y ** b
            mx = a * X ** max(a - 1, 0) * Y ** b if a else 0 * X
            my = b * X ** a * Y ** max(b - 1, 0) if b else 0 * X
            vals.append(np.stack([m, 0 * m], -1)); curls.append(-my)
            vals.append(np.stack([0 * m, m], -1)); curls.append(mx)
    for a in range(k - 1):
        b = k - 2 - a
        m = X ** a * Y ** b                       # homogeneous degree k-2
        mx = a * X ** max(a - 1, 0) * Y ** b if a else 0 * X
        my = b * X ** a * Y ** max(b - 1, 0) if b else 0 * X
        # v = m (-y, x): curl = d1(m x) + d2(m y) = k m after Euler's relation
        vals.append(np.stack([-Y * m, X * m], -1)); curls.append(mx * X + m + my * Y + m)
    V = np.array(vals)                             # (nN, Q, 2)
    C = np.array(curls)                            # (nN, Q)
    grads = []
    for a in range(k):
        for b in range(k - a):
            if a + b == 0:
                continue
            gx = a * X ** max(a - 1, 0) * Y ** b if a else 0 * X
            gy = b * X ** a * Y ** max(b - 1, 0) if b else 0 * X
            grads.append(np.stack([gx, gy], -1))
    G = np.array(grads)
    cons = np.einsum("q,iqc,jqc->ji", q.weights, V, G)          # (n_grad, nN)
    # null space of the gradient constraints
    _, s, vh = np.linalg.svd(cons)
    rank_c = int(np.sum(s > 1e-10 * s.max()))
    null = vh[rank_c:].T                                         # (nN, dimS)
    dimS = null.shape[1]
    curl_S = null.T @ C                                          # (dimS, Q) curl values
    mono = np.array([X ** a * Y ** b for a in range(k - 1) for b in range(k - 1 - a)])
    # express curls in P_{k-2} by L2 projection, then measure rank
    Gm = np.einsum("q,iq,jq->ij", q.weights, mono, mono)
    coef = np.linalg.solve(Gm, np.einsum("q,iq,sq->is", q.weights, mono, curl_S))
    resid = curl_S - (mono.T @ coef).T
    if np.abs(resid).max() > 1e-9 * max(np.abs(curl_S).max(), 1.0):
        raise AssertionError("curl of S_{k-1} left P_{k-2}")
    sv = np.linalg.svd(coef, compute_uv=False)
    rank = int(np.sum(sv > 1e-10 * max(sv.max(), 1e-300))) if sv.size else 0
    return dimS, rank, dim_p(k - 2)


# --- sample export --------------------------------------------------------

SAMPLE_BARY = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1 / 3, 1 / 3, 1 / 3]])


def sample_rows(space: Space, fields: dict):
    """Rows ``(elem, x, y, values...)`` at the vertices and centroid of every element.

    ``fields`` maps a name to coefficients (E, ncomp, N).
    """
    ref = SAMPLE_BARY[:, 1:]
    E = space.mesh.n_elements
    x = space.geom.to_physical(ref)                               # (E, 4, 2)
    phi = space.basis.eval(ref)[None] / np.sqrt(space.geom.det)[:, None, None]
    header = ["elem", "x", "y"]
    cols = []
    for name, coef in fields.items():
        vals = np.einsum("ecn,eqn->eqc", coef, phi)
        nc = vals.shape[-1]
        header += [name] if nc == 1 else [f"{name}{c + 1}" for c in range(nc)]
        cols.append(vals)
    data = np.concatenate(cols, axis=-1) if cols else np.zeros((E, len(ref), 0))
    rows = []
    for e in range(E):
        for q in range(len(ref)):
            rows.append([e, x[e, q, 0], x[e, q, 1], *data[e, q]])
    return header, rows


def write_samples(path, space: Space, fields: dict):
    header, rows = sample_rows(space, fields)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([r[0]] + [f"{v:.16e}" for v in r[1:]])
