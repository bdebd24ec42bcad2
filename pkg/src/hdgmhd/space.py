"""Per-element quadrature tables for the broken spaces P_k(K) and P_k(e).

Element basis functions are scaled to be orthonormal on the physical
element, ``phi = phi_ref / sqrt(det J)``; edge functions are orthonormal on
the physical edge and parameterized from the edge's lower to its higher
vertex index so both neighbours see the same trace coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import EdgeBasis, TriangleBasis, dim_p, edge_quadrature, triangle_quadrature
from .mesh import Mesh


@dataclass(frozen=True)
class VolumeTable:
    x: np.ndarray      # (E, Q, 2) physical points
    w: np.ndarray      # (E, Q) physical weights
    phi: np.ndarray    # (E, Q, N)
    grad: np.ndarray   # (E, Q, N, 2)


@dataclass(frozen=True)
class EdgeTable:
    x: np.ndarray      # (E, 3, Q, 2)
    w: np.ndarray      # (E, 3, Q)
    phi: np.ndarray    # (E, 3, Q, N) element basis on its own edges
    psi: np.ndarray    # (E, 3, Q, M) edge basis
    normal: np.ndarray   # (E, 3, 2) outward
    tangent: np.ndarray  # (E, 3, 2) normal rotated counter-clockwise
    sign: np.ndarray     # (E, 3) tangent . global edge tangent (+1 or -1)


class Space:
    """Discrete spaces of order ``k`` on a mesh, with cached quadrature tables."""

    def __init__(self, mesh: Mesh, k: int):
        if k < 0:
            raise ValueError("order must be >= 0")
        self.mesh = mesh
        self.k = k
        self.basis = TriangleBasis(k)
        self.edge_basis = EdgeBasis(k)
        self.N = dim_p(k)
        self.M = k + 1
        self.geom = mesh.geometry()
        self._vol: dict[int, VolumeTable] = {}
        self._edge: dict[int, EdgeTable] = {}

    @property
    def n_local(self) -> int:
        return 11 * self.N

    @property
    def n_trace(self) -> int:
        """Trace unknowns per edge: two velocity components, tangential b, r."""
        return 4 * self.M

    def eval_at(self, x: np.ndarray, elem=None):
        """Physical basis values and gradients at points ``x (E, ..., 2)`` of each element."""
        g = self.geom
        if elem is None:
            elem = slice(None)
        xi = g.to_reference(x, None if isinstance(elem, slice) else elem)
        scale = 1.0 / np.sqrt(g.det[elem])
        shp = (-1,) + (1,) * (x.ndim - 1)
        phi = self.basis.eval(xi) * scale.reshape(shp)
        gref = self.basis.eval_grad(xi)                       # (E, ..., N, 2)
        inv = g.inv[elem]
        flat = gref.reshape(len(inv), -1, 2)
        grad = np.einsum("emc,ecj->emj", flat, inv).reshape(gref.shape)
        grad *= scale.reshape(shp + (1,))
        return phi, grad

    def volume(self, degree: int) -> VolumeTable:
        if degree not in self._vol:
            q = triangle_quadrature(degree)
            x = self.geom.to_physical(q.points)
            w = q.weights[None, :] * self.geom.det[:, None]
            scale = 1.0 / np.sqrt(self.geom.det)
            phi = self.basis.eval(q.points)[None] * scale[:, None, None]
            gref = self.basis.eval_grad(q.points)             # (Q, N, 2)
            grad = np.einsum("qnc,ecj->eqnj", gref, self.geom.inv) * scale[:, None, None, None]
            self._vol[degree] = VolumeTable(x, w, phi, grad)
        return self._vol[degree]

    def edges(self, degree: int) -> EdgeTable:
        if degree not in self._edge:
            mesh = self.mesh
            q = edge_quadrature(degree)
            ge = mesh.element_edges                           # (E, 3)
            lo = mesh.vertices[mesh.edges[ge, 0]]             # (E, 3, 2)
            hi = mesh.vertices[mesh.edges[ge, 1]]
            length = mesh.edge_lengths()[ge]                  # (E, 3)
            x = lo[:, :, None, :] + q.points[None, None, :, None] * (hi - lo)[:, :, None, :]
            w = q.weights[None, None, :] * length[:, :, None]
            phi, _ = self.eval_at(x)
            psi = self.edge_basis.eval(q.points)[None, None] / np.sqrt(length)[:, :, None, None]
            normal = self.geom.normals
            tangent = np.stack([-normal[..., 1], normal[..., 0]], axis=-1)
            sign = np.sign(np.einsum("ejc,ejc->ej", tangent, mesh.edge_tangents()[ge]))
            self._edge[degree] = EdgeTable(x, w, phi, np.broadcast_to(psi, w.shape + (self.M,)),
                                           normal, tangent, sign)
        return self._edge[degree]

    # field evaluation helpers -------------------------------------------------
    def element_means(self, degree: int | None = None) -> np.ndarray:
        """(phi_i, 1)_K for each element: (E, N)."""
        vt = self.volume(degree if degree is not None else 2 * self.k)
        return np.einsum("eq,eqn->en", vt.w, vt.phi)

    def l2_project(self, func, degree: int, ncomp: int | None = None) -> np.ndarray:
        """Elementwise L2 projection coefficients: (E, N) or (E, ncomp, N)."""
        vt = self.volume(degree)
        vals = np.asarray(func(vt.x))
        if vals.ndim == 2:
            return np.einsum("eq,eq,eqn->en", vt.w, vals, vt.phi)
        return np.einsum("eq,eqc,eqn->ecn", vt.w, vals.reshape(vals.shape[:2] + (-1,)), vt.phi)
