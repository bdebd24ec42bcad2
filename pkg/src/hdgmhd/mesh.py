"""Structured triangle meshes for the channel and L-shaped domains, plus skeleton extraction.

Local edge ``j`` of a triangle joins its vertices ``j`` and ``j + 1 (mod 3)``.
Each skeleton edge is stored as a sorted vertex pair; its *owner* is the
adjacent element with the smaller index and the stored normal points out of
the owner.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MeshError(ValueError):
    """Raised for malformed connectivity."""


@dataclass(frozen=True)
class Mesh:
    """Immutable simplicial mesh with its skeleton.

    Attributes
    ----------
    vertices : (nv, 2) float array
    elements : (ne, 3) int array, counter-clockwise vertex triples
    edges : (nf, 2) int array, vertex pairs with ``edges[:, 0] < edges[:, 1]``,
        sorted lexicographically
    edge_elements : (nf, 2) int array, ``(owner, neighbor)``; neighbor is -1
        on the boundary
    edge_local : (nf, 2) int array, local edge index inside owner / neighbor
    edge_normals : (nf, 2) float array, unit normal out of the owner
    boundary : (nf,) bool array
    element_edges : (ne, 3) int array, global edge of each local edge
    """

    vertices: np.ndarray
    elements: np.ndarray
    edges: np.ndarray
    edge_elements: np.ndarray
    edge_local: np.ndarray
    edge_normals: np.ndarray
    boundary: np.ndarray
    element_edges: np.ndarray
    name: str = ""
    level: int = 0
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def interior(self) -> np.ndarray:
        return ~self.boundary

    @property
    def h(self) -> float:
        """Largest element diameter."""
        if "h" not in self._cache:
            self._cache["h"] = float(self.geometry().diameters.max())
        return self._cache["h"]

    def areas(self) -> np.ndarray:
        return self.geometry().areas

    def geometry(self) -> "ElementGeometry":
        if "geometry" not in self._cache:
            self._cache["geometry"] = ElementGeometry.from_mesh(self)
        return self._cache["geometry"]

    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def edge_tangents(self) -> np.ndarray:
        """Unit tangent of each edge, pointing from its lower to its higher vertex index."""
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return d / np.hypot(d[:, 0], d[:, 1])[:, None]

    def dump(self) -> str:
        """Plain-text dump with ``$vertices`` and ``$triangles`` blocks."""
        lines = ["$vertices"]
        lines += [f"{i} {x:.17g} {y:.17g}" for i, (x, y) in enumerate(self.vertices)]
        lines.append("$triangles")
        lines += [f"{i} {a} {b} {c}" for i, (a, b, c) in enumerate(self.elements)]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ElementGeometry:
    """Batched affine maps ``x = x0 + J xi`` from the reference triangle (0,0), (1,0), (0,1)."""

    origin: np.ndarray     # (ne, 2)
    jac: np.ndarray        # (ne, 2, 2), columns are v1 - v0 and v2 - v0
    det: np.ndarray        # (ne,)
    inv: np.ndarray        # (ne, 2, 2)
    edge_lengths: np.ndarray   # (ne, 3)
    normals: np.ndarray        # (ne, 3, 2), outward
    diameters: np.ndarray      # (ne,)

    @property
    def areas(self) -> np.ndarray:
        return 0.5 * self.det

    @classmethod
    def from_mesh(cls, mesh: Mesh) -> "ElementGeometry":
        xy = mesh.vertices[mesh.elements]         # (ne, 3, 2)
        origin = xy[:, 0]
        jac = np.stack([xy[:, 1] - xy[:, 0], xy[:, 2] - xy[:, 0]], axis=-1)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        inv = np.empty_like(jac)
        inv[:, 0, 0] = jac[:, 1, 1]
        inv[:, 1, 1] = jac[:, 0, 0]
        inv[:, 0, 1] = -jac[:, 0, 1]
        inv[:, 1, 0] = -jac[:, 1, 0]
        inv /= det[:, None, None]
        d = np.roll(xy, -1, axis=1) - xy            # edge j: v_{j+1} - v_j
        lengths = np.hypot(d[..., 0], d[..., 1])
        normals = np.stack([d[..., 1], -d[..., 0]], axis=-1) / lengths[..., None]
        return cls(origin, jac, det, inv, lengths, normals, lengths.max(axis=1))

    def to_reference(self, x: np.ndarray, elem: np.ndarray | None = None) -> np.ndarray:
        """Map physical points ``x[..., 2]`` (leading axis = element) back to the reference triangle."""
        if elem is None:
            o, inv = self.origin, self.inv
        else:
            o, inv = self.origin[elem], self.inv[elem]
        shape = (len(o),) + (1,) * (x.ndim - 2) + (2,)
        rel = x - o.reshape(shape)
        return np.einsum("e...j,eij->e...i", rel.reshape(len(o), -1, 2), inv).reshape(x.shape)

    def to_physical(self, xi: np.ndarray) -> np.ndarray:
        """Map reference points ``xi (nq, 2)`` into every element: returns (ne, nq, 2)."""
        return self.origin[:, None, :] + np.einsum("eij,qj->eqi", self.jac, xi)


def extract_skeleton(vertices, elements, name: str = "", level: int = 0) -> Mesh:
    """Deduplicate edges and classify them as interior or boundary.

    Raises
    ------
    MeshError
        If an edge is shared by more than two triangles or a triangle is
        not positively oriented.
    """
    vertices = np.asarray(vertices, dtype=float)
    elements = np.asarray(elements, dtype=np.int64).reshape(-1, 3)
    ne = len(elements)
    xy = vertices[elements]
    det = ((xy[:, 1, 0] - xy[:, 0, 0]) * (xy[:, 2, 1] - xy[:, 0, 1])
           - (xy[:, 1, 1] - xy[:, 0, 1]) * (xy[:, 2, 0] - xy[:, 0, 0]))
    if np.any(det <= 0):
        raise MeshError("triangles must be counter-clockwise with positive area")

    local = np.stack([elements, np.roll(elements, -1, axis=1)], axis=-1).reshape(-1, 2)
    key = np.sort(local, axis=1)
    edges, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if np.any(counts > 2):
        bad = edges[counts > 2]
        raise MeshError(f"{len(bad)} edge(s) shared by more than two triangles, e.g. {bad[0].tolist()}")

    nf = len(edges)
    elem_of = np.repeat(np.arange(ne), 3)
    loc_of = np.tile(np.arange(3), ne)
    # local slots come in element order, so the first hit is the owner
    order = np.argsort(inverse, kind="stable")
    first = np.ones(len(order), dtype=bool)
    first[1:] = inverse[order][1:] != inverse[order][:-1]
    edge_elements = np.full((nf, 2), -1, dtype=np.int64)
    edge_local = np.full((nf, 2), -1, dtype=np.int64)
    edge_elements[inverse[order[first]], 0] = elem_of[order[first]]
    edge_local[inverse[order[first]], 0] = loc_of[order[first]]
    edge_elements[inverse[order[~first]], 1] = elem_of[order[~first]]
    edge_local[inverse[order[~first]], 1] = loc_of[order[~first]]

    element_edges = inverse.reshape(ne, 3)
    boundary = edge_elements[:, 1] < 0

    own = edge_elements[:, 0]
    a = vertices[elements[own, edge_local[:, 0]]]
    b = vertices[elements[own, (edge_local[:, 0] + 1) % 3]]
    d = b - a
    normals = np.stack([d[:, 1], -d[:, 0]], axis=-1) / np.hypot(d[:, 0], d[:, 1])[:, None]

    return Mesh(vertices, elements, edges, edge_elements, edge_local, normals,
                boundary, element_edges, name=name, level=level)


def _grid_triangles(ix0: int, iy0: int, nx: int, ny: int, index) -> list[tuple[int, int, int]]:
    """Split each grid square along the top-right to bottom-left diagonal."""
    tris = []
    for j in range(ny):
        for i in range(nx):
            bl = index(ix0 + i, iy0 + j)
            br = index(ix0 + i + 1, iy0 + j)
            tr = index(ix0 + i + 1, iy0 + j + 1)
            tl = index(ix0 + i, iy0 + j + 1)
            tris.append((bl, br, tr))
            tris.append((bl, tr, tl))
    return tris


def _build(blocks, spacing: float, offset, name: str, level: int) -> Mesh:
    ids: dict[tuple[int, int], int] = {}

    def index(i, j):
        return ids.setdefault((i, j), len(ids))

    tris = []
    for ix0, iy0, nx, ny in blocks:
        tris += _grid_triangles(ix0, iy0, nx, ny, index)
    verts = np.empty((len(ids), 2))
    for (i, j), n in ids.items():
        verts[n] = (offset[0] + i * spacing, offset[1] + j * spacing)
    return extract_skeleton(verts, tris, name=name, level=level)


def build_hartmann_mesh(level: int) -> Mesh:
    """Channel [0, 0.025] x [-1, 1] split into ``level x 80*level`` squares."""
    if level < 1:
        raise ValueError("level must be >= 1")
    n = 80 * level
    return _build([(0, 0, level, n)], 0.025 / level, (0.0, -1.0), "hartmann", level)


def build_lshaped_mesh(level: int) -> Mesh:
    """(-1, 1)^2 minus [0, 1) x (-1, 0]; each of the three quadrants gets ``level x level`` squares."""
    if level < 1:
        raise ValueError("level must be >= 1")
    l = level
    blocks = [(-l, -l, l, l), (-l, 0, l, l), (0, 0, l, l)]
    return _build(blocks, 1.0 / l, (0.0, 0.0), "lshaped", level)


def single_triangle() -> Mesh:
    return extract_skeleton([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], name="triangle")
