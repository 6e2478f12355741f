"""Structured triangular meshes with quadratic (vertex+midpoint) node numbering.

Each rectangular cell is split along its v00-v11 diagonal into two
counterclockwise right triangles.  Displacement lives on P2 nodes (vertices
followed by edge midpoints), pressure on P1 vertices.  Boundary edges carry a
tag from {top, bottom, left, right, left-midlayer}.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInput

BOUNDARY_TAGS = ("top", "bottom", "left", "right", "left-midlayer")


@dataclass
class Mesh:
    vertices: np.ndarray        # (nv, 2)
    triangles: np.ndarray       # (nt, 3) vertex indices, CCW
    edges: np.ndarray           # (ne, 2) sorted vertex pairs
    tri_edges: np.ndarray       # (nt, 3) edge index of (v0v1, v1v2, v2v0)
    boundary_tags: dict = field(default_factory=dict)  # edge index -> tag
    # structured-grid metadata used for O(1) point location
    nx: int = 0
    nz: int = 0
    lx: float = 1.0
    lz: float = 1.0

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def n_p2_nodes(self) -> int:
        return self.n_vertices + self.n_edges

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    @property
    def p2_coords(self) -> np.ndarray:
        """Coordinates of all quadratic nodes (vertices then edge midpoints)."""
        return np.vstack([self.vertices, self.edge_midpoints])

    def tri_p2(self) -> np.ndarray:
        """(nt, 6) P2 connectivity: three vertices then the three midpoints."""
        return np.hstack([self.triangles, self.n_vertices + self.tri_edges])

    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def boundary_edges(self, tag: str) -> np.ndarray:
        return np.array([e for e, t in self.boundary_tags.items() if t == tag],
                        dtype=int)

    def locate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Map physical points to (triangle index, reference coordinates).

        Uses the structured layout directly; points are clipped into the
        domain, so querying exactly on the outer boundary is safe.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        dx = self.lx / self.nx
        dz = self.lz / self.nz
        fx = np.clip(pts[:, 0] / dx, 0.0, self.nx - 1e-12)
        fz = np.clip(pts[:, 1] / dz, 0.0, self.nz - 1e-12)
        ix = np.minimum(fx.astype(int), self.nx - 1)
        iz = np.minimum(fz.astype(int), self.nz - 1)
        s = fx - ix
        t = fz - iz
        lower = s >= t
        tri = 2 * (iz * self.nx + ix) + np.where(lower, 0, 1)
        xi = np.where(lower, s - t, s)
        eta = np.where(lower, t, t - s)
        return tri, np.column_stack([xi, eta])


def build_structured_mesh(nx: int, nz: int, lx: float, lz: float) -> Mesh:
    """Structured right-triangle mesh of [0,lx] x [0,lz] with nx x nz cells."""
    if nx < 1 or nz < 1:
        raise InvalidInput("cell counts must be >= 1")
    if lx <= 0 or lz <= 0:
        raise InvalidInput("domain lengths must be positive")

    x = np.linspace(0.0, lx, nx + 1)
    z = np.linspace(0.0, lz, nz + 1)
    X, Z = np.meshgrid(x, z, indexing="xy")
    vertices = np.column_stack([X.ravel(), Z.ravel()])  # index = iz*(nx+1)+ix

    tris = []
    for iz in range(nz):
        for ix in range(nx):
            v00 = iz * (nx + 1) + ix
            v10 = v00 + 1
            v01 = v00 + (nx + 1)
            v11 = v01 + 1
            tris.append((v00, v10, v11))  # lower (below the v00-v11 diagonal)
            tris.append((v00, v11, v01))  # upper
    triangles = np.array(tris, dtype=int)

    edge_index: dict[tuple, int] = {}
    tri_edges = np.empty((triangles.shape[0], 3), dtype=int)
    edge_use = []
    for t, (a, b, c) in enumerate(triangles):
        for k, (p, q) in enumerate(((a, b), (b, c), (c, a))):
            key = (p, q) if p < q else (q, p)
            e = edge_index.get(key)
            if e is None:
                e = len(edge_index)
                edge_index[key] = e
                edge_use.append(0)
            edge_use[e] += 1
            tri_edges[t, k] = e
    edges = np.array(list(edge_index), dtype=int)

    tags: dict[int, str] = {}
    tol = 1e-12 * max(lx, lz)
    mids = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])
    for e in range(edges.shape[0]):
        if edge_use[e] != 1:
            continue
        mx, mz = mids[e]
        if abs(mz) <= tol:
            tags[e] = "bottom"
        elif abs(mz - lz) <= tol:
            tags[e] = "top"
        elif abs(mx) <= tol:
            tags[e] = "left"
        elif abs(mx - lx) <= tol:
            tags[e] = "right"
        else:  # pragma: no cover - structured boundary is axis-aligned
            raise InvalidInput("boundary edge off the domain rectangle")

    return Mesh(vertices=vertices, triangles=triangles, edges=edges,
                tri_edges=tri_edges, boundary_tags=tags,
                nx=nx, nz=nz, lx=lx, lz=lz)


def tag_left_interval(mesh: Mesh, z_lo: float, z_hi: float,
                      tag: str = "left-midlayer") -> int:
    """Retag left-boundary edges whose midpoint falls in [z_lo, z_hi].

    Returns the number of edges retagged.  Used by the subsidence benchmark to
    mark the fluid-extraction segment of the left boundary.
    """
    mids = mesh.edge_midpoints
    n = 0
    for e, t in list(mesh.boundary_tags.items()):
        if t == "left" and z_lo - 1e-12 <= mids[e, 1] <= z_hi + 1e-12:
            mesh.boundary_tags[e] = tag
            n += 1
    return n
