"""Element matrices and block-system assembly for Taylor-Hood poroelasticity.

Weak form of the backward-Euler step with unknowns (du, p_next):

    [ K   -B^T ] [du    ]   [ f_ext - K u_n ]
    [ -B  -dt L] [p_next] = [ -dt g         ]

where K is the plane-strain elastic stiffness on vector P2, B the
divergence coupling (P1 test x P2 trial), L the permeability-weighted
pressure Laplacian on P1, and g collects prescribed-boundary-flux terms.
The block matrix is symmetric indefinite; Dirichlet rows are eliminated
symmetrically by the solver.  Displacement dofs interleave as 2*node + comp.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import InvalidInput
from .mesh import Mesh

# ---------------------------------------------------------------------------
# Reference-triangle quadrature (6 points, degree 4) and shape functions
# ---------------------------------------------------------------------------

_A1, _W1 = 0.445948490915965, 0.223381589678011
_A2, _W2 = 0.091576213509771, 0.109951743655322

# (xi, eta) = (L2, L3); weights include the reference-triangle measure 1/2
TRI_QUAD_POINTS = np.array([
    (_A1, _A1), (1.0 - 2.0 * _A1, _A1), (_A1, 1.0 - 2.0 * _A1),
    (_A2, _A2), (1.0 - 2.0 * _A2, _A2), (_A2, 1.0 - 2.0 * _A2,),
])
TRI_QUAD_WEIGHTS = 0.5 * np.array([_W1, _W1, _W1, _W2, _W2, _W2])
TRI_QUAD = (TRI_QUAD_POINTS, TRI_QUAD_WEIGHTS)

_DL = np.array([(-1.0, -1.0), (1.0, 0.0), (0.0, 1.0)])  # barycentric gradients


def p1_basis(ref_pts: np.ndarray) -> np.ndarray:
    xi, eta = ref_pts[:, 0], ref_pts[:, 1]
    return np.column_stack([1.0 - xi - eta, xi, eta])


def p2_basis(ref_pts: np.ndarray) -> np.ndarray:
    L = p1_basis(ref_pts)
    L1, L2, L3 = L[:, 0], L[:, 1], L[:, 2]
    return np.column_stack([
        L1 * (2 * L1 - 1), L2 * (2 * L2 - 1), L3 * (2 * L3 - 1),
        4 * L1 * L2, 4 * L2 * L3, 4 * L3 * L1,
    ])


def p2_grad(ref_pts: np.ndarray) -> np.ndarray:
    """(nq, 6, 2) reference gradients of the quadratic basis."""
    L = p1_basis(ref_pts)
    nq = ref_pts.shape[0]
    g = np.empty((nq, 6, 2))
    for i in range(3):
        g[:, i, :] = (4 * L[:, i, None] - 1) * _DL[i]
    pairs = ((0, 1), (1, 2), (2, 0))
    for k, (i, j) in enumerate(pairs):
        g[:, 3 + k, :] = 4 * (L[:, i, None] * _DL[j] + L[:, j, None] * _DL[i])
    return g


def plane_strain_stiffness(E: float, nu: float) -> np.ndarray:
    """3x3 constitutive matrix acting on (eps_xx, eps_zz, gamma_xz)."""
    if not 0.0 < nu < 0.5:
        raise InvalidInput("Poisson's ratio must lie in (0, 0.5)")
    f = E / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return f * np.array([
        [1.0 - nu, nu, 0.0],
        [nu, 1.0 - nu, 0.0],
        [0.0, 0.0, 0.5 * (1.0 - 2.0 * nu)],
    ])


# ---------------------------------------------------------------------------
# Material field
# ---------------------------------------------------------------------------

@dataclass
class MaterialField:
    """Stiffness scale and permeability evaluated at the quadrature points.

    ``k_quad[t, q]`` is the (nondimensional) permeability at quadrature point
    q of triangle t.  Nondimensional benchmark problems keep ``mu_f = 1`` and
    fold their scale algebra into ``E`` and ``k_quad``; the Poisson ratio
    comes from the problem definition at assembly time.
    """

    k_quad: np.ndarray
    E: float = 1.0
    mu_f: float = 1.0

    def __post_init__(self):
        self.k_quad = np.asarray(self.k_quad, dtype=float)
        if np.any(self.k_quad <= 0) or not np.all(np.isfinite(self.k_quad)):
            raise InvalidInput("permeability must be positive and finite")
        if self.E <= 0 or self.mu_f <= 0:
            raise InvalidInput("E and mu_f must be positive")

    @classmethod
    def from_nodal_log(cls, mesh: Mesh, log_k_nodal, E: float = 1.0,
                       mu_f: float = 1.0, k_multiplier: float = 1.0) -> "MaterialField":
        """Permeability as exp of the P1-interpolated nodal log field.

        Interpolating the log field linearly and exponentiating afterwards
        keeps the permeability positive for any nodal values.
        """
        vals = np.asarray(log_k_nodal, dtype=float)
        if vals.shape != (mesh.n_vertices,):
            raise InvalidInput("log-permeability must be a P1 nodal vector")
        N1 = p1_basis(TRI_QUAD_POINTS)               # (nq, 3)
        tri_vals = vals[mesh.triangles]              # (nt, 3)
        log_q = tri_vals @ N1.T                      # (nt, nq)
        return cls(k_quad=float(k_multiplier) * np.exp(log_q), E=E, mu_f=mu_f)

    @classmethod
    def homogeneous(cls, mesh: Mesh, k: float = 1.0, E: float = 1.0,
                    mu_f: float = 1.0) -> "MaterialField":
        nq = TRI_QUAD_POINTS.shape[0]
        return cls(k_quad=np.full((mesh.n_triangles, nq), float(k)), E=E, mu_f=mu_f)


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

def _geometry(mesh: Mesh):
    p = mesh.vertices[mesh.triangles]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)  # (nt,2,2) columns
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    if np.any(det <= 0):
        raise InvalidInput("mesh contains non-CCW or degenerate triangles")
    inv = np.empty_like(J)
    inv[:, 0, 0] = J[:, 1, 1]
    inv[:, 0, 1] = -J[:, 0, 1]
    inv[:, 1, 0] = -J[:, 1, 0]
    inv[:, 1, 1] = J[:, 0, 0]
    inv /= det[:, None, None]
    invJT = np.transpose(inv, (0, 2, 1))
    return invJT, det


@dataclass
class BlockSystem:
    """Assembled operators of the backward-Euler poroelastic step."""

    K: sp.csr_matrix        # (2*n_u2, 2*n_u2) elastic stiffness
    B: sp.csr_matrix        # (n_p, 2*n_u2) divergence coupling
    L: sp.csr_matrix        # (n_p, n_p) Darcy stiffness
    f_body: np.ndarray      # (2*n_u2,) body-force load
    n_u2: int               # number of P2 nodes
    n_p: int                # number of P1 nodes

    def block_matrix(self, dt: float) -> sp.csr_matrix:
        """Symmetric indefinite matrix [[K, -B^T], [-B, -dt L]]."""
        return sp.bmat([[self.K, -self.B.T], [-self.B, -dt * self.L]],
                       format="csr")


def assemble_operators(mesh: Mesh, mat: MaterialField, nu: float,
                       body_force=(0.0, 0.0)) -> BlockSystem:
    """Assemble K, B, L and the body-force vector on the given mesh."""
    nq = TRI_QUAD_POINTS.shape[0]
    if mat.k_quad.shape != (mesh.n_triangles, nq):
        raise InvalidInput("material k_quad shape does not match the mesh")

    invJT, det = _geometry(mesh)
    gref = p2_grad(TRI_QUAD_POINTS)                 # (nq, 6, 2)
    N2 = p2_basis(TRI_QUAD_POINTS)                  # (nq, 6)
    N1 = p1_basis(TRI_QUAD_POINTS)                  # (nq, 3)
    D = plane_strain_stiffness(mat.E, nu)
    wq = TRI_QUAD_WEIGHTS

    nt = mesh.n_triangles
    n_u2 = mesh.n_p2_nodes
    n_p = mesh.n_vertices
    conn2 = mesh.tri_p2()                           # (nt, 6)
    conn1 = mesh.triangles                          # (nt, 3)

    Ke = np.zeros((nt, 12, 12))
    Be = np.zeros((nt, 3, 12))
    fe = np.zeros((nt, 12))
    bf = np.asarray(body_force, dtype=float)
    for q in range(nq):
        gphys = np.einsum("tij,aj->tai", invJT, gref[q])   # (nt, 6, 2)
        # strain-displacement matrix, dof order (n0x, n0z, n1x, n1z, ...)
        Bm = np.zeros((nt, 3, 12))
        Bm[:, 0, 0::2] = gphys[:, :, 0]
        Bm[:, 1, 1::2] = gphys[:, :, 1]
        Bm[:, 2, 0::2] = gphys[:, :, 1]
        Bm[:, 2, 1::2] = gphys[:, :, 0]
        scale = wq[q] * det
        Ke += scale[:, None, None] * np.einsum("tpi,pq,tqj->tij", Bm, D, Bm)
        # div of trial dof (a, c) is gphys[:, a, c]
        divrow = np.empty((nt, 12))
        divrow[:, 0::2] = gphys[:, :, 0]
        divrow[:, 1::2] = gphys[:, :, 1]
        Be += scale[:, None, None] * N1[q][None, :, None] * divrow[:, None, :]
        if bf.any():
            fe[:, 0::2] += scale[:, None] * N2[q][None, :] * bf[0]
            fe[:, 1::2] += scale[:, None] * N2[q][None, :] * bf[1]

    # P1 gradients are constant per triangle; integrate the permeability once
    g1 = np.einsum("tij,aj->tai", invJT, _DL)               # (nt, 3, 2)
    kbar = (mat.k_quad / mat.mu_f) @ wq                     # (nt,)
    Le = (kbar * det)[:, None, None] * np.einsum("tai,tbi->tab", g1, g1)

    dof2 = np.empty((nt, 12), dtype=int)
    dof2[:, 0::2] = 2 * conn2
    dof2[:, 1::2] = 2 * conn2 + 1

    def scatter(rows, cols, vals, shape):
        return sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())),
                             shape=shape).tocsr()

    K = scatter(np.repeat(dof2, 12, axis=1), np.tile(dof2, (1, 12)), Ke,
                (2 * n_u2, 2 * n_u2))
    B = scatter(np.repeat(conn1, 12, axis=1), np.tile(dof2, (1, 3)), Be,
                (n_p, 2 * n_u2))
    L = scatter(np.repeat(conn1, 3, axis=1), np.tile(conn1, (1, 3)), Le,
                (n_p, n_p))

    f_body = np.zeros(2 * n_u2)
    np.add.at(f_body, dof2.ravel(), fe.ravel())
    return BlockSystem(K=K, B=B, L=L, f_body=f_body, n_u2=n_u2, n_p=n_p)


def traction_load(mesh: Mesh, tag: str, traction) -> np.ndarray:
    """Consistent P2 load vector of a constant traction on tagged edges.

    For a quadratic edge of length h the end nodes receive t*h/6 and the
    midpoint t*2h/3.
    """
    t = np.asarray(traction, dtype=float)
    f = np.zeros(2 * mesh.n_p2_nodes)
    for e in mesh.boundary_edges(tag):
        va, vb = mesh.edges[e]
        h = float(np.linalg.norm(mesh.vertices[vb] - mesh.vertices[va]))
        mid = mesh.n_vertices + e
        for c in range(2):
            f[2 * va + c] += t[c] * h / 6.0
            f[2 * vb + c] += t[c] * h / 6.0
            f[2 * mid + c] += t[c] * 2.0 * h / 3.0
    return f


def flux_load(mesh: Mesh, tag: str, outward_flux: float) -> np.ndarray:
    """P1 vector of integral(q_hat * psi) over tagged edges (outward normal flux)."""
    g = np.zeros(mesh.n_vertices)
    for e in mesh.boundary_edges(tag):
        va, vb = mesh.edges[e]
        h = float(np.linalg.norm(mesh.vertices[vb] - mesh.vertices[va]))
        g[va] += outward_flux * h / 2.0
        g[vb] += outward_flux * h / 2.0
    return g


def nodes_on_tag(mesh: Mesh, tag: str, order: int) -> np.ndarray:
    """Sorted node indices lying on tagged edges (order 1: vertices, 2: +midpoints)."""
    nodes = set()
    for e in mesh.boundary_edges(tag):
        va, vb = mesh.edges[e]
        nodes.add(int(va))
        nodes.add(int(vb))
        if order == 2:
            nodes.add(int(mesh.n_vertices + e))
    return np.array(sorted(nodes), dtype=int)
