"""Backward-Euler time stepping of the u-p problem and output-grid sampling."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import DivergenceError, InvalidInput, NumericalFailure
from .assembly import (BlockSystem, MaterialField, assemble_operators,
                       flux_load, nodes_on_tag, p1_basis, p2_basis,
                       traction_load)
from .mesh import Mesh

MECH_KINDS = ("fixed", "roller-x", "roller-z", "traction")
HYD_KINDS = ("pressure", "flux")


@dataclass
class ProblemDef:
    """Mesh, material-independent data, and boundary/initial conditions.

    ``mech_bcs`` maps every boundary tag to "fixed", "roller-x", "roller-z"
    or ("traction", (tx, tz)); ``hyd_bcs`` maps every tag to ("pressure", v)
    or ("flux", v) with v the outward normal flux of the Darcy velocity.
    """

    mesh: Mesh
    nu: float
    dt: float
    t_end: float
    mech_bcs: dict
    hyd_bcs: dict
    body_force: tuple = (0.0, 0.0)
    u0: np.ndarray | None = None
    p0: np.ndarray | None = None

    def __post_init__(self):
        if self.dt <= 0:
            raise InvalidInput("dt must be positive")
        if self.t_end < self.dt:
            raise InvalidInput("t_end must cover at least one step")
        if not 0.0 < self.nu < 0.5:
            raise InvalidInput("Poisson's ratio must lie in (0, 0.5)")
        tags = {t for t in self.mesh.boundary_tags.values()}
        for name, bcs, kinds in (("mech_bcs", self.mech_bcs, MECH_KINDS),
                                 ("hyd_bcs", self.hyd_bcs, HYD_KINDS)):
            if set(bcs) != tags:
                raise InvalidInput(f"{name} must cover exactly the tags {sorted(tags)}")
            for tag, cond in bcs.items():
                kind = cond[0] if isinstance(cond, tuple) else cond
                if kind not in kinds:
                    raise InvalidInput(f"unknown {name} condition {cond!r} on {tag!r}")


@dataclass
class TransientSolution:
    """Snapshots of one forward solve, nodal and sampled on the output grid."""

    times: np.ndarray                     # (n_t,)
    nodal_u: np.ndarray                   # (n_t, 2, n_p2) displacement components
    nodal_p: np.ndarray                   # (n_t, n_p1)
    sample_points: np.ndarray             # (n_pts, 2)
    sampled: dict = field(default_factory=dict)  # {"u_x"|"u_z"|"p": (n_t, n_pts)}
    max_residual: float = 0.0             # max relative step residual


def assemble(problem: ProblemDef, mat: MaterialField) -> BlockSystem:
    """Assemble the block operators of one backward-Euler step (pre-BC)."""
    return assemble_operators(problem.mesh, mat, problem.nu, problem.body_force)


def _dirichlet_sets(problem: ProblemDef):
    """Collect constrained dof indices in the (u, p) block vector."""
    mesh = problem.mesh
    n_u = 2 * mesh.n_p2_nodes
    u_fixed: set[int] = set()
    for tag, cond in problem.mech_bcs.items():
        kind = cond[0] if isinstance(cond, tuple) else cond
        if kind == "traction":
            continue
        nodes = nodes_on_tag(mesh, tag, order=2)
        if kind in ("fixed", "roller-x"):
            u_fixed.update(2 * nodes)
        if kind in ("fixed", "roller-z"):
            u_fixed.update(2 * nodes + 1)
    p_fixed: dict[int, float] = {}
    for tag, cond in problem.hyd_bcs.items():
        if cond[0] == "pressure":
            for n in nodes_on_tag(mesh, tag, order=1):
                p_fixed[int(n)] = float(cond[1])
    idx = np.array(sorted(u_fixed) + [n_u + n for n in sorted(p_fixed)], dtype=int)
    vals = np.concatenate([np.zeros(len(u_fixed)),
                           np.array([p_fixed[n] for n in sorted(p_fixed)])])
    return idx, vals


def _eliminate(M: sp.csr_matrix, idx: np.ndarray) -> sp.csr_matrix:
    """Zero constrained rows/columns symmetrically and set unit diagonals."""
    n = M.shape[0]
    mask = np.ones(n)
    mask[idx] = 0.0
    Dm = sp.diags(mask)
    ones = sp.coo_matrix((np.ones(idx.size), (idx, idx)), shape=M.shape)
    return (Dm @ M @ Dm + ones).tocsr()


def _external_loads(problem: ProblemDef, system: BlockSystem):
    f_t = system.f_body.copy()
    for tag, cond in problem.mech_bcs.items():
        if isinstance(cond, tuple) and cond[0] == "traction":
            f_t += traction_load(problem.mesh, tag, cond[1])
    g = np.zeros(system.n_p)
    for tag, cond in problem.hyd_bcs.items():
        if cond[0] == "flux" and cond[1] != 0.0:
            g += flux_load(problem.mesh, tag, float(cond[1]))
    return f_t, g


def sample_fields(mesh: Mesh, u: np.ndarray, p: np.ndarray, points):
    """Evaluate (u_x, u_z, p) at arbitrary points by FE interpolation."""
    tri, ref = mesh.locate(points)
    N2 = p2_basis(ref)                       # (n_pts, 6)
    N1 = p1_basis(ref)                       # (n_pts, 3)
    conn2 = mesh.tri_p2()[tri]               # (n_pts, 6)
    conn1 = mesh.triangles[tri]              # (n_pts, 3)
    ux = np.einsum("pa,pa->p", u[0][conn2], N2)
    uz = np.einsum("pa,pa->p", u[1][conn2], N2)
    pv = np.einsum("pa,pa->p", p[conn1], N1)
    return ux, uz, pv


def solve_transient(problem: ProblemDef, mat: MaterialField,
                    output_points, output_times,
                    store_nodal: bool = True) -> TransientSolution:
    """March the coupled system with backward Euler and sample outputs.

    Output times must coincide with step multiples (the fast path) or fall
    between two steps, in which case nodal fields are interpolated linearly
    in time before sampling.
    """
    mesh = problem.mesh
    dt = problem.dt
    n_steps = int(round(problem.t_end / dt))
    if abs(n_steps * dt - problem.t_end) > 1e-9 * max(1.0, problem.t_end):
        raise InvalidInput("t_end must be an integer number of steps")

    times = np.asarray(output_times, dtype=float)
    if np.any(times <= 0) or np.any(times > problem.t_end + 1e-9):
        raise InvalidInput("output times must lie in (0, t_end]")
    out_pts = np.atleast_2d(np.asarray(output_points, dtype=float))

    system = assemble(problem, mat)
    M = system.block_matrix(dt)
    dir_idx, dir_vals = _dirichlet_sets(problem)
    M_bc = _eliminate(M, dir_idx)
    # constant Dirichlet correction: subtract M[:, idx] @ vals from the rhs
    corr = M.tocsc()[:, dir_idx] @ dir_vals if dir_idx.size else 0.0

    try:
        lu = spla.splu(M_bc.tocsc())
    except RuntimeError as exc:
        raise NumericalFailure(
            f"singular step matrix after boundary conditions: {exc}") from exc

    f_t, g = _external_loads(problem, system)
    n_u = 2 * system.n_u2

    u = np.zeros(n_u) if problem.u0 is None else np.asarray(problem.u0, float).copy()
    p = np.zeros(system.n_p) if problem.p0 is None else np.asarray(problem.p0, float).copy()
    if u.shape != (n_u,) or p.shape != (system.n_p,):
        raise InvalidInput("initial fields have wrong shape")

    # map each output time onto (step index, interpolation weight)
    steps_float = times / dt
    steps_lo = np.floor(steps_float - 1e-9).astype(int)
    frac = steps_float - steps_lo
    exact = np.abs(frac - np.round(frac)) < 1e-9
    steps_hi = np.where(exact, np.round(steps_float).astype(int), steps_lo + 1)

    need_at = {}
    for j, t in enumerate(times):
        if exact[j]:
            need_at.setdefault(int(steps_hi[j]), []).append((j, 1.0, None))
        else:
            need_at.setdefault(int(steps_lo[j]), []).append((j, 1.0 - frac[j], "lo"))
            need_at.setdefault(int(steps_hi[j]), []).append((j, frac[j], "hi"))

    n_t = times.size
    nodal_u = np.zeros((n_t, 2, system.n_u2))
    nodal_p = np.zeros((n_t, system.n_p))
    max_res = 0.0

    def record(step, u_now, p_now):
        for (j, w, _part) in need_at.get(step, ()):
            nodal_u[j, 0] += w * u_now[0::2]
            nodal_u[j, 1] += w * u_now[1::2]
            nodal_p[j] += w * p_now

    record(0, u, p)
    for step in range(1, n_steps + 1):
        rhs = np.concatenate([f_t - system.K @ u, dt * g])
        rhs = rhs - corr
        rhs[dir_idx] = dir_vals
        x = lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"non-finite solution at step {step}")
        res = np.linalg.norm(M_bc @ x - rhs)
        scale = np.linalg.norm(rhs)
        max_res = max(max_res, res / scale if scale > 0 else res)
        u = u + x[:n_u]
        p = x[n_u:]
        record(step, u, p)

    sampled = {"u_x": np.empty((n_t, out_pts.shape[0])),
               "u_z": np.empty((n_t, out_pts.shape[0])),
               "p": np.empty((n_t, out_pts.shape[0]))}
    for j in range(n_t):
        ux, uz, pv = sample_fields(mesh, nodal_u[j], nodal_p[j], out_pts)
        sampled["u_x"][j] = ux
        sampled["u_z"][j] = uz
        sampled["p"][j] = pv

    return TransientSolution(
        times=times,
        nodal_u=nodal_u if store_nodal else np.zeros((0, 2, 0)),
        nodal_p=nodal_p if store_nodal else np.zeros((0, 0)),
        sample_points=out_pts,
        sampled=sampled,
        max_residual=float(max_res),
    )
