"""The two benchmark problems end-to-end: geometry, boundary conditions,
covariance, output grids, architectures, dataset generation, training runs,
and truncation/error studies.

Both benchmarks are solved in nondimensional form.  The scale algebra folds
into the solver as follows: the canonical step system uses stiffness scale
E = A (the displacement constant of the scale set), permeability multiplied
by ``time_factor`` (1 for consolidation, (W/H)^2 for subsidence), and
prescribed boundary fluxes multiplied by the same factor.  With B = 1 the
solver fields are then exactly u/u* and p/p*; this mapping is verified
against a dimensional solve in the test suite.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import persist
from .errors import CompatibilityError, InvalidInput
from .neuralnet import OptimizerConfig
from .operator import (TrainDataset, choose_K, estimate_rank,
                       relative_test_error, root_relative_test_error,
                       train_two_step)
from .porofem import (MaterialField, ProblemDef, build_structured_mesh,
                      solve_transient, tag_left_interval)
from .randfield import (GENERATOR_ID, KIND_1D, KIND_2D, QUANTILE_ID,
                        CovarianceSpec, kl_decompose, lhs_normal, log_field,
                        uniform_grid_1d, uniform_grid_2d)
from .scaling import (DimensionalParams, consolidation_scales,
                      subsidence_scales)

CONSOLIDATION = "consolidation"
SUBSIDENCE = "subsidence"
PROFILES = ("full", "desk")

# optimizer schedule shared by both benchmarks; per-profile epochs below
_OPT_FULL = dict(adamw_epochs=5000, batch_fraction=0.25, lr0=1e-3,
                 trunk_decay=0.99, branch_decay=0.98, decay_every=100,
                 decay_per="iteration", weight_decay=1e-4,
                 lbfgs_max_iter=10000, lbfgs_tol=1e-10, lbfgs_memory=10,
                 stop_tol=0.0)
_OPT_DESK = dict(_OPT_FULL, adamw_epochs=1000, lbfgs_max_iter=500,
                 stop_tol=1e-13)


@dataclass
class BenchmarkSpec:
    """Everything needed to reproduce one benchmark study."""

    kind: str
    sigma: float
    l_x: float
    l_z: float | None
    nu: float
    mesh_nx: int
    mesh_nz: int
    domain_lx: float
    domain_lz: float
    dt: float
    t_end: float
    output_xs: tuple
    output_zs: tuple
    output_times: tuple
    kl_kind: str
    kl_grid: str                 # "mesh-vertices" or "line-x"
    kl_line_points: int
    mu_kappa: float              # mean log-permeability (outer layers if layered)
    layer_contrast: float        # added to mu_kappa inside the middle layer
    layer_fractions: tuple | None
    m_data: int
    m_candidates: tuple
    n_train: int
    n_test: int
    variables: tuple
    trunk_hidden: dict           # variable -> hidden widths
    branch_hidden: tuple
    k_multiplier: float
    rank_tau: float
    optimizer: dict
    profile: str

    def __post_init__(self):
        if self.kind not in (CONSOLIDATION, SUBSIDENCE):
            raise InvalidInput(f"unknown benchmark kind {self.kind!r}")
        if self.m_data > self.kl_points_count():
            raise InvalidInput("m_data exceeds the number of K-L grid points")
        if max(self.m_candidates) > self.m_data:
            raise InvalidInput("an M candidate exceeds the stored mode count m_data")
        if max(self.output_times) > self.t_end + 1e-12:
            raise InvalidInput("output times exceed t_end")

    def kl_points_count(self) -> int:
        if self.kl_grid == "line-x":
            return self.kl_line_points
        return (self.mesh_nx + 1) * (self.mesh_nz + 1)

    @property
    def m_y(self) -> int:
        return len(self.output_xs) * len(self.output_zs) * len(self.output_times)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("output_xs", "output_zs", "output_times", "m_candidates",
                    "variables", "branch_hidden"):
            d[key] = list(d[key])
        d["layer_fractions"] = list(d["layer_fractions"]) if d["layer_fractions"] else None
        d["trunk_hidden"] = {k: list(v) for k, v in d["trunk_hidden"].items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkSpec":
        d = dict(d)
        for key in ("output_xs", "output_zs", "output_times", "m_candidates",
                    "variables", "branch_hidden"):
            d[key] = tuple(d[key])
        if d.get("layer_fractions"):
            d["layer_fractions"] = tuple(d["layer_fractions"])
        d["trunk_hidden"] = {k: tuple(v) for k, v in d["trunk_hidden"].items()}
        return cls(**d)


def consolidation_spec(sigma: float, l_x: float, l_z: float,
                       profile: str = "full", **overrides) -> BenchmarkSpec:
    """Traction-driven consolidation benchmark on the unit square.

    Full profile: 20x20 mesh (spacing 0.05), 8000/2000 samples, the published
    architectures and truncation-order candidates.  The desk profile shrinks
    the mesh, sample counts, and optimizer schedule so a complete study runs
    in minutes.
    """
    if profile not in PROFILES:
        raise InvalidInput(f"profile must be one of {PROFILES}")
    desk = profile == "desk"
    base = dict(
        kind=CONSOLIDATION, sigma=float(sigma), l_x=float(l_x), l_z=float(l_z),
        nu=0.4,
        mesh_nx=10 if desk else 20, mesh_nz=10 if desk else 20,
        domain_lx=1.0, domain_lz=1.0,
        dt=0.01, t_end=1.0,
        output_xs=tuple(np.round(np.linspace(0, 1, 11), 10)),
        output_zs=tuple(np.round(np.linspace(0, 1, 11), 10)),
        output_times=tuple(np.round(np.arange(1, 11) * 0.1, 10)),
        kl_kind=KIND_2D, kl_grid="mesh-vertices", kl_line_points=0,
        mu_kappa=0.0, layer_contrast=0.0, layer_fractions=None,
        m_data=40 if desk else 400,
        m_candidates=(20,) if desk else (20, 40, 60, 80, 100, 400),
        n_train=400 if desk else 8000, n_test=100 if desk else 2000,
        variables=("u_z", "p"),
        trunk_hidden={"u_z": (256, 256, 256), "p": (64, 64, 32)},
        branch_hidden=(64, 64, 64, 64),
        k_multiplier=1.5, rank_tau=0.01,
        optimizer=dict(_OPT_DESK if desk else _OPT_FULL),
        profile=profile,
    )
    base.update(overrides)
    return BenchmarkSpec(**base)


def subsidence_spec(sigma: float, l_x: float, profile: str = "full",
                    **overrides) -> BenchmarkSpec:
    """Flux-driven subsidence benchmark on [0,1] x [0,0.1] with three layers.

    The middle layer (0.4 of the height) carries the heterogeneous field with
    mean log-permeability 3 units above the outer layers; spatial variability
    is horizontal only.  A unit extraction discharge acts on the left edge of
    the middle layer.
    """
    if profile not in PROFILES:
        raise InvalidInput(f"profile must be one of {PROFILES}")
    desk = profile == "desk"
    base = dict(
        kind=SUBSIDENCE, sigma=float(sigma), l_x=float(l_x), l_z=None,
        nu=0.25,
        mesh_nx=20 if desk else 40, mesh_nz=6 if desk else 10,
        domain_lx=1.0, domain_lz=0.1,
        dt=0.01, t_end=1.0,
        output_xs=tuple(np.round(np.linspace(0, 1, 21), 10)),
        output_zs=tuple(np.round(np.linspace(0, 0.1, 6), 10)),
        output_times=tuple(np.round(np.arange(1, 11) * 0.1, 10)),
        kl_kind=KIND_1D, kl_grid="line-x", kl_line_points=41 if desk else 81,
        mu_kappa=0.0, layer_contrast=3.0, layer_fractions=(0.3, 0.4, 0.3),
        m_data=40 if desk else 80,
        m_candidates=(20,) if desk else (15, 20, 25, 40, 80),
        n_train=400 if desk else 8000, n_test=100 if desk else 2000,
        variables=("u_x", "u_z", "p"),
        trunk_hidden={"u_x": (64, 64, 64, 64), "u_z": (64, 64, 64, 64),
                      "p": (64, 64, 64, 128)},
        branch_hidden=(64, 64, 64, 64),
        k_multiplier=1.5, rank_tau=0.01,
        optimizer=dict(_OPT_DESK if desk else _OPT_FULL),
        profile=profile,
    )
    base.update(overrides)
    return BenchmarkSpec(**base)


# ---------------------------------------------------------------------------
# Problem construction
# ---------------------------------------------------------------------------

@dataclass
class ProblemContext:
    """Mesh, solver problem, K-L basis, and scale set of one benchmark."""

    spec: BenchmarkSpec
    mesh: object
    problem: ProblemDef
    basis: object
    scale: object
    output_points: np.ndarray     # (n_pts, 2)
    coords: np.ndarray            # (m_y, 3) with t outermost, then z, then x
    middle_mask: np.ndarray | None = None   # vertices inside the middle layer
    line_x: np.ndarray | None = None        # K-L line grid (subsidence)

    def nodal_log_permeability(self, xi_row, n_modes: int) -> np.ndarray:
        """Nondimensional nodal log k (already referenced to kappa_star)."""
        lf = log_field(self.basis, xi_row, n_modes) - self.basis.kappa_star
        if self.spec.kl_grid == "mesh-vertices":
            return lf
        g = np.interp(self.mesh.vertices[:, 0], self.line_x, lf)
        out = np.where(self.middle_mask, g, -self.spec.layer_contrast)
        return out

    def material(self, xi_row, n_modes: int) -> MaterialField:
        return MaterialField.from_nodal_log(
            self.mesh, self.nodal_log_permeability(xi_row, n_modes),
            E=self.scale.A, mu_f=1.0, k_multiplier=self.scale.time_factor)

    def solve(self, xi_row, n_modes: int, store_nodal: bool = False):
        return solve_transient(self.problem, self.material(xi_row, n_modes),
                               self.output_points, self.spec.output_times,
                               store_nodal=store_nodal)


def output_coords(spec: BenchmarkSpec) -> tuple[np.ndarray, np.ndarray]:
    """(spatial points, stacked (x, z, t) coordinates); t varies slowest."""
    pts = np.array([(x, z) for z in spec.output_zs for x in spec.output_xs])
    coords = np.array([(x, z, t) for t in spec.output_times
                       for (x, z) in pts])
    return pts, coords


def scale_set(spec: BenchmarkSpec):
    """Scale set of the benchmark for unit dimensional parameters.

    The reference permeability is exp of the mean log-permeability; for the
    layered subsidence problem that is the middle-layer (aquifer) mean, which
    fixes the k_d ambiguity of the flux scaling deterministically.
    """
    if spec.kind == CONSOLIDATION:
        params = DimensionalParams(E=1.0, nu=spec.nu, mu_f=1.0,
                                   k_star=float(np.exp(spec.mu_kappa)),
                                   mu_kappa=spec.mu_kappa, L=1.0, t0=1.0)
        return consolidation_scales(params)
    mu_mid = spec.mu_kappa + spec.layer_contrast
    params = DimensionalParams(E=1.0, nu=spec.nu, mu_f=1.0,
                               k_star=float(np.exp(mu_mid)), mu_kappa=mu_mid,
                               W=spec.domain_lx, H=spec.domain_lz, q0=1.0)
    return subsidence_scales(params)


def build_context(spec: BenchmarkSpec) -> ProblemContext:
    mesh = build_structured_mesh(spec.mesh_nx, spec.mesh_nz,
                                 spec.domain_lx, spec.domain_lz)
    scale = scale_set(spec)
    cov = CovarianceSpec(spec.kl_kind, spec.sigma, spec.l_x, spec.l_z or 1.0)

    if spec.kind == CONSOLIDATION:
        mech = {"top": ("traction", (0.0, -1.0)), "bottom": "fixed",
                "left": "roller-x", "right": "roller-x"}
        hyd = {"top": ("pressure", 0.0), "bottom": ("flux", 0.0),
               "left": ("flux", 0.0), "right": ("flux", 0.0)}
        grid = uniform_grid_2d(spec.mesh_nx, spec.mesh_nz,
                               spec.domain_lx, spec.domain_lz)
        basis = kl_decompose(grid, cov, mu_kappa=spec.mu_kappa,
                             kappa_star=spec.mu_kappa)
        middle_mask = None
        line_x = None
    else:
        h = spec.domain_lz
        f_bot, f_mid, _ = spec.layer_fractions
        z_lo, z_hi = f_bot * h, (f_bot + f_mid) * h
        n = tag_left_interval(mesh, z_lo, z_hi)
        if n == 0:
            raise InvalidInput("mesh too coarse to resolve the extraction layer")
        gamma = scale.time_factor
        mech = {"top": ("traction", (0.0, 0.0)), "bottom": "fixed",
                "left": "roller-x", "right": "roller-x",
                "left-midlayer": "roller-x"}
        # extraction: outward normal flux +1 nondimensional, scaled by gamma
        hyd = {"top": ("pressure", 0.0), "bottom": ("flux", 0.0),
               "left": ("flux", 0.0), "right": ("flux", 0.0),
               "left-midlayer": ("flux", gamma * 1.0)}
        grid = uniform_grid_1d(spec.kl_line_points, spec.domain_lx)
        mu_mid = spec.mu_kappa + spec.layer_contrast
        basis = kl_decompose(grid, cov, mu_kappa=mu_mid, kappa_star=mu_mid)
        zs = mesh.vertices[:, 1]
        middle_mask = (zs >= z_lo - 1e-12) & (zs <= z_hi + 1e-12)
        line_x = grid.points[:, 0]

    problem = ProblemDef(mesh=mesh, nu=spec.nu, dt=spec.dt, t_end=spec.t_end,
                         mech_bcs=mech, hyd_bcs=hyd)
    pts, coords = output_coords(spec)
    return ProblemContext(spec=spec, mesh=mesh, problem=problem, basis=basis,
                          scale=scale, output_points=pts, coords=coords,
                          middle_mask=middle_mask, line_x=line_x)


# ---------------------------------------------------------------------------
# Dataset generation (resumable, optionally parallel)
# ---------------------------------------------------------------------------

_WORKER_CTX: ProblemContext | None = None
_WORKER_XI: np.ndarray | None = None


def _worker_init(ctx: ProblemContext, xi: np.ndarray) -> None:
    global _WORKER_CTX, _WORKER_XI
    _WORKER_CTX = ctx
    _WORKER_XI = xi


def _solve_row(i: int) -> dict:
    sol = _WORKER_CTX.solve(_WORKER_XI[i], _WORKER_CTX.spec.m_data)
    return {v: sol.sampled[v].ravel() for v in _WORKER_CTX.spec.variables}


def generate_dataset(spec: BenchmarkSpec, out_dir, seed: int = 0,
                     workers: int = 1) -> dict:
    """Create (or resume, or verify) a dataset directory; returns its manifest.

    Every row is a pure function of (spec, seed, row index), so parallel
    generation with any worker count writes byte-identical matrices.
    """
    out = persist.ensure_writable(out_dir)
    spec_dict = spec.to_dict()
    manifest_path = out / "manifest.json"
    if manifest_path.exists():
        manifest = persist.read_json(manifest_path)
        if (manifest.get("spec_sha256") == persist.spec_hash(spec_dict)
                and manifest.get("seed") == seed):
            return manifest  # already complete
        raise persist.DataError(
            f"{out} already holds a different dataset; choose another directory")

    state_path = out / "gen_state.json"
    n_total = spec.n_train + spec.n_test
    if state_path.exists():
        state = persist.read_json(state_path)
        if state["spec_sha256"] != persist.spec_hash(spec_dict) or state["seed"] != seed:
            raise persist.DataError(
                f"{out} holds a partial run of a different spec/seed")
        done = state["completed"]
    else:
        state = {"spec_sha256": persist.spec_hash(spec_dict), "seed": seed,
                 "completed": 0}
        done = 0
        for var in spec.variables:
            (out / f"f_{var.replace('_', '')}.part").write_bytes(b"")

    ctx = build_context(spec)
    sample = lhs_normal(n_total, spec.m_data, seed)
    row_bytes = spec.m_y * 8
    for var in spec.variables:
        part = out / f"f_{var.replace('_', '')}.part"
        if part.stat().st_size != done * row_bytes:
            raise persist.DataError(f"partial file {part} out of sync with progress")

    t0 = time.perf_counter()
    parts = {v: open(out / f"f_{v.replace('_', '')}.part", "ab") for v in spec.variables}
    try:
        indices = range(done, n_total)
        if workers > 1 and len(indices) > 0:
            with get_context("fork").Pool(workers, initializer=_worker_init,
                                          initargs=(ctx, sample.xi)) as pool:
                for i, rows in zip(indices, pool.imap(_solve_row, indices)):
                    for var, row in rows.items():
                        parts[var].write(np.ascontiguousarray(row, dtype="<f8").tobytes())
                    state["completed"] = i + 1
                    persist.write_json(state_path, state)
        else:
            _worker_init(ctx, sample.xi)
            for i in indices:
                rows = _solve_row(i)
                for var, row in rows.items():
                    parts[var].write(np.ascontiguousarray(row, dtype="<f8").tobytes())
                state["completed"] = i + 1
                persist.write_json(state_path, state)
    finally:
        for fh in parts.values():
            fh.close()
    fem_seconds = time.perf_counter() - t0

    fields = {}
    for var in spec.variables:
        raw = (out / f"f_{var.replace('_', '')}.part").read_bytes()
        fields[var] = np.frombuffer(raw, dtype="<f8").reshape(n_total, spec.m_y).copy()

    kl_arrays = {
        "kl_eigenvalues": ctx.basis.eigenvalues[None, :],
        "kl_eigenfunctions": ctx.basis.eigenfunctions,
        "kl_points": ctx.basis.grid.points,
        "kl_weights": ctx.basis.grid.weights[None, :],
    }
    manifest = persist.save_dataset(
        out, spec_dict, seed, f"{GENERATOR_ID}/{QUANTILE_ID}",
        xi=sample.xi, coords=ctx.coords, fields=fields, kl_arrays=kl_arrays,
        scale_set=ctx.scale.to_dict(),
        extra={"kl_mu_kappa": ctx.basis.mu_kappa,
               "kl_kappa_star": ctx.basis.kappa_star,
               "kl_modes_retained": ctx.basis.n_retained,
               "coord_order": "t-major, then z, then x"})
    persist.write_timings(out, {"fem_seconds": fem_seconds, "n_samples": n_total})
    for var in spec.variables:
        (out / f"f_{var.replace('_', '')}.part").unlink()
    state_path.unlink()
    return manifest


# ---------------------------------------------------------------------------
# Training and evaluation
# ---------------------------------------------------------------------------

def train_variable(dataset: persist.DatasetDir, variable: str, m_modes: int,
                   out_dir, seed: int = 0, k_multiplier: float | None = None,
                   opt_overrides: dict | None = None):
    """Two-step training of one variable at truncation order ``m_modes``.

    Returns (model, checkpoint manifest).  The checkpoint stores A, B*, and R
    so the orthonormalization identity can be re-verified from disk.
    """
    spec = BenchmarkSpec.from_dict(dataset.manifest["spec"])
    if variable not in dataset.variables:
        raise CompatibilityError(
            f"dataset holds {dataset.variables}, not {variable!r}")
    if m_modes > dataset.xi.shape[1]:
        raise InvalidInput(
            f"M={m_modes} exceeds the {dataset.xi.shape[1]} stored modes")

    xi_tr, f_tr = dataset.train_split(variable)
    ds = TrainDataset(xi_tr[:, :m_modes], f_tr, dataset.coords, variable)

    hidden = spec.trunk_hidden[variable]
    rank = estimate_rank(f_tr, tau=spec.rank_tau)
    if rank < 1:
        rank = 1
    K = choose_K(rank, k_multiplier or spec.k_multiplier,
                 cap=min(spec.m_y, hidden[-1]))

    opt = dict(spec.optimizer)
    if opt_overrides:
        opt.update(opt_overrides)
    trunk_decay = opt.pop("trunk_decay")
    branch_decay = opt.pop("branch_decay")
    trunk_opt = OptimizerConfig(decay_factor=trunk_decay, seed=seed, **opt)
    branch_opt = OptimizerConfig(decay_factor=branch_decay, seed=seed, **opt)

    t0 = time.perf_counter()
    model, info = train_two_step(ds, (3, *hidden, K - 1),
                                 (m_modes, *spec.branch_hidden, K),
                                 trunk_opt, branch_opt)
    train_seconds = time.perf_counter() - t0

    out = persist.ensure_writable(out_dir)
    manifest = persist.save_checkpoint(
        out, model, trunk_opt, branch_opt, dataset.manifest,
        a_matrix=info["trunk_fit"].A, b_star=info["basis"].B_star,
        r_matrix=info["basis"].R,
        curves=info["trunk_curve"] + info["branch_curve"],
        extra={"rank_estimate": int(rank),
               "trunk_final_loss": info["trunk_fit"].final_loss})
    persist.write_timings(out, {"train_seconds": train_seconds})
    return model, manifest


def evaluate_model(model, dataset: persist.DatasetDir, split: str = "test",
                   baseline: str | None = None) -> dict:
    """Relative test error of a model (or a trivial baseline) on a dataset split."""
    if model.variable not in dataset.variables:
        raise CompatibilityError(
            f"model predicts {model.variable!r}; dataset holds {dataset.variables}")
    if model.M > dataset.xi.shape[1]:
        raise CompatibilityError(
            f"model expects M={model.M} modes; dataset stores {dataset.xi.shape[1]}")
    if split == "test":
        xi, f_true = dataset.test_split(model.variable)
    elif split == "train":
        xi, f_true = dataset.train_split(model.variable)
    else:
        raise InvalidInput("split must be 'train' or 'test'")

    if baseline == "zero":
        f_pred = np.zeros_like(f_true)
    elif baseline == "mean":
        _, f_tr = dataset.train_split(model.variable)
        f_pred = np.tile(f_tr.mean(axis=0), (f_true.shape[0], 1))
    elif baseline is None:
        f_pred = model.predict_batch(xi[:, :model.M], dataset.coords)
    else:
        raise InvalidInput("baseline must be None, 'zero' or 'mean'")

    extrap = model.extrapolation_mask(dataset.coords)
    return {
        "variable": model.variable,
        "M": int(model.M),
        "K": int(model.K),
        "split": split,
        "baseline": baseline,
        "n_samples": int(f_true.shape[0]),
        "error": relative_test_error(f_pred, f_true),
        "root_error": root_relative_test_error(f_pred, f_true),
        "extrapolation_fraction": float(np.mean(extrap)),
    }


# ---------------------------------------------------------------------------
# Full pipeline and studies
# ---------------------------------------------------------------------------

def run_pipeline(spec: BenchmarkSpec, out_dir, seed: int = 0,
                 train_seed: int = 0, workers: int = 1) -> dict:
    """Dataset generation, per-variable training over all M candidates,
    test-error table, and argmin model selection; persists everything."""
    out = persist.ensure_writable(out_dir)
    generate_dataset(spec, out / "dataset", seed=seed, workers=workers)
    dataset = persist.load_dataset(out / "dataset")
    fem_seconds = persist.read_timings(out / "dataset").get("fem_seconds", 0.0)

    variables = {}
    train_seconds = {}
    for var in spec.variables:
        table = []
        total_t = 0.0
        for m in spec.m_candidates:
            ckpt_dir = out / "models" / f"{var}_M{m}"
            model, ck_manifest = train_variable(dataset, var, m, ckpt_dir,
                                                seed=train_seed)
            metrics = evaluate_model(model, dataset, split="test")
            persist.write_json(ckpt_dir / "metrics.json", metrics)
            total_t += persist.read_timings(ckpt_dir).get("train_seconds", 0.0)
            table.append({"M": int(m), "K": metrics["K"],
                          "error": metrics["error"],
                          "root_error": metrics["root_error"],
                          "checkpoint": str(Path("models") / f"{var}_M{m}")})
        errors = [row["error"] for row in table]
        selected = table[int(np.argmin(errors))]["M"]
        variables[var] = {"table": table, "selected_M": selected}
        train_seconds[var] = total_t

    report = {
        "kind": spec.kind,
        "sigma": spec.sigma, "l_x": spec.l_x, "l_z": spec.l_z,
        "profile": spec.profile,
        "seed": seed, "train_seed": train_seed,
        "n_train": spec.n_train, "n_test": spec.n_test,
        "variables": variables,
        "timing": {
            "fem_seconds": fem_seconds,
            "train_seconds": train_seconds,
            "crossover": {var: crossover_count(spec.n_train, train_seconds[var],
                                               fem_seconds)
                          for var in spec.variables},
        },
    }
    persist.write_json(out / "report.json", report)
    (out / "report.csv").write_text(report_csv(report))
    return report


def report_csv(report: dict) -> str:
    """Deterministic metric table (timing deliberately excluded)."""
    lines = ["variable,M,K,error,root_error,selected"]
    for var in sorted(report["variables"]):
        entry = report["variables"][var]
        for row in entry["table"]:
            sel = int(row["M"] == entry["selected_M"])
            lines.append(f"{var},{row['M']},{row['K']},{row['error']:.17g},"
                         f"{row['root_error']:.17g},{sel}")
    return "\n".join(lines) + "\n"


def truncation_study(spec: BenchmarkSpec, m_list, n_samples: int,
                     seed: int = 0) -> dict:
    """Response-space truncation error by paired solves (full vs truncated field).

    For each sample and each M, the same coefficient row drives one solve with
    every available mode and one with the first M; the table holds the mean of
    ||f_full - f_M||^2 / ||f_full||^2 per variable.
    """
    ctx = build_context(spec)
    n_modes = ctx.basis.n_modes
    m_list = [int(m) for m in m_list]
    if any(m < 1 or m > n_modes for m in m_list):
        raise InvalidInput(f"M values must lie in [1, {n_modes}]")
    sample = lhs_normal(n_samples, n_modes, seed)
    errors = {var: np.zeros(len(m_list)) for var in spec.variables}
    for i in range(n_samples):
        full = ctx.solve(sample.xi[i], n_modes)
        for j, m in enumerate(m_list):
            trunc = ctx.solve(sample.xi[i], m)
            for var in spec.variables:
                a = trunc.sampled[var].ravel()
                b = full.sampled[var].ravel()
                denom = float(b @ b)
                err = float((a - b) @ (a - b)) / denom if denom > 0 else 0.0
                errors[var][j] += err / n_samples
    return {"m_values": m_list,
            "errors": {var: errors[var].tolist() for var in spec.variables}}


def crossover_count(n_train: int, train_seconds: float,
                    fem_seconds: float) -> float:
    """Simulation count at which surrogate construction beats repeated solves."""
    if fem_seconds <= 0:
        raise InvalidInput("total FEM runtime must be positive")
    return float(n_train) * (1.0 + train_seconds / fem_seconds)


def study_table(reports: list[dict]) -> str:
    """Pivot several run reports into one CSV: one row per correlation-length
    combination, one column per (variable, sigma), errors at the selected M.
    Sigmas run high to low, matching the published table layout."""
    if not reports:
        raise InvalidInput("no reports given")
    sigmas = sorted({r["sigma"] for r in reports}, reverse=True)
    variables = sorted({v for r in reports for v in r["variables"]})
    keys = sorted({(r["l_x"], r.get("l_z")) for r in reports},
                  key=lambda t: (t[0], t[1] if t[1] is not None else -1.0))

    def selected_error(rep, var):
        entry = rep["variables"][var]
        for row in entry["table"]:
            if row["M"] == entry["selected_M"]:
                return row["error"]
        return None

    header = ["l_x", "l_z"] + [f"{var}:sigma={s:g}" for var in variables
                               for s in sigmas]
    lines = [",".join(header)]
    for l_x, l_z in keys:
        cells = [f"{l_x:g}", "" if l_z is None else f"{l_z:g}"]
        for var in variables:
            for s in sigmas:
                match = [r for r in reports
                         if r["sigma"] == s and r["l_x"] == l_x
                         and r.get("l_z") == l_z and var in r["variables"]]
                cells.append(f"{selected_error(match[0], var):.17g}"
                             if match else "")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
