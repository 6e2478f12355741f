"""DeepONet construction, two-step training, prediction, and error metrics.

Training decouples basis learning from coefficient learning:

1. trunk phase: minimize || A Phi(T)^T - F ||^2 jointly over the trunk
   parameters and the coefficient matrix A, where Phi is the trunk output
   augmented with a fixed constant column (no gradient flows through it);
2. thin QR with positive diagonal, Phi* = Q* R*, branch targets B* = A* R*^T;
3. branch phase: minimize || C(Xi) - B* ||^2.

Both phases run AdamW first (mini-batches over sample rows) and L-BFGS on the
full batch afterwards.  At inference the QR factor is folded into a dense
K x K transform so predictions work at coordinates absent from the QR grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput, NumericalFailure
from .neuralnet import (MLP, AdamWState, OptimizerConfig, adamw_step,
                        lbfgs_minimize, philox_rng)

VARIABLE_TAGS = ("u_x", "u_z", "p")


@dataclass
class TrainDataset:
    """Input coefficients, output snapshots, and their evaluation coordinates."""

    xi: np.ndarray          # (N, M) K-L coefficients
    f: np.ndarray           # (N, m_y) output snapshots
    coords: np.ndarray      # (m_y, d+1) spatiotemporal points (x, z, t)
    variable: str

    def __post_init__(self):
        self.xi = np.atleast_2d(np.asarray(self.xi, dtype=float))
        self.f = np.atleast_2d(np.asarray(self.f, dtype=float))
        self.coords = np.atleast_2d(np.asarray(self.coords, dtype=float))
        if self.variable not in VARIABLE_TAGS:
            raise InvalidInput(f"variable must be one of {VARIABLE_TAGS}")
        if self.xi.shape[0] != self.f.shape[0]:
            raise InvalidInput("xi and f must have the same number of rows")
        if self.f.shape[1] != self.coords.shape[0]:
            raise InvalidInput("f columns must match the number of coordinates")
        if not (np.all(np.isfinite(self.xi)) and np.all(np.isfinite(self.f))
                and np.all(np.isfinite(self.coords))):
            raise InvalidInput("dataset entries must be finite")

    @property
    def n_samples(self) -> int:
        return self.xi.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.f.shape[1]


@dataclass
class TrunkFit:
    """Trained trunk network (output width K-1) and coefficient matrix A (N x K)."""

    trunk: MLP
    A: np.ndarray
    K: int
    final_loss: float = np.nan


@dataclass
class OrthoBasis:
    """QR-orthonormalized trunk basis and the projected branch targets."""

    Q: np.ndarray        # (m_y, K), Q^T Q = I
    R: np.ndarray        # (K, K) upper triangular, positive diagonal
    B_star: np.ndarray   # (N, K) branch regression targets = A R^T


@dataclass
class DeepONetModel:
    """Assembled surrogate: branch, trunk, and folded QR transform."""

    branch: MLP
    trunk: MLP
    r_inv_t: np.ndarray          # (K, K) = R^{-T}
    K: int
    M: int
    variable: str
    coord_min: np.ndarray = field(default=None)
    coord_max: np.ndarray = field(default=None)

    def trunk_features(self, coords) -> np.ndarray:
        """Orthonormalized trunk features at arbitrary coordinates (n, K)."""
        pts = np.atleast_2d(np.asarray(coords, dtype=float))
        phi = augmented_trunk(self.trunk, pts)
        return phi @ self.r_inv_t.T

    def predict(self, xi_row, y) -> float:
        """Surrogate value for one coefficient vector at one (x, z, t) point."""
        xi = np.asarray(xi_row, dtype=float).ravel()
        if xi.shape[0] != self.M:
            raise InvalidInput(f"expected {self.M} coefficients, got {xi.shape[0]}")
        c = self.branch.forward(xi[None, :])
        t = self.trunk_features(np.asarray(y, dtype=float)[None, :])
        return float(c[0] @ t[0])

    def predict_batch(self, xi_matrix, coords) -> np.ndarray:
        """(n_samples, n_points) predictions for many samples and points."""
        xi = np.atleast_2d(np.asarray(xi_matrix, dtype=float))
        if xi.shape[1] != self.M:
            raise InvalidInput(f"expected {self.M} coefficients, got {xi.shape[1]}")
        return self.branch.forward(xi) @ self.trunk_features(coords).T

    def extrapolation_mask(self, coords) -> np.ndarray:
        """True where a coordinate lies outside the trained bounding box."""
        pts = np.atleast_2d(np.asarray(coords, dtype=float))
        if self.coord_min is None or self.coord_max is None:
            return np.zeros(pts.shape[0], dtype=bool)
        eps = 1e-12
        return np.any((pts < self.coord_min - eps) | (pts > self.coord_max + eps),
                      axis=1)


# ---------------------------------------------------------------------------
# Basis-size heuristics
# ---------------------------------------------------------------------------

def estimate_rank(f_matrix, tau: float = 0.01, scale_by_dims: bool = False) -> int:
    """Numerical rank: count of singular values >= tau * sigma_1.

    ``scale_by_dims`` switches to the alternative reading with threshold
    tau * max(N, m_y) * eps * sigma_1 (a matrix-rank-style tolerance); the
    default relative reading is what the pipeline uses.
    """
    F = np.atleast_2d(np.asarray(f_matrix, dtype=float))
    if F.size == 0:
        raise InvalidInput("snapshot matrix is empty")
    s = np.linalg.svd(F, compute_uv=False)
    if s[0] == 0.0:
        return 0
    thresh = tau * s[0]
    if scale_by_dims:
        thresh = tau * max(F.shape) * np.finfo(float).eps * s[0]
    return int(np.count_nonzero(s >= thresh))


def choose_K(rank: int, multiplier: float = 1.5, cap: int | None = None) -> int:
    """Basis count: round(multiplier * rank), clipped to the output size."""
    if rank < 1:
        raise InvalidInput("rank must be >= 1")
    if not 1.0 <= multiplier <= 2.0:
        raise InvalidInput("multiplier must lie in [1, 2]")
    k = int(np.floor(multiplier * rank + 0.5))
    if cap is not None:
        k = min(k, int(cap))
    return max(k, 2)


# ---------------------------------------------------------------------------
# Two-step training
# ---------------------------------------------------------------------------

def augmented_trunk(trunk: MLP, coords: np.ndarray) -> np.ndarray:
    """Trunk output with the fixed constant column appended: (n, K)."""
    phi = trunk.forward(coords)
    return np.hstack([phi, np.ones((phi.shape[0], 1))])


def _batches(n: int, fraction: float, rng: np.random.Generator):
    size = max(1, int(round(n * fraction)))
    perm = rng.permutation(n)
    return [perm[i:i + size] for i in range(0, n, size)]


def train_trunk(ds: TrainDataset, widths, opt: OptimizerConfig):
    """Fit the trunk basis and coefficient matrix; returns (TrunkFit, curve).

    ``widths`` is the full trunk architecture ending in K-1.  A is initialized
    by least squares against the initial trunk features, which removes the
    arbitrary random start from the bilinear problem.
    """
    widths = tuple(int(w) for w in widths)
    if widths[0] != ds.coords.shape[1]:
        raise InvalidInput("trunk input width must match coordinate dimension")
    K = widths[-1] + 1
    F = ds.f
    n, m_y = F.shape

    trunk = MLP.init(widths, philox_rng(opt.seed, 0))
    rng_batch = philox_rng(opt.seed, 1)

    # Least-squares A against the initial trunk features, truncated at a
    # relative singular value of 1e-3: random tanh features are nearly
    # collinear, and an unregularized solve pumps A along the null directions,
    # which makes the subsequent joint optimization needlessly stiff.
    phi0 = augmented_trunk(trunk, ds.coords)
    A = np.linalg.lstsq(phi0, F.T, rcond=1e-3)[0].T          # (N, K)

    params = trunk.parameters() + [A]
    decay_mask = [p.ndim >= 2 for p in trunk.parameters()] + [False]
    state = AdamWState.for_params(params)
    curve: list[tuple[str, int, float]] = []

    def batch_loss_grads(rows):
        phi, cache = trunk.forward_cached(ds.coords)
        phi_aug = np.hstack([phi, np.ones((m_y, 1))])
        resid = A[rows] @ phi_aug.T - F[rows]                # (b, m_y)
        scale = 2.0 / resid.size
        loss = float(np.mean(resid * resid))
        if not np.isfinite(loss):
            raise NumericalFailure("trunk loss diverged")
        d_phi_aug = scale * resid.T @ A[rows]                # (m_y, K)
        g_trunk, _ = trunk.backward(cache, d_phi_aug[:, :-1])
        gA = np.zeros_like(A)
        gA[rows] = scale * (resid @ phi_aug)
        return loss, g_trunk + [gA]

    stop = False
    iteration = 0
    for epoch in range(opt.adamw_epochs):
        for rows in _batches(n, opt.batch_fraction, rng_batch):
            loss, grads = batch_loss_grads(rows)
            tick = epoch if opt.decay_per == "epoch" else iteration
            adamw_step(state, params, grads, opt, iteration, schedule_tick=tick,
                       decay_mask=decay_mask)
            curve.append(("adamw", iteration, loss))
            iteration += 1
            if opt.stop_tol and loss <= opt.stop_tol:
                stop = True
                break
        if stop:
            break

    shapes = [p.shape for p in params]
    sizes = [p.size for p in params]

    def pack(ps):
        return np.concatenate([p.ravel() for p in ps])

    def unpack(x):
        out, pos = [], 0
        for shp, sz in zip(shapes, sizes):
            out.append(x[pos:pos + sz].reshape(shp))
            pos += sz
        return out

    def full_objective(x):
        ps = unpack(x)
        trunk.weights = [ps[2 * i] for i in range(trunk.n_layers)]
        trunk.biases = [ps[2 * i + 1] for i in range(trunk.n_layers)]
        nonlocal A
        A = ps[-1]
        loss, grads = batch_loss_grads(np.arange(n))
        return loss, pack(grads)

    if opt.lbfgs_max_iter > 0:
        res = lbfgs_minimize(full_objective, pack(params),
                             max_iter=opt.lbfgs_max_iter, tol=opt.lbfgs_tol,
                             memory=opt.lbfgs_memory)
        full_objective(res.x)  # leave parameters at the returned minimizer
        curve.append(("lbfgs", iteration + res.n_iter, res.f))
        final = res.f
    else:
        final, _ = batch_loss_grads(np.arange(n))

    return TrunkFit(trunk=trunk, A=A, K=K, final_loss=float(final)), curve


def positive_qr(matrix: np.ndarray):
    """Thin QR with the sign convention diag(R) > 0 (unique for full rank)."""
    Q, R = np.linalg.qr(np.asarray(matrix, dtype=float))
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs[None, :], signs[:, None] * R


def orthonormalize(fit: TrunkFit, coords) -> OrthoBasis:
    """Thin QR of the augmented trunk evaluation with positive R diagonal."""
    pts = np.atleast_2d(np.asarray(coords, dtype=float))
    phi = augmented_trunk(fit.trunk, pts)
    if phi.shape[0] < phi.shape[1]:
        raise NumericalFailure(
            f"need at least K={phi.shape[1]} coordinates for the QR basis")
    Q, R = positive_qr(phi)
    dg = np.abs(np.diag(R))
    if dg.min() <= 1e-12 * dg.max():
        raise NumericalFailure(
            "trunk basis is numerically rank-deficient; retrain with smaller K")
    return OrthoBasis(Q=Q, R=R, B_star=fit.A @ R.T)


def train_branch(xi, b_star, widths, opt: OptimizerConfig):
    """Regress branch outputs onto the projected targets; returns (MLP, curve)."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    B = np.atleast_2d(np.asarray(b_star, dtype=float))
    widths = tuple(int(w) for w in widths)
    if widths[0] != xi.shape[1] or widths[-1] != B.shape[1]:
        raise InvalidInput("branch architecture must map M inputs to K outputs")
    n = xi.shape[0]

    branch = MLP.init(widths, philox_rng(opt.seed, 2))
    rng_batch = philox_rng(opt.seed, 3)
    params = branch.parameters()
    state = AdamWState.for_params(params)
    curve: list[tuple[str, int, float]] = []

    def batch_loss_grads(rows):
        out, cache = branch.forward_cached(xi[rows])
        resid = out - B[rows]
        loss = float(np.mean(resid * resid))
        if not np.isfinite(loss):
            raise NumericalFailure("branch loss diverged")
        grads, _ = branch.backward(cache, (2.0 / resid.size) * resid)
        return loss, grads

    stop = False
    iteration = 0
    for epoch in range(opt.adamw_epochs):
        for rows in _batches(n, opt.batch_fraction, rng_batch):
            loss, grads = batch_loss_grads(rows)
            tick = epoch if opt.decay_per == "epoch" else iteration
            adamw_step(state, params, grads, opt, iteration, schedule_tick=tick)
            curve.append(("adamw", iteration, loss))
            iteration += 1
            if opt.stop_tol and loss <= opt.stop_tol:
                stop = True
                break
        if stop:
            break

    shapes = [p.shape for p in params]
    sizes = [p.size for p in params]

    def pack(ps):
        return np.concatenate([p.ravel() for p in ps])

    def full_objective(x):
        pos = 0
        ps = []
        for shp, sz in zip(shapes, sizes):
            ps.append(x[pos:pos + sz].reshape(shp))
            pos += sz
        branch.weights = [ps[2 * i] for i in range(branch.n_layers)]
        branch.biases = [ps[2 * i + 1] for i in range(branch.n_layers)]
        loss, grads = batch_loss_grads(np.arange(n))
        return loss, pack(grads)

    if opt.lbfgs_max_iter > 0:
        res = lbfgs_minimize(full_objective, pack(params),
                             max_iter=opt.lbfgs_max_iter, tol=opt.lbfgs_tol,
                             memory=opt.lbfgs_memory)
        full_objective(res.x)
        curve.append(("lbfgs", iteration + res.n_iter, res.f))

    return branch, curve


def train_two_step(ds: TrainDataset, trunk_widths, branch_widths,
                   trunk_opt: OptimizerConfig,
                   branch_opt: OptimizerConfig | None = None):
    """Run both phases and assemble the inference model.

    ``branch_opt`` defaults to the trunk schedule with the branch's faster
    learning-rate decay (0.98 per 100 iterations).  Returns (model, info)
    where info carries the trunk fit, ortho basis, and training curves for
    persistence and diagnostics.
    """
    if branch_opt is None:
        branch_opt = trunk_opt.replace(decay_factor=0.98)
    fit, trunk_curve = train_trunk(ds, trunk_widths, trunk_opt)
    basis = orthonormalize(fit, ds.coords)
    branch, branch_curve = train_branch(ds.xi, basis.B_star, branch_widths,
                                        branch_opt)
    model = DeepONetModel(
        branch=branch, trunk=fit.trunk,
        r_inv_t=np.linalg.inv(basis.R).T,
        K=fit.K, M=ds.xi.shape[1], variable=ds.variable,
        coord_min=ds.coords.min(axis=0), coord_max=ds.coords.max(axis=0),
    )
    info = {"trunk_fit": fit, "basis": basis,
            "trunk_curve": trunk_curve, "branch_curve": branch_curve}
    return model, info


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def relative_test_error(f_pred, f_true) -> float:
    """Squared-norm error ratio ||F_pred - F||^2 / ||F||^2."""
    a = np.asarray(f_pred, dtype=float)
    b = np.asarray(f_true, dtype=float)
    if a.shape != b.shape:
        raise InvalidInput("prediction and truth shapes differ")
    denom = float(np.sum(b * b))
    if denom == 0.0:
        raise InvalidInput("reference snapshots have zero norm")
    return float(np.sum((a - b) ** 2) / denom)


def root_relative_test_error(f_pred, f_true) -> float:
    """Square root of :func:`relative_test_error`."""
    return float(np.sqrt(relative_test_error(f_pred, f_true)))
