"""Sensor-to-controller channel: sparse occupancy encoding, noisy linear
transmission, and L1 (basis pursuit denoising) recovery back to integer
vehicle counts.

The occupancy matrix X is binary, one row per incoming lane and one column
per distance slice inside the effective range. The sensor transmits
y' = A X + eta through a random measurement matrix A negotiated with the
controller; the controller solves, per column,

    min |x|_1  subject to  |y' - A x|_2 <= delta

and rounds the recovered matrix to nonnegative integers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_Z = 20
SOLVER_TOL = 1e-6
MAX_FISTA_ITERS = 1000
BISECT_STEPS = 20


# ----------------------------------------------------------------------
# fuzzification: occupancy matrix from raw distances
# ----------------------------------------------------------------------

def occupancy_columns(er_m: float, slice_m: float) -> int:
    """Number of distance slices inside the effective range."""
    if slice_m <= 0 or er_m <= 0:
        raise ValueError("slice and effective range must be positive")
    m = er_m / slice_m
    if abs(m - round(m)) > 1e-9:
        raise ValueError(f"effective range {er_m} is not a multiple of slice {slice_m}")
    return int(round(m))


def build_occupancy(distances: list[np.ndarray], slice_m: float, er_m: float) -> np.ndarray:
    """Binary lane x slice matrix from per-lane stop-line distances.

    A vehicle at distance d lands in slice floor(d / slice); distances at or
    beyond the effective range are dropped. Boundary distances sitting
    exactly on a slice edge go to the floor slice.
    """
    m = occupancy_columns(er_m, slice_m)
    x = np.zeros((len(distances), m), dtype=np.float64)
    for i, lane_d in enumerate(distances):
        for d in np.asarray(lane_d, dtype=np.float64):
            if d < 0:
                raise ValueError(f"negative vehicle distance {d}")
            j = int(d // slice_m)
            if j < m:
                x[i, j] = 1.0
    return x


def segment_counts(counts: np.ndarray, seg_slices: int, segments: int) -> np.ndarray:
    """Sum slice counts into per-lane segments; the last segment absorbs any
    slices left over when the range is not an exact multiple."""
    n, m = counts.shape
    out = np.zeros((n, segments), dtype=counts.dtype)
    for s in range(segments):
        lo = s * seg_slices
        hi = (s + 1) * seg_slices if s < segments - 1 else m
        out[:, s] = counts[:, lo:hi].sum(axis=1)
    return out


# ----------------------------------------------------------------------
# transmission
# ----------------------------------------------------------------------

def negotiate_matrix(seed: int, z: int, n: int) -> np.ndarray:
    """Random measurement matrix shared by sensor and controller.

    Entries iid Gaussian with variance 1/z, so columns have unit norm in
    expectation. Identical seeds produce identical matrices on both ends.
    """
    if z < 1 or n < 1:
        raise ValueError("measurement matrix dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    return rng.standard_normal((z, n)) / np.sqrt(z)


@dataclass
class NoiseModel:
    """Additive channel noise: Gaussian or variance-matched uniform.

    ``scale`` is the fraction of the calibrated base magnitude sigma_base;
    zero scale means a clean channel.
    """

    kind: str = "gaussian"
    scale: float = 1.0
    seed: int = 0
    _rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("gaussian", "uniform"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.scale < 0:
            raise ValueError("noise scale must be >= 0")
        self._rng = np.random.default_rng(self.seed)

    def sample(self, shape: tuple[int, ...], sigma_base: float) -> np.ndarray:
        sigma = self.scale * sigma_base
        if sigma == 0.0:
            return np.zeros(shape)
        if self.kind == "gaussian":
            return self._rng.standard_normal(shape) * sigma
        half = np.sqrt(3.0) * sigma  # variance-matched U(-half, half)
        return self._rng.uniform(-half, half, size=shape)


def transmit(a: np.ndarray, x: np.ndarray, noise: NoiseModel, sigma_base: float) -> np.ndarray:
    """y' = A X + eta."""
    y = a @ x
    return y + noise.sample(y.shape, sigma_base)


def calibrate_sigma_base(a: np.ndarray, samples: list[np.ndarray] | None = None,
                         seed: int = 0, n_samples: int = 64,
                         max_per_column: int = 4) -> float:
    """Base noise magnitude: 0.3 x RMS of the clean measurements A X over a
    calibration batch of representative occupancy matrices.

    Without explicit samples, draws binary matrices with up to
    ``max_per_column`` occupied slices per column.
    """
    if samples is None:
        rng = np.random.default_rng(seed)
        n = a.shape[1]
        m = 20  # column count of calibration draws; the RMS is per-entry so m is immaterial
        samples = [random_sparse_binary(rng, n, m, max_per_column) for _ in range(n_samples)]
    sq_sum = 0.0
    count = 0
    for x in samples:
        y = a @ x
        sq_sum += float((y * y).sum())
        count += y.size
    return 0.3 * np.sqrt(sq_sum / count) if count else 0.0


def random_sparse_binary(rng: np.random.Generator, n: int, m: int,
                         max_per_column: int) -> np.ndarray:
    """Binary n x m matrix with a uniform 0..max nonzero count per column."""
    x = np.zeros((n, m))
    for j in range(m):
        k = int(rng.integers(0, max_per_column + 1))
        if k:
            rows = rng.choice(n, size=k, replace=False)
            x[rows, j] = 1.0
    return x


def expected_noise_delta(z: int, scale: float, sigma_base: float) -> float:
    """Residual bound for recovery: the expected per-column noise norm."""
    return np.sqrt(z) * scale * sigma_base


# ----------------------------------------------------------------------
# recovery
# ----------------------------------------------------------------------

@dataclass
class RecoveredState:
    """Result of per-column basis pursuit denoising."""

    x_hat: np.ndarray          # real n x m recovered matrix
    counts: np.ndarray         # defuzzified integer n x m matrix
    residuals: np.ndarray      # per-column |y' - A x_hat|_2
    converged: np.ndarray      # per-column feasibility flag


class _RecoveryWorkspace:
    """Per-matrix precomputation shared across recover() calls."""

    def __init__(self, a: np.ndarray):
        self.a = a
        self.ata = a.T @ a
        self.lipschitz = float(np.linalg.eigvalsh(self.ata)[-1])
        self.pinv = np.linalg.pinv(a)
        self.tall = a.shape[0] >= a.shape[1]


def _fista(ws: _RecoveryWorkspace, aty: np.ndarray, lam: np.ndarray,
           x0: np.ndarray, max_iters: int, tol: float) -> np.ndarray:
    """FISTA on the lasso objective lam|x|_1 + 0.5 |y - A x|^2, whole-matrix
    form with an independent lam per column."""
    step = 1.0 / ws.lipschitz
    thresh = lam * step
    x = x0.copy()
    y = x0.copy()
    t = 1.0
    for _ in range(max_iters):
        grad = ws.ata @ y - aty
        z = y - step * grad
        x_new = np.sign(z) * np.maximum(np.abs(z) - thresh, 0.0)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        delta = np.abs(x_new - x).max()
        x = x_new
        t = t_new
        if delta < tol:
            break
    return x


def recover(a: np.ndarray, y_noisy: np.ndarray, delta: float,
            max_iters: int = MAX_FISTA_ITERS, tol: float = SOLVER_TOL,
            bisect_steps: int = BISECT_STEPS,
            workspace: _RecoveryWorkspace | None = None) -> RecoveredState:
    """Solve basis pursuit denoising independently for every column of y'.

    Each column solves min |x|_1 s.t. |y' - A x|_2 <= delta via FISTA on the
    Lagrangian with the multiplier found by bisection: the largest lambda
    whose residual still meets the bound. Columns whose bound cannot be met
    even by least squares are flagged unconverged and keep the best iterate.
    """
    if delta < 0:
        raise ValueError("noise bound delta must be >= 0")
    if y_noisy.ndim == 1:
        y_noisy = y_noisy[:, None]
    ws = workspace or _RecoveryWorkspace(a)
    n = a.shape[1]
    m = y_noisy.shape[1]

    x_ls = ws.pinv @ y_noisy
    res_ls = np.linalg.norm(y_noisy - a @ x_ls, axis=0)
    y_norms = np.linalg.norm(y_noisy, axis=0)

    best = x_ls.copy()
    converged = res_ls <= delta + tol
    # zero is feasible (and L1-minimal) when the measurement is inside the bound
    zero_cols = y_norms <= delta
    best[:, zero_cols] = 0.0
    converged = converged | zero_cols

    active = converged & ~zero_cols
    if delta > tol and bool(active.any()):
        aty = a.T @ y_noisy
        lam_hi = np.abs(aty).max(axis=0) + 1e-12  # lambda at which x = 0 is optimal
        lo = np.zeros(m)
        hi = lam_hi.copy()
        x_cur = x_ls.copy()
        for _ in range(bisect_steps):
            lam = 0.5 * (lo + hi)
            lam_masked = np.where(active, lam, lam_hi)  # frozen cols iterate harmlessly at x=0
            x_cur = _fista(ws, aty, lam_masked, x_cur, max_iters, tol)
            res = np.linalg.norm(y_noisy - a @ x_cur, axis=0)
            feasible = res <= delta
            take = active & feasible
            best[:, take] = x_cur[:, take]
            lo = np.where(take, lam, lo)
            hi = np.where(active & ~feasible, lam, hi)
            if np.all((hi - lo) <= 1e-4 * lam_hi):
                break
    elif not ws.tall and delta <= tol:
        # underdetermined exact-fit case: approximate basis pursuit with a
        # vanishing multiplier instead of the min-L2 pseudoinverse point
        aty = a.T @ y_noisy
        lam_hi = np.abs(aty).max(axis=0) + 1e-12
        best = _fista(ws, aty, lam_hi * 1e-9, x_ls, max_iters, tol)
        converged = np.linalg.norm(y_noisy - a @ best, axis=0) <= delta + tol

    residuals = np.linalg.norm(y_noisy - a @ best, axis=0)
    return RecoveredState(
        x_hat=best,
        counts=defuzzify(best),
        residuals=residuals,
        converged=converged | (residuals <= delta + tol),
    )


def defuzzify(x_hat: np.ndarray) -> np.ndarray:
    """Clamp negatives to zero, then round to the nearest integer with ties
    going away from zero. Idempotent on integer matrices."""
    clamped = np.maximum(np.asarray(x_hat, dtype=np.float64), 0.0)
    return np.floor(clamped + 0.5).astype(np.int64)


# ----------------------------------------------------------------------
# channel
# ----------------------------------------------------------------------

@dataclass
class SensedState:
    """Everything one sensing round produces, for controllers and dumps."""

    occupancy: np.ndarray      # true binary X
    measurement: np.ndarray    # noisy y'
    x_hat: np.ndarray
    counts: np.ndarray
    residuals: np.ndarray
    converged: np.ndarray


class SensorChannel:
    """One intersection's negotiated channel for an episode.

    Owns the measurement matrix, the calibrated noise magnitude and the
    noise stream; ``sense`` runs the full fuzzify/transmit/recover/defuzzify
    round trip on raw per-lane distances.
    """

    def __init__(self, seed: int, n_lanes: int, slice_m: float, er_m: float,
                 z: int = DEFAULT_Z, noise_kind: str = "gaussian",
                 noise_scale: float = 1.0, calibration_samples: int = 64):
        self.slice_m = float(slice_m)
        self.er_m = float(er_m)
        self.columns = occupancy_columns(er_m, slice_m)
        self.matrix = negotiate_matrix(seed, z, n_lanes)
        self.sigma_base = calibrate_sigma_base(
            self.matrix, seed=seed + 1, n_samples=calibration_samples)
        self.noise = NoiseModel(kind=noise_kind, scale=noise_scale, seed=seed + 2)
        self.delta = expected_noise_delta(z, noise_scale, self.sigma_base)
        self._workspace = _RecoveryWorkspace(self.matrix)

    def sense(self, distances: list[np.ndarray]) -> SensedState:
        x = build_occupancy(distances, self.slice_m, self.er_m)
        y_noisy = transmit(self.matrix, x, self.noise, self.sigma_base)
        rec = recover(self.matrix, y_noisy, self.delta, workspace=self._workspace)
        return SensedState(
            occupancy=x,
            measurement=y_noisy,
            x_hat=rec.x_hat,
            counts=rec.counts,
            residuals=rec.residuals,
            converged=rec.converged,
        )
