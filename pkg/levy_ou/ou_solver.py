"""Solvers for dX_t = A X_t dt + dL_t, X_0 = 0, driven by a Levy process.

The primary scheme is event driven: the grid contains every jump time, and
between grid points X is advanced by variation of constants,

    X <- e^{A dt} X + (response to the continuous drive),

after which the jump of L at the grid point (if any) is added and recorded.
The running integral S(X, t) is advanced analytically in the same step
(int_0^dt e^{As} x ds = Psi(dt) x), so X - A S(X, .) - L vanishes up to
rounding on the grid.

Two ways to drive it:
  - realization mode: a LevyRealization is shared, e.g. between two drifts.
    The Wiener part enters through its grid increments, taken as linear
    within each step (its conditional mean given the increment). This is
    exact whenever Q = 0.
  - seed mode: fresh Gaussian increments with covariance
    Sigma_dt = int_0^dt e^{As} Q e^{A's} ds, exact in law.

solve_euler is kept as an independent cross-check.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .levy import (
    LevyTriplet,
    covariance_factor,
    draw_jumps,
    jump_streams,
    regular_grid,
    sample_levy,
)
from .paths import CadlagPath, integrate_many, path_from_samples
from .streams import stream

logger = logging.getLogger("levy_ou")

# Drift operators are plain (d, d) float arrays.
OperatorMatrix = np.ndarray


def as_operator(matrix, dimension=None, name="A"):
    """Coerce to a finite (d, d) OperatorMatrix.

    Accepts a nested list, a flat row-major list of length d^2, or a scalar
    for d = 1.
    """
    a = np.array(matrix, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        d = math.isqrt(a.size)
        if d * d != a.size or d == 0:
            raise ValueError(f"{name}: {a.size} entries is not a square matrix")
        a = a.reshape(d, d)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if dimension is not None and a.shape[0] != dimension:
        raise ValueError(f"{name} is {a.shape[0]}x{a.shape[0]}, process dimension is {dimension}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class OUSpec:
    """Drift operator, driving triplet, horizon T and grid step h."""

    drift: OperatorMatrix
    triplet: LevyTriplet
    horizon: float = 1.0
    step: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "drift", as_operator(self.drift, self.triplet.dimension))
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon}")
        if not (self.step > 0):
            raise ValueError(f"grid step must be positive, got {self.step}")
        if self.step > self.horizon:
            raise ValueError(f"grid step {self.step} exceeds horizon {self.horizon}")

    @property
    def dimension(self):
        return self.triplet.dimension

    def with_drift(self, drift):
        return OUSpec(drift, self.triplet, self.horizon, self.step)

    def with_step(self, step):
        return OUSpec(self.drift, self.triplet, self.horizon, step)


def gaussian_step_covariance(A, Q, h):
    """Sigma_h = int_0^h e^{As} Q e^{A's} ds via a block exponential.

    exp(h [[-A, Q], [0, A']]) = [[., F12], [0, F22]] gives Sigma_h = F22' F12.

    Raises:
        ValueError: h <= 0
    """
    if not (h > 0):
        raise ValueError(f"step must be positive, got {h}")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    d = A.shape[0]
    block = np.zeros((2 * d, 2 * d))
    block[:d, :d] = -A
    block[:d, d:] = Q
    block[d:, d:] = A.T
    F = expm(block * h)
    sigma = F[d:, d:].T @ F[:d, d:]
    return 0.5 * (sigma + sigma.T)


@dataclass(frozen=True, eq=False)
class StepOperator:
    """Matrices for one step of length dt.

    Attributes:
        propagator: e^{A dt}
        integral: Psi(dt) = int_0^dt e^{As} ds
        double_integral: Gamma(dt) = int_0^dt Psi(u) du
        covariance: Sigma_dt
        covariance_factor: symmetric square root of Sigma_dt
    """

    dt: float
    propagator: np.ndarray
    integral: np.ndarray
    double_integral: np.ndarray
    covariance: np.ndarray
    covariance_factor: np.ndarray


class StepOperators:
    """Cache of StepOperator by step length (rounded to 1e-14)."""

    def __init__(self, drift, covariance):
        self.drift = np.asarray(drift, dtype=float)
        self.covariance = np.asarray(covariance, dtype=float)
        self._cache = {}

    def __call__(self, dt):
        key = round(float(dt), 14)
        op = self._cache.get(key)
        if op is None:
            op = self._build(float(dt))
            self._cache[key] = op
        return op

    def _build(self, dt):
        A = self.drift
        d = A.shape[0]
        eye = np.eye(d)
        # exp(dt [[A, I, 0], [0, 0, I], [0, 0, 0]]) has top row [e^{A dt}, Psi, Gamma]
        block = np.zeros((3 * d, 3 * d))
        block[:d, :d] = A
        block[:d, d : 2 * d] = eye
        block[d : 2 * d, 2 * d :] = eye
        F = expm(block * dt)
        sigma = gaussian_step_covariance(A, self.covariance, dt)
        factor, _ = covariance_factor(sigma, name="Sigma_dt")
        return StepOperator(dt, F[:d, :d], F[:d, d : 2 * d], F[:d, 2 * d :], sigma, factor)


def _index_of(grid, t, what):
    k = int(np.searchsorted(grid, t))
    for cand in (k - 1, k):
        if 0 <= cand < grid.size and abs(grid[cand] - t) <= 1e-12 * max(1.0, abs(t)):
            return cand
    raise ValueError(f"{what}={t!r} is not a grid point of the driving realization")


def _advance(spec, ops, grid, x0, k0, k1, jumps_at, beta, wiener=None, normals=None,
             track_integral=True):
    """Step X from grid index k0 to k1.

    Exactly one of `wiener` (realization mode) or `normals` (seed mode) is
    used for the continuous noise; with neither the drive is b t + Z only.

    Returns:
        (values, integrals or None, {grid index: pre-jump value})
    """
    d = spec.dimension
    n = k1 - k0
    values = np.empty((n + 1, d))
    integrals = np.empty((n + 1, d)) if track_integral else None
    x = np.array(x0, dtype=float)
    s = np.zeros(d)
    values[0] = x
    if track_integral:
        integrals[0] = s
    pre = {}
    for row, k in enumerate(range(k0, k1), start=1):
        dt = grid[k + 1] - grid[k]
        op = ops(dt)
        if wiener is not None:
            v = beta + (wiener[k + 1] - wiener[k]) / dt
            if track_integral:
                s = s + op.integral @ x + op.double_integral @ v
            x = op.propagator @ x + op.integral @ v
        else:
            if track_integral:
                s = s + op.integral @ x + op.double_integral @ beta
            x = op.propagator @ x + op.integral @ beta
            if normals is not None:
                x = x + op.covariance_factor @ normals[k]
        size = jumps_at.get(k + 1)
        if size is not None:
            pre[k + 1] = x
            x = x + size
        values[row] = x
        if track_integral:
            integrals[row] = s
    return values, integrals, pre


def _jump_table(grid, times, sizes):
    idx = np.searchsorted(grid, times)
    return {int(k): sizes[n] for n, k in enumerate(idx)}


def _assemble(grid, values, integrals, pre):
    indices = sorted(pre)
    pre_values = np.vstack([pre[k] for k in indices]) if indices else None
    return path_from_samples(grid, values, indices, pre_values, integrals)


def _operators(spec):
    return StepOperators(spec.drift, spec.triplet.covariance.matrix)


def solve_exact(spec, realization=None, *, seed=None, replica=0, x0=None):
    """Event-driven exact solution of dX = AX dt + dL.

    Args:
        spec: OUSpec
        realization: Shared LevyRealization (realization mode)
        seed: Master seed for seed mode (used when realization is None)
        replica: Replica index for seed mode
        x0: Optional initial condition (default 0)

    Returns:
        CadlagPath on the driving grid, jump list equal to the driving jumps;
        the analytic running integral is attached in realization mode and in
        seed mode when Q = 0

    Raises:
        InfiniteActivityError: untruncated small-jump family
    """
    d = spec.dimension
    x0 = np.zeros(d) if x0 is None else np.array(x0, dtype=float).reshape(d)
    ops = _operators(spec)
    triplet = spec.triplet

    if realization is not None:
        if realization.dimension != d:
            raise ValueError(
                f"realization has dimension {realization.dimension}, spec has {d}"
            )
        grid = realization.grid
        beta = realization.drift - realization.compensator_drift
        jumps_at = _jump_table(grid, realization.jump_times, realization.jump_sizes)
        values, integrals, pre = _advance(
            spec, ops, grid, x0, 0, grid.size - 1, jumps_at, beta, wiener=realization.wiener
        )
    else:
        if seed is None:
            raise ValueError("solve_exact needs either a realization or a seed")
        times, sizes = draw_jumps(triplet.jump_spec, spec.horizon, *jump_streams(seed, replica))
        grid = np.union1d(regular_grid(spec.horizon, spec.step), times)
        beta = triplet.drift - triplet.jump_spec.compensator_drift()
        jumps_at = _jump_table(grid, times, sizes)
        pure = triplet.covariance.is_zero
        normals = None
        if not pure:
            normals = stream(seed, replica, "wiener").standard_normal((grid.size - 1, d))
        values, integrals, pre = _advance(
            spec, ops, grid, x0, 0, grid.size - 1, jumps_at, beta,
            normals=normals, track_integral=pure,
        )

    path = _assemble(grid, values, integrals, pre)
    logger.debug(
        f"[LevyOU][solve_exact] {grid.size} grid points, {len(path.jumps)} jumps, "
        f"|X_T|={np.linalg.norm(values[-1]):.4g}"
    )
    return path


def propagate_exact(spec, realization, x0, start, stop):
    """X(stop) given X(start) = x0 under the shared realization.

    start and stop must be grid points of the realization.
    """
    grid = realization.grid
    k0 = _index_of(grid, start, "start")
    k1 = _index_of(grid, stop, "stop")
    if k1 < k0:
        raise ValueError(f"stop={stop} precedes start={start}")
    beta = realization.drift - realization.compensator_drift
    jumps_at = _jump_table(grid, realization.jump_times, realization.jump_sizes)
    values, _, _ = _advance(
        spec, _operators(spec), grid, x0, k0, k1, jumps_at, beta,
        wiener=realization.wiener, track_integral=False,
    )
    return values[-1]


def _match_indices(times, targets):
    pos = np.clip(np.searchsorted(times, targets), 1, times.size - 1)
    left = times[pos - 1]
    right = times[pos]
    idx = np.where(np.abs(targets - left) <= np.abs(right - targets), pos - 1, pos)
    tol = 1e-9 * max(1.0, float(times[-1]))
    if np.any(np.abs(times[idx] - targets) > tol):
        raise ValueError("driving path grid does not contain the requested step grid")
    return idx


def solve_euler(spec, L, h=None):
    """Euler scheme X_{k+1} = X_k + A X_k dt_k + dL_k on the regular h grid
    merged with L's jump times.

    Args:
        spec: OUSpec (its drift is used)
        L: Driving CadlagPath whose sample times contain the h grid
        h: Step (default spec.step)

    Raises:
        ValueError: h <= 0, or L's grid does not contain the h grid
    """
    h = spec.step if h is None else h
    if not (h > 0):
        raise ValueError(f"Euler step must be positive, got {h}")
    coarse = regular_grid(L.horizon, h)
    idx = np.union1d(_match_indices(L.times, coarse), L.jump_indices).astype(int)
    times = L.times[idx]
    increments = np.diff(L.values[idx], axis=0)
    dts = np.diff(times)

    A = spec.drift
    values = np.empty((times.size, spec.dimension))
    values[0] = 0.0
    for k in range(dts.size):
        x = values[k]
        values[k + 1] = x + (A @ x) * dts[k] + increments[k]

    positions = np.searchsorted(idx, L.jump_indices)
    pre = values[positions] - L.jump_sizes if L.jumps else None
    return path_from_samples(times, values, positions, pre)


def integral_equation_residual(f, A, L):
    """sup_t |f(t) - A S(f, t) - L(t)| over the union of both grids."""
    grid = np.union1d(f.times, L.times)
    S = integrate_many(f, grid)
    r = f.values_at(grid) - S @ np.asarray(A, dtype=float).T - L.values_at(grid)
    return float(np.max(np.linalg.norm(r, axis=1)))


@dataclass(frozen=True, eq=False)
class WienerSplit:
    """X = X^J + W*, where X^J is driven by b t + Z and W* solves dW* = A W* dt + dW."""

    solution: CadlagPath
    jump_response: CadlagPath
    wiener_response: CadlagPath


def split_wiener_response(spec, realization):
    """Solve with and without the Wiener part of one realization."""
    X = solve_exact(spec, realization)
    XJ = solve_exact(spec, realization.without_wiener())
    integral = X.running_integral - XJ.running_integral
    W_star = CadlagPath(X.times, X.values - XJ.values, (), integral)
    return WienerSplit(X, XJ, W_star)


# ---------------------------------------------------------------------------
# Batched ensembles on the regular grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Many replicas of X on the regular grid.

    Attributes:
        replicas: Replica indices
        times: Regular grid t_0..t_n
        values: (c, n+1, d) X at grid times
        jump_increments: (c, n, d) increment of Z over (t_k, t_{k+1}],
            compensator drift included
        jump_counts: (c,) number of jumps per replica
    """

    replicas: np.ndarray
    times: np.ndarray
    values: np.ndarray
    jump_increments: np.ndarray
    jump_counts: np.ndarray

    @property
    def size(self):
        return self.replicas.size


def iter_ensemble(spec, replicas, seed, *, x0=None, chunk_size=1000, jump_role="jumps",
                  first_replica=0):
    """Yield Ensemble chunks of up to chunk_size replicas, exact in law.

    Jumps inside a step are propagated to the step end with e^{A tau}; the
    Gaussian part of the step is one draw with covariance Sigma_h. Replica i
    uses the same jump streams as solve_exact(seed=seed, replica=i), so with
    Q = 0 the two agree on the regular grid up to rounding.
    """
    triplet = spec.triplet
    d = spec.dimension
    A = spec.drift
    grid = regular_grid(spec.horizon, spec.step)
    dts = np.diff(grid)
    n = dts.size
    ops = _operators(spec)
    cdrift = triplet.jump_spec.compensator_drift()
    beta = triplet.drift - cdrift
    pure = triplet.covariance.is_zero
    x0 = np.zeros(d) if x0 is None else np.array(x0, dtype=float).reshape(d)

    for start in range(first_replica, first_replica + replicas, chunk_size):
        ids = np.arange(start, min(start + chunk_size, first_replica + replicas))
        c = ids.size
        effect = np.zeros((c, n, d))
        dz = np.zeros((c, n, d))
        counts = np.zeros(c, dtype=int)
        normals = None if pure else np.empty((c, n, d))
        for r, i in enumerate(ids):
            times, sizes = draw_jumps(
                triplet.jump_spec, spec.horizon, *jump_streams(seed, int(i), jump_role)
            )
            counts[r] = times.size
            if times.size:
                k = np.searchsorted(grid, times, side="left") - 1
                tau = grid[k + 1] - times
                mats = expm(A[None, :, :] * tau[:, None, None])
                np.add.at(effect[r], k, np.einsum("nij,nj->ni", mats, sizes))
                np.add.at(dz[r], k, sizes)
            if not pure:
                normals[r] = stream(seed, int(i), "wiener").standard_normal((n, d))
        dz -= dts[None, :, None] * cdrift[None, None, :]

        X = np.empty((c, n + 1, d))
        X[:, 0] = x0
        for k in range(n):
            op = ops(dts[k])
            x = X[:, k] @ op.propagator.T + op.integral @ beta
            if not pure:
                x = x + normals[:, k] @ op.covariance_factor.T
            X[:, k + 1] = x + effect[:, k]
        logger.debug(
            f"[LevyOU][iter_ensemble] replicas {ids[0]}..{ids[-1]}: {counts.sum()} jumps"
        )
        yield Ensemble(ids, grid, X, dz, counts)


def simulate_ensemble(spec, replicas, seed, **kwargs):
    """All replicas of iter_ensemble in one Ensemble."""
    chunks = list(iter_ensemble(spec, replicas, seed, **kwargs))
    return Ensemble(
        np.concatenate([ch.replicas for ch in chunks]),
        chunks[0].times,
        np.concatenate([ch.values for ch in chunks]),
        np.concatenate([ch.jump_increments for ch in chunks]),
        np.concatenate([ch.jump_counts for ch in chunks]),
    )


# ---------------------------------------------------------------------------
# Euler order check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EulerOrder:
    """Mean sup-norm Euler error per step and the fitted log-log slope."""

    steps: tuple
    errors: tuple
    order: float

    def to_dict(self):
        return {"steps": list(self.steps), "errors": list(self.errors), "order": self.order}


def observed_euler_order(spec, steps, fine_step, replicas, seed):
    """Fit the convergence order of solve_euler against solve_exact.

    Each replica is sampled on the fine grid; the exact solution there is
    the reference, and Euler runs on coarser grids read off the same driving
    path. Every step in `steps` must be a multiple of fine_step.
    """
    steps = tuple(float(h) for h in steps)
    fine_spec = spec.with_step(fine_step)
    errors = np.zeros((replicas, len(steps)))
    for i in range(replicas):
        realization = sample_levy(spec.triplet, spec.horizon, fine_step, seed, i)
        exact = solve_exact(fine_spec, realization)
        L = realization.path()
        for j, h in enumerate(steps):
            euler = solve_euler(spec, L, h)
            diff = euler.values - exact.values_at(euler.times)
            errors[i, j] = np.max(np.linalg.norm(diff, axis=1))
    mean_errors = errors.mean(axis=0)
    order = float(np.polyfit(np.log(steps), np.log(mean_errors), 1)[0])
    logger.info(
        f"[LevyOU][observed_euler_order] steps={list(steps)} errors={mean_errors.tolist()} "
        f"order={order:.3f}"
    )
    return EulerOrder(steps, tuple(float(e) for e in mean_errors), order)
