"""Sampling, composition and decomposition of R^d-valued Levy processes.

A Levy process is handled through its Levy-Ito parts

    L_t = b t + W_Q(t) + Z_t,

where W_Q is a Wiener process with covariance Q and Z is the jump part: jumps
of size >= 1 summed as they are, smaller ones compensated by
t * int_{0<|u|<1} u mu(du). The intensity measure mu is a compound-Poisson
part (rate * law) plus an optional small-jump family truncated at eps > 0,
so every simulated path has finitely many, exactly recorded jumps.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import InfiniteActivityError
from .jump_calculus import (
    LARGE_JUMP_CUTOFF,
    Annulus,
    Box,
    CompensatorSpec,
    Union,
    compensated_sum_at_samples,
    jump_part,
)
from .paths import CadlagPath, path_from_samples
from .streams import stream

logger = logging.getLogger("levy_ou")

EIGENVALUE_REJECT = -1e-10


def covariance_factor(matrix, name="Q"):
    """Symmetric square root of a PSD matrix.

    Eigenvalues below -1e-10 are rejected; those in [-1e-10, 0] are clamped
    to 0 so degenerate covariances are accepted.

    Returns:
        Tuple of (factor, eigenvalues) with factor @ factor.T == matrix
        and eigenvalues as computed before clamping

    Raises:
        ValueError: matrix not square, not symmetric, or not PSD
    """
    q = np.array(matrix, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValueError(f"{name} has non-finite entries")
    if not np.allclose(q, q.T, rtol=0.0, atol=1e-12):
        raise ValueError(f"{name} is not symmetric: {q.tolist()}")
    q = 0.5 * (q + q.T)
    eigenvalues, vectors = np.linalg.eigh(q)
    if eigenvalues.size and eigenvalues.min() < EIGENVALUE_REJECT:
        raise ValueError(
            f"{name} is not positive-semidefinite: smallest eigenvalue {eigenvalues.min():.3e}"
        )
    clamped = np.clip(eigenvalues, 0.0, None)
    factor = (vectors * np.sqrt(clamped)) @ vectors.T
    return factor, eigenvalues


class WienerCovariance:
    """Covariance Q of the Wiener part together with its factor, computed once."""

    def __init__(self, matrix):
        self.matrix = np.array(matrix, dtype=float)
        if self.matrix.ndim == 0:
            self.matrix = self.matrix.reshape(1, 1)
        self.factor, self.eigenvalues = covariance_factor(self.matrix)
        self.matrix = 0.5 * (self.matrix + self.matrix.T)
        for arr in (self.matrix, self.factor, self.eigenvalues):
            arr.setflags(write=False)

    @classmethod
    def zero(cls, dimension):
        return cls(np.zeros((dimension, dimension)))

    @property
    def dimension(self):
        return self.matrix.shape[0]

    @property
    def min_eigenvalue(self):
        return float(self.eigenvalues.min())

    @property
    def is_zero(self):
        return not np.any(self.matrix)

    def __repr__(self):
        return f"WienerCovariance({self.matrix.tolist()})"


# ---------------------------------------------------------------------------
# Jump-size laws and the small-jump family
# ---------------------------------------------------------------------------


def _over_set(E, annulus_fn, box_fn, zero):
    if isinstance(E, Union):
        total = zero
        for part in E.parts:
            total = total + _over_set(part, annulus_fn, box_fn, zero)
        return total
    if isinstance(E, Annulus):
        return annulus_fn(E.inner, E.outer)
    if isinstance(E, Box):
        return box_fn(np.array(E.lower), np.array(E.upper))
    raise TypeError(f"Unsupported set type {type(E).__name__}")


class _SetMoments(ABC):
    """mass / first / second moment over sets of the supported algebra."""

    dimension = 1

    @abstractmethod
    def _annulus(self, inner, outer):
        """(mass, first moment vector, second moment) over an annulus."""

    @abstractmethod
    def _box(self, lower, upper):
        """(mass, first moment vector, second moment) over a half-open box."""

    def _moments(self, E):
        zero = np.zeros(self.dimension + 2)

        def pack(result):
            mass, first, second = result
            return np.concatenate([[mass], np.asarray(first, dtype=float), [second]])

        total = _over_set(
            E,
            lambda lo, hi: pack(self._annulus(lo, hi)),
            lambda lo, hi: pack(self._box(lo, hi)),
            zero,
        )
        return float(total[0]), total[1:-1], float(total[-1])

    def mass(self, E):
        return self._moments(E)[0]

    def first_moment(self, E):
        return self._moments(E)[1]

    def second_moment(self, E):
        return self._moments(E)[2]


class JumpLaw(_SetMoments):
    """Probability law of a single compound-Poisson jump."""

    @abstractmethod
    def sample(self, rng, n):
        """Draw n jump vectors, shape (n, d)."""


class GaussianJumpLaw(JumpLaw):
    """Centred isotropic Gaussian jumps N(0, std^2 I_d)."""

    def __init__(self, std, dimension=1):
        if not (std > 0 and math.isfinite(std)):
            raise ValueError(f"Gaussian jump std must be positive and finite, got {std}")
        self.std = float(std)
        self.dimension = int(dimension)

    def sample(self, rng, n):
        return self.std * rng.standard_normal((n, self.dimension))

    def _annulus(self, inner, outer):
        d, s2 = self.dimension, self.std**2
        lo, hi = inner**2 / s2, outer**2 / s2
        mass = stats.chi2.cdf(hi, d) - stats.chi2.cdf(lo, d)
        # E[|X|^2; X in annulus] = s^2 d (F_{d+2}(hi) - F_{d+2}(lo))
        second = s2 * d * (stats.chi2.cdf(hi, d + 2) - stats.chi2.cdf(lo, d + 2))
        return mass, np.zeros(d), second

    def _box(self, lower, upper):
        if lower.size != self.dimension:
            raise ValueError(f"Box dimension {lower.size} != jump dimension {self.dimension}")
        s = self.std
        a, b = lower / s, upper / s
        prob = stats.norm.cdf(b) - stats.norm.cdf(a)
        pdf_a, pdf_b = stats.norm.pdf(a), stats.norm.pdf(b)
        first_1d = s * (pdf_a - pdf_b)
        # z * pdf(z) -> 0 at +/- inf
        xa, xb = np.zeros_like(a), np.zeros_like(b)
        fa, fb = np.isfinite(a), np.isfinite(b)
        xa[fa] = a[fa] * pdf_a[fa]
        xb[fb] = b[fb] * pdf_b[fb]
        second_1d = s**2 * (prob + xa - xb)
        mass = float(np.prod(prob))
        first = np.empty(self.dimension)
        second = 0.0
        for i in range(self.dimension):
            others = float(np.prod(np.delete(prob, i)))
            first[i] = first_1d[i] * others
            second += second_1d[i] * others
        return mass, first, second

    def __repr__(self):
        return f"GaussianJumpLaw(std={self.std}, dimension={self.dimension})"


class DiscreteJumpLaw(JumpLaw):
    """Jumps drawn from finitely many nonzero atoms with given probabilities."""

    def __init__(self, atoms, weights):
        atoms = np.array(atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms.reshape(-1, 1)
        weights = np.array(weights, dtype=float).reshape(-1)
        if atoms.shape[0] != weights.size or weights.size == 0:
            raise ValueError(
                f"DiscreteJumpLaw: {atoms.shape[0]} atoms but {weights.size} weights"
            )
        if np.any(weights < 0) or not math.isclose(weights.sum(), 1.0, rel_tol=1e-9):
            raise ValueError(f"DiscreteJumpLaw weights must be >= 0 and sum to 1, got {weights}")
        if np.any(np.all(atoms == 0.0, axis=1)):
            raise ValueError("DiscreteJumpLaw atoms must be nonzero (a zero jump is no jump)")
        self.atoms = atoms
        self.weights = weights / weights.sum()
        self.dimension = atoms.shape[1]

    def sample(self, rng, n):
        return self.atoms[rng.choice(self.weights.size, size=n, p=self.weights)]

    def _moments(self, E):
        inside = E.contains(self.atoms)
        w = self.weights * inside
        mass = float(w.sum())
        first = w @ self.atoms
        second = float(w @ np.sum(self.atoms**2, axis=1))
        return mass, first, second

    def _annulus(self, inner, outer):
        return self._moments(Annulus(inner, outer))

    def _box(self, lower, upper):
        return self._moments(Box(tuple(lower), tuple(upper)))


def _radial(k, alpha, r1, r2):
    """int_{r1}^{r2} r^{k-1-alpha} dr for r1 <= r2."""
    if r2 <= r1:
        return 0.0
    p = k - alpha
    if r1 == 0.0 and p <= 0:
        return math.inf
    if p == 0:
        return math.log(r2 / r1)
    return (r2**p - r1**p) / p


SMALL_JUMP_MODES = ("positive", "symmetric", "isotropic")


class PowerLawSmallJumps(_SetMoments):
    """Infinite-activity small-jump family truncated at epsilon.

    The radial intensity is scale * r^(-1-alpha) dr on [epsilon, 1) with
    alpha in (0, 2), which makes int min(1, |x|^2) mu(dx) finite. The
    direction is +1 ("positive", d=1), +/-1 each with the full radial density
    ("symmetric", d=1) or uniform on the sphere ("isotropic").

    The toy measure mu(dx) = |x|^(-3/2) dx on (0, 1) is alpha=0.5, scale=1,
    mode="positive", dimension=1.

    epsilon = 0 describes the untruncated measure; it answers moment queries
    but cannot be simulated.
    """

    def __init__(self, alpha, scale=1.0, mode="positive", epsilon=0.125, dimension=1,
                 cutoff=LARGE_JUMP_CUTOFF):
        if not (0.0 < alpha < 2.0):
            raise ValueError(f"small-jump alpha must lie in (0, 2), got {alpha}")
        if not (scale > 0 and math.isfinite(scale)):
            raise ValueError(f"small-jump scale must be positive, got {scale}")
        if mode not in SMALL_JUMP_MODES:
            raise ValueError(f"small-jump mode must be one of {SMALL_JUMP_MODES}, got {mode!r}")
        if mode in ("positive", "symmetric") and dimension != 1:
            raise ValueError(f"small-jump mode {mode!r} is only defined for dimension 1")
        if not (0.0 <= epsilon <= cutoff):
            raise ValueError(f"small-jump epsilon must lie in [0, {cutoff}], got {epsilon}")
        self.alpha = float(alpha)
        self.scale = float(scale)
        self.mode = mode
        self.epsilon = float(epsilon)
        self.dimension = int(dimension)
        self.cutoff = float(cutoff)

    @property
    def truncated(self):
        return self.epsilon > 0.0

    @property
    def _radial_weight(self):
        return 2.0 if self.mode == "symmetric" else 1.0

    def _clip(self, inner, outer):
        return max(inner, self.epsilon), min(outer, self.cutoff)

    def shells(self):
        """Shell edges 1, 1/2, 1/4, ... down to epsilon, as (lo, hi) pairs."""
        if not self.truncated:
            raise InfiniteActivityError(
                "Untruncated small-jump family has infinitely many shells; set epsilon > 0"
            )
        out = []
        hi = self.cutoff
        while hi > self.epsilon:
            lo = max(hi / 2.0, self.epsilon)
            out.append((lo, hi))
            hi = lo
        return out

    def shell_rate(self, lo, hi):
        """Expected number of jumps per unit time with lo <= |x| < hi."""
        return self._radial_weight * self.scale * _radial(0, self.alpha, *self._clip(lo, hi))

    def sample(self, horizon, rng):
        """Jump times in (0, horizon] and sizes for every shell.

        Raises:
            InfiniteActivityError: epsilon == 0
        """
        times, sizes = [], []
        a = self.alpha
        for lo, hi in self.shells():
            n = int(rng.poisson(self.shell_rate(lo, hi) * horizon))
            if n == 0:
                continue
            u = rng.random(n)
            # inverse CDF of r^(-1-alpha) on [lo, hi)
            radii = (lo**-a - u * (lo**-a - hi**-a)) ** (-1.0 / a)
            times.append(horizon * (1.0 - rng.random(n)))
            sizes.append(radii[:, None] * self._directions(rng, n))
        if not times:
            return np.zeros(0), np.zeros((0, self.dimension))
        return np.concatenate(times), np.vstack(sizes)

    def _directions(self, rng, n):
        if self.mode == "positive":
            return np.ones((n, 1))
        if self.mode == "symmetric":
            return np.where(rng.random(n) < 0.5, -1.0, 1.0)[:, None]
        g = rng.standard_normal((n, self.dimension))
        return g / np.linalg.norm(g, axis=1, keepdims=True)

    def _annulus(self, inner, outer):
        lo, hi = self._clip(inner, outer)
        w = self._radial_weight * self.scale
        mass = w * _radial(0, self.alpha, lo, hi)
        second = w * _radial(2, self.alpha, lo, hi)
        first = np.zeros(self.dimension)
        if self.mode == "positive":
            first[0] = self.scale * _radial(1, self.alpha, lo, hi)
        return mass, first, second

    def _box(self, lower, upper):
        if self.dimension != 1:
            raise ValueError(
                "Box moments of the small-jump family are only available in dimension 1"
            )
        l, u = float(lower[0]), float(upper[0])
        sides = {"positive": ((1.0, 1.0),), "symmetric": ((1.0, 1.0), (-1.0, 1.0)),
                 "isotropic": ((1.0, 0.5), (-1.0, 0.5))}[self.mode]
        mass, first, second = 0.0, 0.0, 0.0
        for sign, weight in sides:
            # radii r with sign * r in [l, u)
            r_lo, r_hi = (max(l, 0.0), u) if sign > 0 else (max(-u, 0.0), -l)
            r_lo, r_hi = self._clip(r_lo, r_hi)
            c = weight * self.scale
            mass += c * _radial(0, self.alpha, r_lo, r_hi)
            first += sign * c * _radial(1, self.alpha, r_lo, r_hi)
            second += c * _radial(2, self.alpha, r_lo, r_hi)
        return mass, np.array([first]), second

    def __repr__(self):
        return (
            f"PowerLawSmallJumps(alpha={self.alpha}, scale={self.scale}, mode={self.mode!r}, "
            f"epsilon={self.epsilon}, dimension={self.dimension})"
        )


@dataclass(frozen=True, eq=False)
class JumpSpec:
    """Intensity measure: compound-Poisson rate * law plus optional small jumps."""

    rate: float = 0.0
    law: JumpLaw = None
    small_jumps: PowerLawSmallJumps = None
    dimension: int = 1
    cutoff: float = LARGE_JUMP_CUTOFF

    def __post_init__(self):
        if not (self.rate >= 0 and math.isfinite(self.rate)):
            raise ValueError(f"jump rate must be finite and >= 0, got {self.rate}")
        if self.rate > 0 and self.law is None:
            raise ValueError("a positive jump rate needs a jump-size law")
        for part in (self.law, self.small_jumps):
            if part is not None and part.dimension != self.dimension:
                raise ValueError(
                    f"jump part {part!r} has dimension {part.dimension}, spec has {self.dimension}"
                )

    @classmethod
    def none(cls, dimension):
        return cls(rate=0.0, dimension=dimension)

    @property
    def is_zero(self):
        return self.rate == 0.0 and self.small_jumps is None

    @property
    def finite_activity(self):
        return self.small_jumps is None or self.small_jumps.truncated

    def compensator(self):
        """CompensatorSpec of the simulated intensity measure."""
        terms = []
        if self.rate > 0:
            terms.append((self.rate, self.law))
        if self.small_jumps is not None:
            terms.append((1.0, self.small_jumps))
        return CompensatorSpec(tuple(terms), self.finite_activity, self.dimension)

    def compensator_drift(self):
        """int_{0<|u|<1} u mu(du), subtracted per unit time from the jump sum."""
        return self.compensator().first_moment(Annulus(0.0, self.cutoff))


@dataclass(frozen=True, eq=False)
class LevyTriplet:
    """(b, Q, mu) of a Levy process."""

    drift: np.ndarray
    covariance: WienerCovariance
    jump_spec: JumpSpec

    def __post_init__(self):
        drift = np.array(self.drift, dtype=float).reshape(-1)
        covariance = self.covariance
        if not isinstance(covariance, WienerCovariance):
            covariance = WienerCovariance(covariance)
        d = drift.size
        if covariance.dimension != d or self.jump_spec.dimension != d:
            raise ValueError(
                f"triplet dimensions disagree: b has {d}, Q has {covariance.dimension}, "
                f"jumps have {self.jump_spec.dimension}"
            )
        if not np.all(np.isfinite(drift)):
            raise ValueError("triplet drift b must be finite")
        drift.setflags(write=False)
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "covariance", covariance)

    @classmethod
    def pure_jump(cls, jump_spec):
        d = jump_spec.dimension
        return cls(np.zeros(d), WienerCovariance.zero(d), jump_spec)

    @property
    def dimension(self):
        return self.drift.size

    @property
    def is_pure_jump(self):
        return not np.any(self.drift) and self.covariance.is_zero


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def regular_grid(horizon, step):
    """0, h, 2h, ..., T with the last step shortened if h does not divide T."""
    if not (step > 0):
        raise ValueError(f"grid step must be positive, got {step}")
    if step > horizon:
        raise ValueError(f"grid step {step} exceeds the horizon {horizon}")
    n = max(1, int(math.ceil(horizon / step - 1e-9)))
    grid = np.arange(n + 1) * step
    grid[-1] = horizon
    if n > 1 and grid[-2] >= horizon:
        grid = np.linspace(0.0, horizon, n + 1)
    return grid


def draw_jumps(spec, horizon, rng, small_rng=None):
    """Jump times in (0, T] (sorted) and sizes for one replica.

    Coincident times (probability zero) are merged into one jump.

    Raises:
        InfiniteActivityError: untruncated small-jump family
    """
    times, sizes = [np.zeros(0)], [np.zeros((0, spec.dimension))]
    if spec.rate > 0:
        n = int(rng.poisson(spec.rate * horizon))
        times.append(horizon * (1.0 - rng.random(n)))
        sizes.append(spec.law.sample(rng, n))
    if spec.small_jumps is not None:
        if not spec.small_jumps.truncated:
            raise InfiniteActivityError(
                "Cannot simulate an untruncated small-jump family; set small_jump_epsilon > 0"
            )
        t_small, s_small = spec.small_jumps.sample(horizon, rng if small_rng is None else small_rng)
        times.append(t_small)
        sizes.append(s_small)
    times = np.concatenate(times)
    sizes = np.vstack(sizes)
    order = np.argsort(times, kind="stable")
    times, sizes = times[order], sizes[order]
    if times.size > 1 and np.any(np.diff(times) == 0):
        unique, inverse = np.unique(times, return_inverse=True)
        merged = np.zeros((unique.size, spec.dimension))
        np.add.at(merged, inverse, sizes)
        keep = np.any(merged != 0.0, axis=1)
        times, sizes = unique[keep], merged[keep]
    return times, sizes


def _jump_values(grid, times, sizes, drift):
    idx = np.searchsorted(grid, times)
    values = np.zeros((grid.size, sizes.shape[1]))
    np.add.at(values, idx, sizes)
    np.cumsum(values, axis=0, out=values)
    values -= grid[:, None] * drift[None, :]
    return values, idx


def _jump_path(grid, times, sizes, drift):
    values, idx = _jump_values(grid, times, sizes, drift)
    if times.size == 0:
        return CadlagPath(grid, values)
    return path_from_samples(grid, values, idx, values[idx] - sizes)


def sample_wiener(Q, grid, rng):
    """Wiener path W_Q on `grid`: independent N(0, dt Q) increments.

    Raises:
        ValueError: Q not PSD (from WienerCovariance)
    """
    if not isinstance(Q, WienerCovariance):
        Q = WienerCovariance(Q)
    grid = np.asarray(grid, dtype=float)
    values = np.zeros((grid.size, Q.dimension))
    if not Q.is_zero:
        dt = np.diff(grid)
        increments = np.sqrt(dt)[:, None] * (rng.standard_normal((dt.size, Q.dimension)) @ Q.factor.T)
        np.cumsum(increments, axis=0, out=values[1:])
    return CadlagPath(grid, values)


def sample_jump_part(spec, horizon, rng, grid=None, small_rng=None):
    """Jump part Z on [0, T]: every jump recorded, small jumps compensated.

    The path's grid is `grid` (default {0, T}) merged with the jump times.
    """
    times, sizes = draw_jumps(spec, horizon, rng, small_rng)
    base = np.array([0.0, horizon]) if grid is None else np.asarray(grid, dtype=float)
    full = np.union1d(base, times)
    return _jump_path(full, times, sizes, spec.compensator_drift())


def compose_levy(b, W, Z):
    """L_t = b t + W(t) + Z(t) on the union of both grids.

    The jump list is Z's, shifted by the continuous part b t + W(t).

    Raises:
        ValueError: mismatched dimension/horizon, or W carries jumps
    """
    b = np.array(b, dtype=float).reshape(-1)
    if W.dimension != Z.dimension or b.size != W.dimension:
        raise ValueError(
            f"compose_levy dimensions disagree: b={b.size}, W={W.dimension}, Z={Z.dimension}"
        )
    if W.horizon != Z.horizon:
        raise ValueError(f"compose_levy horizons disagree: {W.horizon} vs {Z.horizon}")
    if W.jumps:
        raise ValueError("compose_levy expects a continuous W (empty jump list)")
    grid = np.union1d(W.times, Z.times)
    continuous = b[None, :] * grid[:, None] + W.values_at(grid)
    values = continuous + Z.values_at(grid)
    if not Z.jumps:
        return CadlagPath(grid, values)
    idx = np.searchsorted(grid, Z.jump_times)
    pre = np.vstack([continuous[k] + event.pre for k, event in zip(idx, Z.jumps)])
    return path_from_samples(grid, values, idx, pre)


_SMALL_ROLE = {"jumps": "small_jumps", "resampled_jumps": "resampled_small_jumps"}


def jump_streams(seed, replica, jump_role="jumps"):
    """(compound-Poisson stream, small-jump stream) for one replica."""
    if jump_role not in _SMALL_ROLE:
        raise ValueError(f"jump_role must be one of {sorted(_SMALL_ROLE)}, got {jump_role!r}")
    return stream(seed, replica, jump_role), stream(seed, replica, _SMALL_ROLE[jump_role])


@dataclass(frozen=True, eq=False)
class LevyRealization:
    """One realised driving noise on a grid that contains every jump time.

    Attributes:
        grid: Regular grid merged with the jump times
        drift: b
        wiener: (m+1, d) Wiener values W_Q(t_k)
        jump_times: Sorted jump times
        jump_sizes: (n, d) jump vectors
        compensator_drift: int_{0<|u|<1} u mu(du)
    """

    grid: np.ndarray
    drift: np.ndarray
    wiener: np.ndarray
    jump_times: np.ndarray
    jump_sizes: np.ndarray
    compensator_drift: np.ndarray
    replica: int = field(default=0)

    @property
    def horizon(self):
        return float(self.grid[-1])

    @property
    def dimension(self):
        return self.drift.size

    @property
    def jump_indices(self):
        return np.searchsorted(self.grid, self.jump_times)

    def wiener_path(self):
        return CadlagPath(self.grid, self.wiener)

    def jump_path(self):
        return _jump_path(self.grid, self.jump_times, self.jump_sizes, self.compensator_drift)

    def path(self):
        return compose_levy(self.drift, self.wiener_path(), self.jump_path())

    def without_wiener(self):
        return LevyRealization(
            self.grid, self.drift, np.zeros_like(self.wiener), self.jump_times,
            self.jump_sizes, self.compensator_drift, self.replica,
        )


def sample_levy(triplet, horizon, step, seed, replica=0, jump_role="jumps"):
    """Draw one replica of L: jumps first, then W on the merged grid.

    Args:
        triplet: LevyTriplet
        horizon: T
        step: Regular grid step h
        seed: Master seed
        replica: Replica index
        jump_role: "jumps", or "resampled_jumps" for an independent jump draw
            sharing the replica's Wiener stream

    Returns:
        LevyRealization
    """
    spec = triplet.jump_spec
    times, sizes = draw_jumps(spec, horizon, *jump_streams(seed, replica, jump_role))
    grid = np.union1d(regular_grid(horizon, step), times)
    wiener = sample_wiener(triplet.covariance, grid, stream(seed, replica, "wiener")).values
    logger.debug(
        f"[LevyOU][sample_levy] replica={replica}: {times.size} jumps, {grid.size} grid points"
    )
    return LevyRealization(
        grid, triplet.drift.copy(), wiener, times, sizes, spec.compensator_drift(), replica
    )


# ---------------------------------------------------------------------------
# Decomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LevyDecomposition:
    """Empirical Levy-Ito split of a single path.

    Attributes:
        trend: b_hat = (f(T) - J(T)) / T
        trend_se: Standard error of each trend coordinate, sqrt(Q_hat_ii / T)
        covariance: Q_hat from the realised quadratic variation of the
            continuous remainder
        continuous: f - J - b_hat t (no jumps)
        jumps: Jump part J(t): every jump summed, minus t * int_{0<|u|<1} u mu(du)
            when a compensator is given
    """

    trend: np.ndarray
    trend_se: np.ndarray
    covariance: np.ndarray
    continuous: CadlagPath
    jumps: CadlagPath

    def recompose(self):
        return compose_levy(self.trend, self.continuous, self.jumps)


def decompose_levy(f, compensator=None, cutoff=LARGE_JUMP_CUTOFF):
    """Split a path into trend, continuous part and jump part.

    The jump part is compensated with the intensity measure when one is
    given, so b_hat estimates b. Without it the compensator drift of the small
    jumps ends up in the trend.

    Raises:
        ValueError: compensator and path dimensions differ
    """
    if compensator is not None and compensator.dimension != f.dimension:
        raise ValueError(
            f"decompose_levy: compensator has dimension {compensator.dimension}, "
            f"path has {f.dimension}"
        )
    J = jump_part(f, compensator, cutoff)
    horizon = f.horizon
    trend = (f.values[-1] - J.values[-1]) / horizon
    remainder = f.values - J.values - f.times[:, None] * trend[None, :]
    increments = np.diff(remainder, axis=0)
    covariance = increments.T @ increments / horizon
    trend_se = np.sqrt(np.clip(np.diag(covariance), 0.0, None) / horizon)
    logger.info(
        f"[LevyOU][decompose_levy] {len(f.jumps)} jumps, trend={trend.tolist()}"
    )
    return LevyDecomposition(trend, trend_se, covariance, CadlagPath(f.times, remainder), J)


# ---------------------------------------------------------------------------
# Compensated small-jump convergence
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProbeRow:
    """Variance of Z2 over one shell [inner, outer) against its analytic value."""

    outer: float
    inner: float
    empirical_variance: float
    analytic_variance: float

    @property
    def ratio(self):
        if self.analytic_variance == 0.0:
            return 1.0 if self.empirical_variance == 0.0 else math.inf
        return self.empirical_variance / self.analytic_variance

    def to_dict(self):
        return {
            "outer": self.outer,
            "inner": self.inner,
            "empirical_variance": self.empirical_variance,
            "analytic_variance": self.analytic_variance,
            "ratio": self.ratio,
        }


def small_jump_convergence_probe(spec, t, epsilons, replicas, seed):
    """Variance of Z2_{E_n^c}(L, t) - Z2_{E_{n-1}^c}(L, t) per shell.

    The difference is the compensated sum over {eps_n <= |x| < eps_{n-1}}
    (with eps_0 = 1); its variance should match t * int |x|^2 mu(dx) over
    that shell. Only the small-jump family is sampled.

    Args:
        spec: JumpSpec
        t: Evaluation time
        epsilons: Non-increasing thresholds, none below the family's epsilon
        replicas: Number of independent replicas
        seed: Master seed (stream role "small_jumps")

    Returns:
        List of ProbeRow, one per threshold
    """
    eps = [float(e) for e in epsilons]
    if any(e <= 0 or e > spec.cutoff for e in eps):
        raise ValueError(f"probe thresholds must lie in (0, {spec.cutoff}], got {eps}")
    if any(b > a for a, b in zip(eps, eps[1:])):
        raise ValueError(f"probe thresholds must be non-increasing, got {eps}")
    edges = [spec.cutoff] + eps
    family = spec.small_jumps

    if family is None:
        logger.warning(
            "[LevyOU][small_jump_convergence_probe] spec has no small-jump family; "
            "every shell difference is 0"
        )
        return [ProbeRow(hi, lo, 0.0, 0.0) for hi, lo in zip(edges, edges[1:])]
    if eps and min(eps) < family.epsilon:
        raise ValueError(
            f"probe threshold {min(eps)} is below the simulated truncation {family.epsilon}"
        )

    mu = CompensatorSpec(((1.0, family),), True, spec.dimension)
    shells = [Annulus(lo, hi) for hi, lo in zip(edges, edges[1:])]
    diffs = np.zeros((replicas, len(shells), spec.dimension))
    grid = np.array([0.0, float(t)])
    for i in range(replicas):
        times, sizes = family.sample(t, stream(seed, i, "small_jumps"))
        order = np.argsort(times)
        path = _jump_path(np.union1d(grid, times), times[order], sizes[order], np.zeros(spec.dimension))
        for n, shell in enumerate(shells):
            if not shell.empty:
                diffs[i, n] = compensated_sum_at_samples(shell, mu, path)[-1]

    rows = []
    for n, shell in enumerate(shells):
        empirical = float(np.sum(np.var(diffs[:, n], axis=0, ddof=1))) if replicas > 1 else 0.0
        analytic = float(t * mu.second_moment(shell))
        rows.append(ProbeRow(shell.outer, shell.inner, empirical, analytic))
        logger.info(
            f"[LevyOU][small_jump_convergence_probe] shell [{shell.inner}, {shell.outer}): "
            f"empirical={empirical:.6g}, analytic={analytic:.6g}"
        )
    return rows
