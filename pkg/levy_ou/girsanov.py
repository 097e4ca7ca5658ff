"""Change of drift for Levy-driven OU processes: likelihood ratios and checks.

Two OU processes dX = AX dt + dL and dX~ = A~X~ dt + dL, with L = bt + W_Q + Z,
have equivalent laws on path space when every eigenvalue of Q is strictly
positive. The Radon-Nikodym density dP_X/dP_X~ evaluated at a path f is
taken from Girsanov's theorem applied to the Wiener part only:

  - remove the jumps of f together with the compensator drift of Z (i.e.
    subtract the increments of Z_f) and the drift b from df; what is left,
    under the X~ dynamics, is A~ f dt + dW;
  - the drift shift is (A - A~) f, so with u = Q^{-1}(A - A~) f

        log dP_X/dP_X~ (f) = int <u, df^c - b dt - A~ f dt> - 1/2 int <u, (A - A~) f> dt

The integrals are left-endpoint (Ito) sums on the path's grid. The two
terms are evaluated together as sum_k <u_k, df^c_k - b dt - (A + A~)/2 f_k dt>,
which is the same quantity and is exactly antisymmetric in (A, A~).

The formula is not checked symbolically; it is checked through the mean-one
property of exp(llr) under X~ and through re-weighting X~ samples to X.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import HypothesisViolation
from .levy import WienerCovariance
from .ou_solver import OUSpec, as_operator, iter_ensemble
from .streams import replica_seed

logger = logging.getLogger("levy_ou")


def _covariance(Q):
    return Q if isinstance(Q, WienerCovariance) else WienerCovariance(Q)


def check_equivalence_condition(Q, tol=1e-12):
    """Whether every eigenvalue of Q exceeds tol.

    In finite dimension this also makes (A - A~)x lie in the range of Q^{1/2}
    for every x, so it is the whole equivalence hypothesis.

    Returns:
        Tuple of (condition holds, smallest eigenvalue)

    Raises:
        ValueError: Q not symmetric (or not PSD)
    """
    Q = _covariance(Q)
    lam = float(np.linalg.eigvalsh(Q.matrix).min())
    return lam > tol, lam


def _llr_sum(A, A_alt, Q_inv, b, x, dxc, dt):
    """Left-point sum over the last-but-one axis; x, dxc are (..., n, d)."""
    u = x @ (Q_inv @ (A - A_alt)).T
    drift = dt[:, None] * (b[None, :] + 0.5 * (x @ (A + A_alt).T))
    return np.sum(u * (dxc - drift), axis=(-1, -2))


def _inverse_covariance(triplet, tol):
    ok, lam = check_equivalence_condition(triplet.covariance, tol)
    if not ok:
        raise HypothesisViolation(
            f"Q has smallest eigenvalue {lam:.3e} <= {tol:.1e}; the laws need not be "
            "equivalent and the Girsanov density does not exist"
        )
    return np.linalg.inv(triplet.covariance.matrix)


def log_likelihood_ratio(A, A_alt, triplet, f, Z_f, tol=1e-12):
    """log dP_X/dP_X~ at the path f.

    Args:
        A: Drift of X
        A_alt: Drift of X~
        triplet: Driving LevyTriplet (b and Q are used)
        f: Path, X or X~ sample
        Z_f: Jump part paired with f (same grid), compensator drift included

    Raises:
        HypothesisViolation: Q singular
        ValueError: f and Z_f on different grids
    """
    d = triplet.dimension
    A = as_operator(A, d, "A")
    A_alt = as_operator(A_alt, d, "A~")
    if f.times.shape != Z_f.times.shape or not np.array_equal(f.times, Z_f.times):
        raise ValueError("log_likelihood_ratio: f and Z_f must share the same grid")
    Q_inv = _inverse_covariance(triplet, tol)
    dxc = np.diff(f.values, axis=0) - np.diff(Z_f.values, axis=0)
    return float(_llr_sum(A, A_alt, Q_inv, triplet.drift, f.values[:-1], dxc, np.diff(f.times)))


def truncation_level(fX, fX_alt, A, A_alt):
    """sup_t |A fX(t) - A~ fX~(t)|: the smallest R with the pair inside Omega_R."""
    if fX.dimension != fX_alt.dimension:
        raise ValueError(
            f"truncation_level: dimensions differ ({fX.dimension} vs {fX_alt.dimension})"
        )
    if fX.horizon != fX_alt.horizon:
        raise ValueError("truncation_level: horizons differ")
    A = as_operator(A, fX.dimension, "A")
    A_alt = as_operator(A_alt, fX.dimension, "A~")
    grid = np.union1d(fX.times, fX_alt.times)
    gap = fX.values_at(grid) @ A.T - fX_alt.values_at(grid) @ A_alt.T
    return float(np.max(np.linalg.norm(gap, axis=1)))


@dataclass(frozen=True)
class ReweightingEstimate:
    """E[phi(X)] directly and as E[exp(llr(X~)) phi(X~)], phi = coordinate of f(T)."""

    coordinate: int
    direct_mean: float
    direct_se: float
    weighted_mean: float
    weighted_se: float
    difference_se: float
    passed: bool

    def to_dict(self):
        return {
            "coordinate": self.coordinate,
            "direct_mean": self.direct_mean,
            "direct_se": self.direct_se,
            "weighted_mean": self.weighted_mean,
            "weighted_se": self.weighted_se,
            "difference_se": self.difference_se,
            "passed": self.passed,
        }


@dataclass(frozen=True, eq=False)
class MeasureChangeReport:
    """Evidence for (or against) equivalence of the laws of X and X~.

    When the equivalence hypothesis fails the report carries
    hypothesis_violated=True and no Monte Carlo fields.
    """

    drift: np.ndarray
    alt_drift: np.ndarray
    replicas: int
    seed: int
    horizon: float
    step: float
    min_eigenvalue: float
    hypothesis_violated: bool
    se_multiplier: float = 3.0
    jump_role: str = "jumps"
    log_likelihood_ratios: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mean_weight: float = None
    mean_weight_se: float = None
    reweighting: tuple = ()
    truncation_level: float = None

    @property
    def mean_one_passed(self):
        if self.hypothesis_violated:
            return False
        return abs(self.mean_weight - 1.0) <= self.se_multiplier * self.mean_weight_se

    @property
    def reweighting_passed(self):
        return (not self.hypothesis_violated) and all(r.passed for r in self.reweighting)

    @property
    def passed(self):
        return self.mean_one_passed and self.reweighting_passed

    def to_dict(self):
        return {
            "drift": self.drift.tolist(),
            "alt_drift": self.alt_drift.tolist(),
            "replicas": self.replicas,
            "seed": self.seed,
            "horizon": self.horizon,
            "step": self.step,
            "min_eigenvalue": self.min_eigenvalue,
            "hypothesis_violated": self.hypothesis_violated,
            "se_multiplier": self.se_multiplier,
            "jump_role": self.jump_role,
            "mean_weight": self.mean_weight,
            "mean_weight_se": self.mean_weight_se,
            "mean_one_passed": self.mean_one_passed,
            "reweighting": [r.to_dict() for r in self.reweighting],
            "reweighting_passed": self.reweighting_passed,
            "truncation_level": self.truncation_level,
        }

    def replica_rows(self):
        """(replica, replica seed, llr, weight) per replica."""
        return [
            (i, replica_seed(self.seed, i), float(llr), float(math.exp(llr)))
            for i, llr in enumerate(self.log_likelihood_ratios)
        ]


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def _ensemble_llr(A, A_alt, Q_inv, b, chunk):
    dxc = np.diff(chunk.values, axis=1) - chunk.jump_increments
    return _llr_sum(A, A_alt, Q_inv, b, chunk.values[:, :-1], dxc, np.diff(chunk.times))


def equivalence_report(A, A_alt, triplet, replicas, seed, *, horizon=1.0, step=1e-3,
                       se_multiplier=3.0, tol=1e-12, jump_role="jumps", chunk_size=1000):
    """Simulate X and X~ with common noise and assemble a MeasureChangeReport.

    X~ samples give llr and the weights exp(llr); X samples driven by the
    same L give the direct estimates of E[f(T)] and the truncation level.
    """
    d = triplet.dimension
    A = as_operator(A, d, "A")
    A_alt = as_operator(A_alt, d, "A~")
    ok, lam = check_equivalence_condition(triplet.covariance, tol)
    if not ok:
        logger.warning(
            f"[LevyOU][equivalence_report] hypothesis violated: smallest eigenvalue of Q "
            f"is {lam:.3e} (tol {tol:.1e})"
        )
        return MeasureChangeReport(
            A, A_alt, replicas, seed, horizon, step, lam, True, se_multiplier, jump_role
        )
    if replicas < 2:
        raise ValueError("equivalence_report needs at least 2 replicas for standard errors")

    Q_inv = np.linalg.inv(triplet.covariance.matrix)
    spec = OUSpec(A, triplet, horizon, step)
    spec_alt = OUSpec(A_alt, triplet, horizon, step)
    kwargs = {"chunk_size": chunk_size, "jump_role": jump_role}

    llr, direct, weighted_terms, r_max = [], [], [], 0.0
    for chunk, chunk_alt in zip(
        iter_ensemble(spec, replicas, seed, **kwargs),
        iter_ensemble(spec_alt, replicas, seed, **kwargs),
    ):
        llr_c = _ensemble_llr(A, A_alt, Q_inv, triplet.drift, chunk_alt)
        w = np.exp(llr_c)
        llr.append(llr_c)
        direct.append(chunk.values[:, -1])
        weighted_terms.append(w[:, None] * chunk_alt.values[:, -1])
        gap = chunk.values @ A.T - chunk_alt.values @ A_alt.T
        r_max = max(r_max, float(np.max(np.linalg.norm(gap, axis=2))))

    llr = np.concatenate(llr)
    direct = np.concatenate(direct)
    weighted_terms = np.concatenate(weighted_terms)
    mean_w, se_w = _mean_se(np.exp(llr))

    estimates = []
    for i in range(d):
        dm, dse = _mean_se(direct[:, i])
        wm, wse = _mean_se(weighted_terms[:, i])
        _, diff_se = _mean_se(direct[:, i] - weighted_terms[:, i])
        passed = abs(dm - wm) <= se_multiplier * diff_se
        estimates.append(ReweightingEstimate(i, dm, dse, wm, wse, diff_se, passed))

    report = MeasureChangeReport(
        A, A_alt, replicas, seed, horizon, step, lam, False, se_multiplier, jump_role,
        llr, mean_w, se_w, tuple(estimates), r_max,
    )
    logger.info(
        f"[LevyOU][equivalence_report] N={replicas} h={step}: mean exp(llr)={mean_w:.5f} "
        f"+/- {se_w:.5f}, reweighting passed={report.reweighting_passed}, R={r_max:.4g}"
    )
    return report


@dataclass(frozen=True)
class MeanOneConvergence:
    """Mean-one gaps at steps h and h/2 computed on the same paths."""

    coarse_step: float
    coarse_mean: float
    coarse_se: float
    fine_mean: float
    fine_se: float
    difference_se: float
    se_multiplier: float

    @property
    def coarse_gap(self):
        return abs(self.coarse_mean - 1.0)

    @property
    def fine_gap(self):
        return abs(self.fine_mean - 1.0)

    @property
    def passed(self):
        k = self.se_multiplier
        return (
            self.coarse_gap <= k * self.coarse_se
            and self.fine_gap <= k * self.fine_se
            and self.fine_gap <= self.coarse_gap + k * self.difference_se
        )

    def to_dict(self):
        return {
            "coarse_step": self.coarse_step,
            "coarse_mean": self.coarse_mean,
            "coarse_se": self.coarse_se,
            "fine_mean": self.fine_mean,
            "fine_se": self.fine_se,
            "difference_se": self.difference_se,
            "coarse_gap": self.coarse_gap,
            "fine_gap": self.fine_gap,
            "passed": self.passed,
        }


def mean_one_convergence(A, A_alt, triplet, replicas, seed, *, horizon=1.0, step=1e-3,
                         se_multiplier=3.0, tol=1e-12, jump_role="jumps", chunk_size=1000):
    """E[exp(llr(X~))] at steps h and h/2 from the same X~ paths.

    X~ is simulated at h/2; the step-h value reads every other grid point of
    the same paths, so both estimates share their noise and the gap
    comparison uses the paired standard error.
    """
    d = triplet.dimension
    A = as_operator(A, d, "A")
    A_alt = as_operator(A_alt, d, "A~")
    Q_inv = _inverse_covariance(triplet, tol)
    spec_alt = OUSpec(A_alt, triplet, horizon, step / 2.0)

    coarse, fine = [], []
    for chunk in iter_ensemble(spec_alt, replicas, seed, chunk_size=chunk_size, jump_role=jump_role):
        n = chunk.jump_increments.shape[1]
        if n % 2:
            raise ValueError(f"step {step} does not divide the horizon {horizon} evenly")
        fine.append(_ensemble_llr(A, A_alt, Q_inv, triplet.drift, chunk))
        x = chunk.values[:, ::2]
        dz = chunk.jump_increments[:, 0::2] + chunk.jump_increments[:, 1::2]
        dxc = np.diff(x, axis=1) - dz
        coarse.append(
            _llr_sum(A, A_alt, Q_inv, triplet.drift, x[:, :-1], dxc, np.diff(chunk.times[::2]))
        )
    w_coarse = np.exp(np.concatenate(coarse))
    w_fine = np.exp(np.concatenate(fine))
    cm, cse = _mean_se(w_coarse)
    fm, fse = _mean_se(w_fine)
    _, dse = _mean_se(w_coarse - w_fine)
    result = MeanOneConvergence(step, cm, cse, fm, fse, dse, se_multiplier)
    logger.info(
        f"[LevyOU][mean_one_convergence] h={step}: {cm:.5f}+/-{cse:.5f}, "
        f"h/2: {fm:.5f}+/-{fse:.5f}"
    )
    return result
