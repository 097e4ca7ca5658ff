"""Exact jump-measure functionals on cadlag paths.

For a path f and a Borel set E of jump sizes:

    count_jumps  pi_t(E, f)  = #{s <= t : df(s) in E}
    z1           Z1_E(f, t)  = sum of df(s) in E, s <= t
    z2           Z2_E(f, t)  = Z1_E(f, t) - t * int_E u mu(du)

All of them fold the path's jump list, so they are exact. Sets come from a
small closed algebra (norm annuli, half-open boxes, finite unions) whose
membership is decidable exactly.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import SetContractError
from .paths import CadlagPath, path_from_samples

logger = logging.getLogger("levy_ou")

# Large/small jump cutoff: jumps with |x| >= LARGE_JUMP_CUTOFF are summed
# uncompensated, smaller ones are compensated.
LARGE_JUMP_CUTOFF = 1.0


class BorelSetSpec(ABC):
    """A set of jump sizes in R^d from the supported algebra."""

    @abstractmethod
    def contains(self, x):
        """Membership for an (n, d) array of points, returns a boolean (n,) array."""

    @property
    @abstractmethod
    def distance_from_origin(self):
        """dist(0, E) = inf over x in E of |x|."""

    @property
    @abstractmethod
    def bounded(self):
        """True when E lies in some ball."""

    @property
    def bounded_below(self):
        """True when dist(0, E) > 0, so only finitely many jumps land in E."""
        return self.distance_from_origin > 0.0


@dataclass(frozen=True)
class Annulus(BorelSetSpec):
    """Norm annulus {inner <= |x| < outer}; outer may be inf, inner may be 0."""

    inner: float
    outer: float = math.inf

    def __post_init__(self):
        if not (0.0 <= self.inner <= self.outer):
            raise ValueError(
                f"Annulus needs 0 <= inner <= outer, got inner={self.inner}, outer={self.outer}"
            )

    def contains(self, x):
        r = np.linalg.norm(np.atleast_2d(x), axis=1)
        return (r >= self.inner) & (r < self.outer)

    @property
    def distance_from_origin(self):
        return float(self.inner)

    @property
    def bounded(self):
        return math.isfinite(self.outer)

    @property
    def empty(self):
        return self.inner == self.outer


@dataclass(frozen=True)
class Box(BorelSetSpec):
    """Axis-aligned half-open box prod_i [lower_i, upper_i)."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lower) != len(upper):
            raise ValueError("Box lower/upper corners have different dimensions")
        if any(lo > hi for lo, hi in zip(lower, upper)):
            raise ValueError(f"Box has lower > upper: {lower} vs {upper}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    def contains(self, x):
        x = np.atleast_2d(x)
        lo = np.array(self.lower)
        hi = np.array(self.upper)
        return np.all((x >= lo) & (x < hi), axis=1)

    @property
    def distance_from_origin(self):
        lo = np.array(self.lower)
        hi = np.array(self.upper)
        gap = np.maximum(np.maximum(lo, -hi), 0.0)
        return float(np.linalg.norm(gap))

    @property
    def bounded(self):
        return all(math.isfinite(v) for v in self.lower + self.upper)


def _norm_range(E):
    """Closure of {|x| : x in E} for an annulus or box, as (low, high)."""
    if isinstance(E, Annulus):
        return E.inner, E.outer
    far = np.maximum(np.abs(np.array(E.lower)), np.abs(np.array(E.upper)))
    return E.distance_from_origin, float(np.linalg.norm(far))


def _overlap(p, q):
    if isinstance(p, Box) and isinstance(q, Box):
        lo = np.maximum(np.array(p.lower), np.array(q.lower))
        hi = np.minimum(np.array(p.upper), np.array(q.upper))
        return bool(np.all(lo < hi))
    (a, b), (c, e) = _norm_range(p), _norm_range(q)
    return max(a, c) < min(b, e)


@dataclass(frozen=True)
class Union(BorelSetSpec):
    """Finite union of pairwise disjoint parts.

    Measures are summed over the parts, so overlapping parts are rejected.
    Nested unions are flattened.

    Raises:
        ValueError: no parts, or two parts that overlap
    """

    parts: tuple

    def __post_init__(self):
        flat = []
        for part in self.parts:
            flat.extend(part.parts if isinstance(part, Union) else (part,))
        object.__setattr__(self, "parts", tuple(flat))
        if not self.parts:
            raise ValueError("Union needs at least one part")
        for i, p in enumerate(self.parts):
            for q in self.parts[i + 1 :]:
                if _overlap(p, q):
                    raise ValueError(f"Union parts must be disjoint; {p!r} overlaps {q!r}")

    def contains(self, x):
        out = self.parts[0].contains(x)
        for part in self.parts[1:]:
            out = out | part.contains(x)
        return out

    @property
    def distance_from_origin(self):
        return min(part.distance_from_origin for part in self.parts)

    @property
    def bounded(self):
        return all(part.bounded for part in self.parts)


def shell_complement(eps, cutoff=LARGE_JUMP_CUTOFF):
    """E_n^c = B_1 minus the eps-ball, i.e. {eps <= |x| < 1}."""
    return Annulus(eps, cutoff)


LARGE_JUMPS = Annulus(LARGE_JUMP_CUTOFF, math.inf)
PUNCTURED_UNIT_BALL = Annulus(0.0, LARGE_JUMP_CUTOFF)


@dataclass(frozen=True)
class CompensatorSpec:
    """Intensity measure mu as a weighted sum of components.

    Each term is (weight, component) where the component answers
    mass(E), first_moment(E) = int_E u mu(du) and second_moment(E) =
    int_E |u|^2 mu(du). A compound-Poisson part enters as (rate, law).
    All three are linear in E over disjoint unions.
    """

    terms: tuple = ()
    finite_activity: bool = True
    dimension: int = 1

    def mass(self, E):
        return float(sum(w * comp.mass(E) for w, comp in self.terms))

    def first_moment(self, E):
        out = np.zeros(self.dimension)
        for w, comp in self.terms:
            out = out + w * np.asarray(comp.first_moment(E), dtype=float)
        return out

    def second_moment(self, E):
        return float(sum(w * comp.second_moment(E) for w, comp in self.terms))


def zero_measure(dimension):
    return CompensatorSpec(terms=(), finite_activity=True, dimension=dimension)


def _check_time(f, t):
    # reuse the path's domain check
    f.index_at(t)
    return float(t)


def _jump_mask(E, f, t=None):
    if not f.jumps:
        return np.zeros(0, dtype=bool)
    mask = E.contains(f.jump_sizes)
    if t is not None:
        mask &= f.jump_times <= t
    return mask


def _require_bounded_below(E, what):
    if not E.bounded_below:
        raise SetContractError(
            f"{what} needs a set bounded below (dist(0,E) > 0); got {E!r}"
        )


def count_jumps(E, f, t):
    """pi_t(E, f): number of jumps up to and including t with size in E."""
    t = _check_time(f, t)
    return int(np.count_nonzero(_jump_mask(E, f, t)))


def z1(E, f, t):
    """Z1_E(f, t): sum of the jumps up to t whose size lies in E.

    Raises:
        SetContractError: E not bounded below
    """
    _require_bounded_below(E, "z1")
    t = _check_time(f, t)
    mask = _jump_mask(E, f, t)
    return f.jump_sizes[mask].sum(axis=0) if mask.size else np.zeros(f.dimension)


def z2(E, mu, f, t):
    """Z2_E(f, t) = Z1_E(f, t) - t * int_E u mu(du).

    The compensator grows linearly in t, which is what makes the
    compensated sum centred.

    Raises:
        SetContractError: E not bounded below, or E unbounded
    """
    _require_bounded_below(E, "z2")
    if not E.bounded:
        raise SetContractError(f"z2 needs a bounded set; got {E!r}")
    t = _check_time(f, t)
    return z1(E, f, t) - t * mu.first_moment(E)


def z1_at_samples(E, f, *, allow_unbounded_below=False):
    """Z1_E(f, t_k) at every sample time, shape (m+1, d)."""
    if not allow_unbounded_below:
        _require_bounded_below(E, "z1_at_samples")
    out = np.zeros((f.times.size, f.dimension))
    if f.jumps:
        mask = E.contains(f.jump_sizes)
        np.add.at(out, f.jump_indices[mask], f.jump_sizes[mask])
        np.cumsum(out, axis=0, out=out)
    return out


def compensated_sum_at_samples(E, mu, f, *, finite_activity_limit=False):
    """Z2_E(f, t_k) at every sample time.

    With finite_activity_limit=True, E may touch the origin (e.g. the
    punctured unit ball); this is only meaningful when mu has finite mass
    near 0, which is checked.
    """
    if finite_activity_limit:
        if not mu.finite_activity:
            raise SetContractError(
                "The limit over shells is only taken in closed form for finite-activity measures"
            )
    else:
        _require_bounded_below(E, "compensated_sum_at_samples")
        if not E.bounded:
            raise SetContractError(f"compensated sums need a bounded set; got {E!r}")
    sums = z1_at_samples(E, f, allow_unbounded_below=finite_activity_limit)
    return sums - f.times[:, None] * mu.first_moment(E)[None, :]


def z1_path(E, f):
    """t -> Z1_E(f, t) as a CadlagPath on f's grid."""
    values = z1_at_samples(E, f)
    if not f.jumps:
        return CadlagPath(f.times, values)
    mask = E.contains(f.jump_sizes)
    indices = f.jump_indices[mask]
    pre = values[indices] - f.jump_sizes[mask]
    return path_from_samples(f.times, values, indices, pre)


def jump_part(f, compensator=None, cutoff=LARGE_JUMP_CUTOFF):
    """Extract Z_f from a path's jump list.

    Z_f(t) = sum of jumps up to t - t * int_{0<|u|<cutoff} u mu(du). Without a
    compensator the jumps are summed uncompensated.
    """
    values = z1_at_samples(Annulus(0.0), f, allow_unbounded_below=True)
    if compensator is not None:
        drift = compensator.first_moment(Annulus(0.0, cutoff))
        values = values - f.times[:, None] * drift[None, :]
    if not f.jumps:
        return CadlagPath(f.times, values)
    indices = f.jump_indices
    return path_from_samples(f.times, values, indices, values[indices] - f.jump_sizes)


def _signature_sets(thresholds):
    radii = [float(r) for r in thresholds]
    if not radii:
        raise ValueError("jump_signature needs at least one radius")
    if any(r <= 0.0 for r in radii):
        raise ValueError(f"jump_signature radii must be strictly positive, got {radii}")
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError(f"jump_signature radii must be strictly increasing, got {radii}")
    edges = radii + [math.inf]
    return [Annulus(lo, hi) for lo, hi in zip(edges, edges[1:])]


def jump_signature(f, thresholds, t=None):
    """Jump counts per annulus [r_0, r_1), ..., [r_{k-1}, inf) up to t (default T)."""
    t = f.horizon if t is None else t
    return np.array([count_jumps(E, f, t) for E in _signature_sets(thresholds)], dtype=int)


def jump_signature_at_samples(f, thresholds):
    """(m+1, k) array of jump_signature at every sample time."""
    sets = _signature_sets(thresholds)
    out = np.zeros((f.times.size, len(sets)), dtype=int)
    if f.jumps:
        for col, E in enumerate(sets):
            mask = E.contains(f.jump_sizes)
            np.add.at(out[:, col], f.jump_indices[mask], 1)
        np.cumsum(out, axis=0, out=out)
    return out
