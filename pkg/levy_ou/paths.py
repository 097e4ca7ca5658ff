"""Finite representation of R^d-valued cadlag paths on [0, T].

A path is a right-continuous step function stored as grid samples plus an
explicit list of jump events. Between samples the value is held constant
(the value at the greatest sample time <= t), so jump counts, jump sums and
the running integral S(f, t) are exact on every stored path.

Producers that know the dynamics between samples (the exact OU solver) may
attach the analytic running integral at every sample; `integrate` then uses
it at sample times and interpolates it linearly in between, so S(f, .) stays
continuous.

Also here: the Skorohod J1 metric restricted to piecewise-linear time changes
with breakpoints at jump times, the uniform distance, and the plain-text
path record format.
"""

import io
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import PathDomainError, PathFormatError

logger = logging.getLogger("levy_ou")


def _as_vector(value, name):
    vec = np.array(value, dtype=float).reshape(-1)
    if vec.size == 0:
        raise ValueError(f"{name} must have at least one coordinate")
    if not np.all(np.isfinite(vec)):
        raise ValueError(f"{name} has non-finite entries: {vec}")
    vec.setflags(write=False)
    return vec


@dataclass(frozen=True, eq=False)
class JumpEvent:
    """One discontinuity of a path: f(s-) = pre, f(s) = post."""

    time: float
    pre: np.ndarray
    post: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "time", float(self.time))
        object.__setattr__(self, "pre", _as_vector(self.pre, "JumpEvent.pre"))
        object.__setattr__(self, "post", _as_vector(self.post, "JumpEvent.post"))
        if self.pre.shape != self.post.shape:
            raise ValueError(
                f"JumpEvent at s={self.time}: pre has {self.pre.size} coordinates, "
                f"post has {self.post.size}"
            )
        if np.array_equal(self.pre, self.post):
            raise ValueError(
                f"JumpEvent at s={self.time} has post == pre; a jump must change the value"
            )

    @property
    def size(self):
        """Jump vector f(s) - f(s-)."""
        return self.post - self.pre


@dataclass(frozen=True, eq=False)
class CadlagPath:
    """Immutable right-continuous step path with exact jump bookkeeping.

    Args:
        times: Sample times t_0 = 0 < ... < t_m = T
        values: (m+1, d) array, value at each sample time (right limits)
        jumps: JumpEvents, strictly increasing in time, each at a sample time
            with post equal to the sampled value there
        running_integral: Optional (m+1, d) array holding S(f, t_k) exactly,
            supplied by producers that integrate within steps analytically
    """

    times: np.ndarray
    values: np.ndarray
    jumps: tuple = ()
    running_integral: np.ndarray = field(default=None)

    def __post_init__(self):
        times = np.array(self.times, dtype=float).reshape(-1)
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)

        if times.size < 2:
            raise ValueError("A path needs at least two sample times (0 and T)")
        if values.ndim != 2 or values.shape[0] != times.size:
            raise ValueError(
                f"values must have shape ({times.size}, d), got {values.shape}"
            )
        if times[0] != 0.0:
            raise ValueError(f"First sample time must be 0, got {times[0]!r}")
        if not np.all(np.diff(times) > 0):
            raise ValueError("Sample times must be strictly increasing")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(values))):
            raise ValueError("Sample times and values must be finite")

        jumps = tuple(self.jumps)
        d = values.shape[1]
        horizon = times[-1]
        previous = 0.0
        for event in jumps:
            if not isinstance(event, JumpEvent):
                raise TypeError(f"jumps must hold JumpEvent records, got {type(event)}")
            if not (0.0 < event.time <= horizon):
                raise ValueError(
                    f"Jump time {event.time!r} outside (0, T] with T={horizon!r}"
                )
            if event.time <= previous:
                raise ValueError(
                    f"Jump times must be strictly increasing ({event.time!r} after {previous!r})"
                )
            previous = event.time
            k = int(np.searchsorted(times, event.time))
            if k >= times.size or times[k] != event.time:
                raise ValueError(
                    f"Jump time {event.time!r} is not one of the sample times"
                )
            if event.post.size != d:
                raise ValueError(
                    f"Jump at {event.time!r} has dimension {event.post.size}, path has {d}"
                )
            if not np.array_equal(event.post, values[k]):
                raise ValueError(
                    f"Jump at {event.time!r}: post-value {event.post} differs from "
                    f"the sampled value {values[k]} (right-continuity)"
                )

        integral = self.running_integral
        if integral is not None:
            integral = np.array(integral, dtype=float).reshape(values.shape)
            if np.any(integral[0] != 0.0):
                raise ValueError("running_integral must start at 0")
            if not np.all(np.isfinite(integral)):
                raise ValueError("running_integral must be finite")
            integral.setflags(write=False)

        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "jumps", jumps)
        object.__setattr__(self, "running_integral", integral)

    @property
    def dimension(self):
        return self.values.shape[1]

    @property
    def horizon(self):
        return float(self.times[-1])

    @property
    def sample_count(self):
        """Number of intervals m (there are m+1 samples)."""
        return self.times.size - 1

    @cached_property
    def jump_times(self):
        out = np.array([event.time for event in self.jumps], dtype=float)
        out.setflags(write=False)
        return out

    @cached_property
    def jump_sizes(self):
        if not self.jumps:
            out = np.zeros((0, self.dimension))
        else:
            out = np.vstack([event.size for event in self.jumps])
        out.setflags(write=False)
        return out

    @cached_property
    def jump_indices(self):
        """Sample index of every jump event."""
        out = np.searchsorted(self.times, self.jump_times).astype(int)
        out.setflags(write=False)
        return out

    @cached_property
    def sample_integrals(self):
        """S(f, t_k) at every sample time, as an (m+1, d) array."""
        if self.running_integral is not None:
            return self.running_integral
        out = np.zeros_like(self.values)
        np.cumsum(
            self.values[:-1] * np.diff(self.times)[:, None], axis=0, out=out[1:]
        )
        out.setflags(write=False)
        return out

    def _check_domain(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(~np.isfinite(t)) or np.any(t < 0.0) or np.any(t > self.horizon):
            raise PathDomainError(
                f"t={t!r} outside the path domain [0, {self.horizon!r}]"
            )
        return t

    def index_at(self, t):
        """Index of the greatest sample time <= t (vectorised)."""
        t = self._check_domain(t)
        return np.searchsorted(self.times, t, side="right") - 1

    def values_at(self, t):
        """Right-continuous values at an array of times, shape (len(t), d)."""
        return self.values[self.index_at(np.atleast_1d(t))]

    def __call__(self, t):
        return evaluate(self, t)


def evaluate(f, t):
    """Point evaluation p_t(f) = f(t), right-continuous.

    Raises:
        PathDomainError: t outside [0, T]
    """
    return f.values[int(f.index_at(float(t)))].copy()


def left_limit(f, t):
    """Left limit f(t-).

    At a jump time the stored pre-value is returned. At any other sample time
    the left limit is the previous sample (piecewise-constant convention).
    Strictly between samples, and at t = 0, it equals f(t).
    """
    t = float(t)
    k = int(f.index_at(t))
    if t == 0.0 or f.times[k] != t:
        return f.values[k].copy()
    j = int(np.searchsorted(f.jump_times, t))
    if j < f.jump_times.size and f.jump_times[j] == t:
        return f.jumps[j].pre.copy()
    return f.values[k - 1].copy()


def integrate(f, t):
    """Running integral S(f, t) = int_0^t f(s) ds.

    Exact for piecewise-constant paths. When the path carries an analytic
    running integral, that is used at sample times and interpolated linearly
    between them, which keeps S continuous and Lipschitz in t.

    Raises:
        PathDomainError: t outside [0, T]
    """
    return integrate_many(f, np.array([float(t)]))[0]


def integrate_many(f, ts):
    """Vectorised `integrate` over an array of times, shape (len(ts), d)."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    k = f.index_at(ts)
    if f.running_integral is None:
        return f.sample_integrals[k] + f.values[k] * (ts - f.times[k])[:, None]
    k = np.minimum(k, f.sample_count - 1)
    S = f.running_integral
    weight = (ts - f.times[k]) / (f.times[k + 1] - f.times[k])
    return S[k] + weight[:, None] * (S[k + 1] - S[k])


def _check_compatible(f, g):
    if f.dimension != g.dimension:
        raise ValueError(
            f"Paths have different dimensions ({f.dimension} vs {g.dimension})"
        )
    if f.horizon != g.horizon:
        raise ValueError(f"Paths have different horizons ({f.horizon!r} vs {g.horizon!r})")


def uniform_distance(f, g):
    """sup_t |f(t) - g(t)| over [0, T], attained on the union of both grids."""
    _check_compatible(f, g)
    grid = np.union1d(f.times, g.times)
    diff = f.values_at(grid) - g.values_at(grid)
    return float(np.max(np.linalg.norm(diff, axis=1)))


# ---------------------------------------------------------------------------
# Time changes and the Skorohod metric
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TimeChange:
    """Piecewise-linear strictly increasing bijection phi of [0, T].

    Args:
        knots: Breakpoints u_0 = 0 < ... < u_k = T
        images: phi(u_i), with phi(0) = 0, phi(T) = T, strictly increasing
    """

    knots: np.ndarray
    images: np.ndarray

    def __post_init__(self):
        knots = np.array(self.knots, dtype=float).reshape(-1)
        images = np.array(self.images, dtype=float).reshape(-1)
        if knots.size < 2 or knots.shape != images.shape:
            raise ValueError("TimeChange needs matching knots/images with at least 2 entries")
        if knots[0] != 0.0 or images[0] != 0.0:
            raise ValueError("TimeChange must fix 0")
        if knots[-1] != images[-1]:
            raise ValueError("TimeChange must fix T")
        if not (np.all(np.diff(knots) > 0) and np.all(np.diff(images) > 0)):
            raise ValueError("TimeChange must be strictly increasing")
        knots.setflags(write=False)
        images.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "images", images)

    @classmethod
    def identity(cls, horizon):
        return cls([0.0, horizon], [0.0, horizon])

    @property
    def horizon(self):
        return float(self.knots[-1])

    def __call__(self, t):
        return np.interp(t, self.knots, self.images)

    def inverse(self, s):
        return np.interp(s, self.images, self.knots)

    @property
    def displacement(self):
        """sup_t |phi(t) - t|, attained at a knot."""
        return float(np.max(np.abs(self.images - self.knots)))


def time_change_cost(f, g, phi):
    """max{sup|phi(t) - t|, sup|f(phi(t)) - g(t)|} for step paths f, g.

    f(phi(.)) changes value only at phi^{-1} of f's sample times, so the
    supremum is attained on those points together with g's sample times.
    """
    _check_compatible(f, g)
    if phi.horizon != f.horizon:
        raise ValueError("Time change horizon differs from the paths' horizon")
    grid = np.union1d(g.times, phi.inverse(f.times))
    grid = grid[(grid >= 0.0) & (grid <= f.horizon)]
    warped = np.clip(phi(grid), 0.0, f.horizon)
    diff = f.values_at(warped) - g.values_at(grid)
    return max(phi.displacement, float(np.max(np.linalg.norm(diff, axis=1))))


def single_knot_bound(f, g, resolution=0.01):
    """Brute force over time changes with one interior knot.

    Knot positions and images range over a regular grid of the given
    resolution merged with both paths' sample times. The minimum cost is an
    upper bound on skorohod_distance(f, g), and equals it when one knot
    suffices (e.g. two single steps).
    """
    _check_compatible(f, g)
    horizon = f.horizon
    n = max(2, int(round(horizon / resolution)))
    points = np.union1d(np.linspace(0.0, horizon, n + 1), np.union1d(f.times, g.times))
    points = points[(points > 0.0) & (points < horizon)]
    best = time_change_cost(f, g, TimeChange.identity(horizon))
    for u in points:
        for v in points:
            best = min(best, time_change_cost(f, g, TimeChange([0.0, u, horizon], [0.0, v, horizon])))
    return best


def _breakpoints(f):
    """Times where the step path changes value, and the successive levels."""
    changed = np.any(f.values[1:] != f.values[:-1], axis=1)
    idx = np.flatnonzero(changed) + 1
    levels = np.vstack([f.values[:1], f.values[idx]])
    return f.times[idx], levels


def _alignment_feasible(a, c, ok, eps, horizon):
    """Whether f's breakpoints a can be moved by <= eps to interleave with g's c.

    Lattice state (i, j) means i breakpoints of f(phi(.)) and j of g have been
    passed; ok[i, j] says the value gap there is acceptable. cur[i, j] is the
    earliest time at which state (i, j) can be entered; a smaller entry time
    never restricts later moves, so it is the only thing kept per state.
    Comparisons against c use differences so they agree bit-for-bit with the
    candidate values |a_i - c_j|.
    """
    p, q = a.size, c.size
    if not ok[0, 0]:
        return False
    cur = np.full((p + 1, q + 1), np.inf)
    cur[0, 0] = 0.0
    for i in range(p + 1):
        for j in range(q + 1):
            t = cur[i, j]
            if t == np.inf:
                continue
            if j < q and c[j] >= t:
                if ok[i, j + 1]:
                    cur[i, j + 1] = min(cur[i, j + 1], c[j])
                if (
                    i < p
                    and ok[i + 1, j + 1]
                    and abs(c[j] - a[i]) <= eps
                    and (a[i] < horizon) == (c[j] < horizon)
                ):
                    cur[i + 1, j + 1] = min(cur[i + 1, j + 1], c[j])
            if i < p and ok[i + 1, j]:
                ai = a[i]
                if ai >= horizon:
                    # a jump at T cannot be moved
                    if j == q or c[j] >= horizon:
                        cur[i + 1, j] = min(cur[i + 1, j], horizon)
                    continue
                if t - ai > eps:
                    continue
                b = max(t, ai - eps)
                if j < q:
                    if t > c[j] or ai - c[j] > eps:
                        continue
                    b = min(b, c[j])
                cur[i + 1, j] = min(cur[i + 1, j], b)
    return bool(cur[p, q] < np.inf)


def skorohod_distance(f, g):
    """Skorohod J1 distance between two step paths.

    d_S(f, g) = inf_phi max{sup|phi(t) - t|, sup|f(phi(t)) - g(t)|}, with phi
    restricted to piecewise-linear time changes whose breakpoints sit at jump
    times. This is exact for piecewise-constant paths. Every sample time where
    a path changes value counts as a breakpoint, so paths with many
    continuous-looking steps cost O(p q) per feasibility check.

    The optimal displacement is 0 or some |a_i - c_j|. For a fixed
    displacement eps the best value gap D(eps) is found by bisection over the
    finitely many gaps |F_i - G_j|; D is non-increasing in eps, so the answer
    is where eps overtakes D.

    Both orientations (f(phi) against g, g(phi) against f) are solved and the
    smaller value is returned; they agree up to rounding, and taking the
    minimum makes the result exactly symmetric.

    Raises:
        ValueError: mismatched dimension or horizon
    """
    _check_compatible(f, g)
    return min(_oriented_distance(f, g), _oriented_distance(g, f))


def _oriented_distance(f, g):
    horizon = f.horizon
    a, F = _breakpoints(f)
    c, G = _breakpoints(g)
    cost = np.linalg.norm(F[:, None, :] - G[None, :, :], axis=2)
    levels = np.unique(cost)
    candidates = np.unique(np.concatenate([[0.0], np.abs(a[:, None] - c[None, :]).ravel()]))

    def feasible(eps, delta):
        return _alignment_feasible(a, c, cost <= delta, eps, horizon)

    def best_gap(eps):
        lo, hi = 0, levels.size - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if feasible(eps, levels[mid]):
                hi = mid
            else:
                lo = mid + 1
        return float(levels[lo])

    # first candidate where the displacement already covers the value gap
    lo, hi = 0, candidates.size
    while lo < hi:
        mid = (lo + hi) // 2
        if feasible(candidates[mid], candidates[mid]):
            hi = mid
        else:
            lo = mid + 1

    if lo == candidates.size:
        return best_gap(float(candidates[-1]))
    if lo == 0:
        return 0.0
    return min(float(candidates[lo]), best_gap(float(candidates[lo - 1])))


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------


def path_from_samples(times, values, jump_indices=(), pre_values=None, running_integral=None):
    """Build a path from samples, declaring jumps at the given sample indices.

    Args:
        times: Sample times starting at 0
        values: (m+1, d) sample values
        jump_indices: Sample indices (>= 1) that carry a jump event
        pre_values: Optional (len(jump_indices), d) left limits; defaults to
            the previous sample for each declared jump
        running_integral: Passed through to CadlagPath
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values.reshape(-1, 1)
    jumps = []
    for n, k in enumerate(jump_indices):
        k = int(k)
        pre = values[k - 1] if pre_values is None else pre_values[n]
        jumps.append(JumpEvent(times[k], pre, values[k]))
    return CadlagPath(times, values, tuple(jumps), running_integral)


def constant_path(value, horizon):
    """The path t -> value on [0, horizon]."""
    value = np.atleast_1d(np.asarray(value, dtype=float))
    return CadlagPath([0.0, horizon], np.vstack([value, value]))


def step_path(horizon, steps, dimension=None):
    """Pure-jump path started at 0 with the given (time, jump vector) steps.

    Steps at the same time are merged into one jump of the summed size; a
    merged step that sums to zero leaves no jump.

    Example: step_path(1.0, [(0.5, 1.0)]) is the unit step 1_{[0.5, 1]}.
    """
    merged = {}
    for s, x in steps:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        s = float(s)
        merged[s] = merged[s] + x if s in merged else x
    if dimension is None:
        dimension = next(iter(merged.values())).size if merged else 1
    times = np.unique(np.concatenate([[0.0, float(horizon)], list(merged)]))
    values = np.zeros((times.size, dimension))
    indices = []
    for s in sorted(merged):
        if not np.any(merged[s]):
            continue
        k = int(np.searchsorted(times, s))
        values[k:] += merged[s]
        indices.append(k)
    return path_from_samples(times, values, indices)


# ---------------------------------------------------------------------------
# Path record files
# ---------------------------------------------------------------------------


def _fmt(x):
    # repr of a Python float is the shortest string that round-trips
    return repr(float(x))


def dumps_path(f):
    """Serialize a path to the record text format.

    Header "d, T, m, jump_count[, 1]"; then m+1 sample records "t, x_1..x_d";
    then jump records "s, pre_1..pre_d, post_1..post_d"; then, when the
    header's fifth field is 1, m+1 running-integral records "t, S_1..S_d".
    """
    buf = io.StringIO()
    header = [str(f.dimension), _fmt(f.horizon), str(f.sample_count), str(len(f.jumps))]
    if f.running_integral is not None:
        header.append("1")
    buf.write(", ".join(header) + "\n")
    for t, row in zip(f.times, f.values):
        buf.write(", ".join([_fmt(t)] + [_fmt(x) for x in row]) + "\n")
    for event in f.jumps:
        fields = [_fmt(event.time)] + [_fmt(x) for x in event.pre] + [_fmt(x) for x in event.post]
        buf.write(", ".join(fields) + "\n")
    if f.running_integral is not None:
        for t, row in zip(f.times, f.running_integral):
            buf.write(", ".join([_fmt(t)] + [_fmt(x) for x in row]) + "\n")
    return buf.getvalue()


def _parse_floats(line, lineno, expected):
    parts = [p.strip() for p in line.split(",")]
    if len(parts) != expected:
        raise PathFormatError(f"expected {expected} fields, found {len(parts)}", lineno)
    try:
        return [float(p) for p in parts]
    except ValueError as e:
        raise PathFormatError(f"not a number ({e})", lineno) from e


def loads_path(text):
    """Parse the record text format produced by `dumps_path`.

    Raises:
        PathFormatError: malformed header/record (with line number) or a
            record set that violates the path invariants
    """
    lines = [(n, ln) for n, ln in enumerate(text.splitlines(), start=1) if ln.strip()]
    if not lines:
        raise PathFormatError("empty path file", 1)

    lineno, header = lines[0]
    fields = [p.strip() for p in header.split(",")]
    if len(fields) not in (4, 5):
        raise PathFormatError(
            f"header must be 'd, T, m, jump_count[, integral_flag]', got {header!r}", lineno
        )
    try:
        d, horizon, m, njumps = int(fields[0]), float(fields[1]), int(fields[2]), int(fields[3])
        has_integral = len(fields) == 5 and int(fields[4]) == 1
    except ValueError as e:
        raise PathFormatError(f"bad header field ({e})", lineno) from e
    if d < 1 or m < 1 or njumps < 0:
        raise PathFormatError(f"header values out of range: d={d}, m={m}, jumps={njumps}", lineno)

    expected = 1 + (m + 1) + njumps + ((m + 1) if has_integral else 0)
    if len(lines) != expected:
        last = lines[-1][0]
        raise PathFormatError(
            f"expected {expected} non-blank lines for d={d}, m={m}, jumps={njumps}, found {len(lines)}",
            last,
        )

    body = lines[1:]
    sample_lines = [n for n, _ in body[: m + 1]]
    samples = np.array([_parse_floats(ln, n, d + 1) for n, ln in body[: m + 1]])
    jump_rows = [(n, _parse_floats(ln, n, 2 * d + 1)) for n, ln in body[m + 1 : m + 1 + njumps]]
    integral = None
    integral_lines = [n for n, _ in body[m + 1 + njumps :]]
    if has_integral:
        integral_rows = np.array(
            [_parse_floats(ln, n, d + 1) for n, ln in body[m + 1 + njumps :]]
        )
        integral = integral_rows[:, 1:]

    if samples[-1, 0] != horizon:
        raise PathFormatError(
            f"last sample time {samples[-1, 0]!r} differs from header T={horizon!r}",
            body[m][0],
        )

    jumps = []
    for n, row in jump_rows:
        try:
            jumps.append(JumpEvent(row[0], row[1 : d + 1], row[d + 1 :]))
        except ValueError as e:
            raise PathFormatError(str(e), n) from e
    try:
        return CadlagPath(samples[:, 0], samples[:, 1:], tuple(jumps), integral)
    except ValueError as e:
        lineno = _offending_line(samples, sample_lines, jump_rows, integral, integral_lines)
        raise PathFormatError(f"records violate path invariants: {e}", lineno) from e


def _offending_line(samples, sample_lines, jump_rows, integral, integral_lines):
    """Line of the first record that breaks a CadlagPath invariant."""
    times, values = samples[:, 0], samples[:, 1:]
    for i, row in enumerate(samples):
        if not np.all(np.isfinite(row)):
            return sample_lines[i]
        if i == 0 and row[0] != 0.0:
            return sample_lines[0]
        if i > 0 and row[0] <= times[i - 1]:
            return sample_lines[i]
    d = values.shape[1]
    previous = 0.0
    for n, row in jump_rows:
        k = int(np.searchsorted(times, row[0]))
        if (
            row[0] <= previous
            or k >= times.size
            or times[k] != row[0]
            or not np.array_equal(row[d + 1 :], values[k])
        ):
            return n
        previous = row[0]
    if integral is not None:
        for n, row in zip(integral_lines, integral):
            if not np.all(np.isfinite(row)) or (n == integral_lines[0] and np.any(row != 0.0)):
                return n
    return sample_lines[0]


def write_path(f, filename):
    Path(filename).write_text(dumps_path(f), encoding="utf-8")
    logger.debug(f"[LevyOU][write_path] {filename}: m={f.sample_count}, jumps={len(f.jumps)}")


def read_path(filename):
    return loads_path(Path(filename).read_text(encoding="utf-8"))
