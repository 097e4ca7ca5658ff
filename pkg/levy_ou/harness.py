"""Experiment orchestration: config loading, commands, result files, manifest.

A run is fully determined by its validated config (master seed included):
replica i always draws from the streams of (seed, i), replicas are written
in index order whatever the worker count, and CSV numbers use the shortest
round-trip representation, so the same config reproduces every CSV byte.
"""

import csv
import hashlib
import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import partial
from multiprocessing import Pool
from pathlib import Path

import numpy as np
import yaml

from . import PACKAGE_VERSION
from .errors import ConfigError, HypothesisViolation
from .girsanov import check_equivalence_condition, equivalence_report, mean_one_convergence
from .jump_calculus import LARGE_JUMPS, jump_signature_at_samples, z1_path
from .levy import (
    DiscreteJumpLaw,
    GaussianJumpLaw,
    JumpSpec,
    LevyTriplet,
    PowerLawSmallJumps,
    decompose_levy,
    sample_levy,
    small_jump_convergence_probe,
)
from .ou_solver import OUSpec, observed_euler_order, solve_exact
from .paths import (
    read_path,
    single_knot_bound,
    skorohod_distance,
    step_path,
    uniform_distance,
    write_path,
)
from .rigidity import (
    INDISTINGUISHABLE_TOL,
    SIGNATURE_RADII,
    Verdict,
    distinctness_verdict,
    drift_recovery_trial,
    xi_residual,
)
from .serializers import (
    CRITERIA,
    RUNTIME_FIELDS,
    DistinctnessVerdictSerializer,
    ExperimentConfigSerializer,
    MeasureChangeReportSerializer,
    ProbeRowSerializer,
    RunManifestSerializer,
)
from .streams import replica_seed, stream

logger = logging.getLogger("levy_ou")

XI_TOL = 1e-8
RECOVERY_TOL = 1e-6
ROUND_TRIP_TOL = 1e-12
TRIANGLE_TOL = 1e-12
ORACLE_TOL = 1e-3
PROBE_RELATIVE_TOL = 0.1
# Recovery may refuse (SingularGram) only when the first jump leaves less
# than this share of the horizon to observe the drift.
LATE_JUMP_SHARE = 0.05


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def _first_message(messages):
    if isinstance(messages, dict):
        key, inner = next(iter(messages.items()))
        return f"[{key}] {_first_message(inner)}"
    if isinstance(messages, (list, tuple)):
        return " ".join(_first_message(m) for m in messages)
    return str(messages)


def validate_config(raw):
    """Validate a flat mapping and return the config with defaults filled in.

    Raises:
        ConfigError: naming the first offending field
    """
    if not isinstance(raw, dict):
        raise ConfigError(f"config must be a flat mapping, got {type(raw).__name__}")
    serializer = ExperimentConfigSerializer(data=raw)
    if not serializer.is_valid():
        field_name, messages = next(iter(serializer.errors.items()))
        raise ConfigError(_first_message(messages), field_name)
    return dict(serializer.validated_data)


def load_config(filename=None, overrides=None):
    """Read a YAML config (optional), apply overrides and validate."""
    raw = {}
    if filename is not None:
        try:
            text = Path(filename).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config file {filename}: {e}") from e
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"config file {filename} is not valid YAML: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {filename} must hold a flat mapping")
    raw = dict(raw)
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return validate_config(raw)


def config_hash(config):
    """SHA-256 of the canonical JSON of a validated config (runtime fields excluded)."""
    canonical = {k: v for k, v in config.items() if k not in RUNTIME_FIELDS}
    payload = json.dumps(canonical, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _matrix(values, d):
    if not values:
        return np.zeros((d, d))
    return np.array(values, dtype=float).reshape(d, d)


def build_triplet(config):
    """LevyTriplet from the process fields of a validated config."""
    d = config["dimension"]
    try:
        law = None
        if config["jump_rate"] > 0:
            if config["jump_law"] == "gaussian":
                law = GaussianJumpLaw(config["jump_std"], d)
            else:
                atoms = np.array(config["jump_atoms"], dtype=float).reshape(-1, d)
                law = DiscreteJumpLaw(atoms, config["jump_weights"])
        small = None
        if config["small_jump_alpha"] is not None:
            small = PowerLawSmallJumps(
                config["small_jump_alpha"],
                config["small_jump_scale"],
                config["small_jump_mode"],
                config["small_jump_epsilon"],
                d,
            )
        jumps = JumpSpec(config["jump_rate"], law, small, d)
        drift = config["drift_vector"] or np.zeros(d)
        return LevyTriplet(drift, _matrix(config["covariance"], d), jumps)
    except ValueError as e:
        raise ConfigError(f"invalid process parameters: {e}") from e


def build_spec(config, drift_key="drift"):
    """OUSpec with the operator stored under drift_key."""
    triplet = build_triplet(config)
    d = config["dimension"]
    try:
        return OUSpec(_matrix(config[drift_key], d), triplet, config["horizon"], config["step"])
    except ValueError as e:
        raise ConfigError(str(e), drift_key) from e


# ---------------------------------------------------------------------------
# Result files
# ---------------------------------------------------------------------------


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


@dataclass
class _Outputs:
    directory: Path
    files: list = field(default_factory=list)

    def path(self, name):
        target = self.directory / name
        target.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(name)
        return target

    def csv(self, name, header, rows):
        with self.path(name).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_cell(v) for v in row])

    def json(self, name, data):
        self.path(name).write_text(
            json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def record(self, name, serializer_class, data):
        serializer = serializer_class(data=data)
        serializer.is_valid(raise_exception=True)
        self.json(name, serializer.validated_data)

    def path_file(self, name, f):
        write_path(f, self.path(name))


@contextmanager
def _replica_map(workers):
    """map-like callable over replica indices; a process pool when workers > 1."""
    if workers <= 1:
        yield map
        return
    with Pool(processes=workers) as pool:
        yield pool.map


def _coordinates(prefix, d):
    return [f"{prefix}_{i}" for i in range(d)]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _simulate_replica(spec, seed, replica):
    realization = sample_levy(spec.triplet, spec.horizon, spec.step, seed, replica)
    return solve_exact(spec, realization), realization.jump_path()


def _simulate(config, out, map_fn):
    spec = build_spec(config)
    d, seed = spec.dimension, config["seed"]
    pure = spec.triplet.is_pure_jump
    mu = spec.triplet.jump_spec.compensator()

    invariant, xi_ok, rows = True, True, []
    results = map_fn(partial(_simulate_replica, spec, seed), range(config["replicas"]))
    for i, (X, Z) in enumerate(results):
        same = np.array_equal(
            jump_signature_at_samples(X, SIGNATURE_RADII),
            jump_signature_at_samples(Z, SIGNATURE_RADII),
        )
        invariant = invariant and same
        residual = xi_residual(spec.drift, X, mu).sup_norm if pure else None
        if residual is not None:
            xi_ok = xi_ok and residual <= XI_TOL
        out.path_file(f"paths/replica_{i:05d}.txt", X)
        out.path_file(f"paths/driving_jumps_{i:05d}.txt", Z)
        rows.append([i, replica_seed(seed, i), len(X.jumps), same, *X.values[-1], residual])

    out.csv(
        "simulate.csv",
        ["replica", "replica_seed", "jump_count", "signature_match", *_coordinates("x_T", d),
         "xi_residual"],
        rows,
    )
    logger.info(
        f"[LevyOU][simulate] {len(rows)} replicas, jump invariance={invariant}, "
        f"xi full measure={xi_ok if pure else 'n/a'}"
    )
    return {"jump_invariance": invariant, "xi_full_measure": xi_ok if pure else None}


def decompose(path_file, output_dir, compensator=None):
    """Split a path file into trend, continuous part and jump part files.

    Writes trend.csv (coordinate, trend, standard error), continuous.txt,
    jumps.txt and large_jumps.txt (the uncompensated sum of jumps with
    |x| >= 1) under output_dir. The compensator, when given, is the intensity
    measure the path was drawn with.

    Returns:
        (LevyDecomposition, round-trip sup-distance)
    """
    f = read_path(path_file)
    result = decompose_levy(f, compensator)
    error = uniform_distance(result.recompose(), f)
    out = _Outputs(Path(output_dir))
    out.csv(
        "trend.csv",
        ["coordinate", "trend", "trend_se"],
        [[i, b, se] for i, (b, se) in enumerate(zip(result.trend, result.trend_se))],
    )
    out.path_file("continuous.txt", result.continuous)
    out.path_file("jumps.txt", result.jumps)
    out.path_file("large_jumps.txt", z1_path(LARGE_JUMPS, f))
    logger.info(f"[LevyOU][decompose] {path_file}: round-trip error {error:.3e}")
    return result, error


def _decompose_replica(triplet, horizon, step, seed, replica):
    L = sample_levy(triplet, horizon, step, seed, replica).path()
    result = decompose_levy(L, triplet.jump_spec.compensator())
    return len(L.jumps), result.trend, result.trend_se, uniform_distance(result.recompose(), L)


def _decompose(config, out, map_fn):
    triplet = build_triplet(config)
    if config["path_file"]:
        _, error = decompose(config["path_file"], out.directory, triplet.jump_spec.compensator())
        out.files.extend(["trend.csv", "continuous.txt", "jumps.txt", "large_jumps.txt"])
        return {"levy_ito_round_trip": error <= ROUND_TRIP_TOL}

    d, seed = triplet.dimension, config["seed"]
    task = partial(_decompose_replica, triplet, config["horizon"], config["step"], seed)
    rows, worst = [], 0.0
    for i, (count, trend, se, error) in enumerate(map_fn(task, range(config["replicas"]))):
        worst = max(worst, error)
        rows.append([i, replica_seed(seed, i), count, *trend, *se, error])
    out.csv(
        "decompose.csv",
        ["replica", "replica_seed", "jump_count", *_coordinates("trend", d),
         *_coordinates("trend_se", d), "round_trip_error"],
        rows,
    )
    logger.info(f"[LevyOU][decompose] {len(rows)} sampled paths, worst round trip {worst:.3e}")
    return {"levy_ito_round_trip": worst <= ROUND_TRIP_TOL}


def hypothesis_sensitivity(dimension, seed=0):
    """Q = I passes the equivalence condition; Q with a zero eigenvalue is reported as violated."""
    full = np.eye(dimension)
    degenerate = np.eye(dimension)
    degenerate[-1, -1] = 0.0
    ok_full, _ = check_equivalence_condition(full)
    ok_degenerate, _ = check_equivalence_condition(degenerate)
    triplet = LevyTriplet(np.zeros(dimension), degenerate, JumpSpec.none(dimension))
    report = equivalence_report(np.zeros((dimension, dimension)), -full, triplet, 2, seed)
    return bool(ok_full and not ok_degenerate and report.hypothesis_violated)


def _girsanov_check(config, out, map_fn):
    spec = build_spec(config)
    A_alt = _matrix(config["alt_drift"], spec.dimension)
    kwargs = {
        "horizon": config["horizon"],
        "step": config["step"],
        "se_multiplier": config["se_multiplier"],
        "tol": config["equivalence_tol"],
        "jump_role": config["jump_role"],
    }
    report = equivalence_report(
        spec.drift, A_alt, spec.triplet, config["replicas"], config["seed"], **kwargs
    )
    out.record("girsanov_report.json", MeasureChangeReportSerializer, report.to_dict())
    criteria = {"hypothesis_sensitivity": hypothesis_sensitivity(spec.dimension, config["seed"])}
    if report.hypothesis_violated:
        logger.warning(
            "[LevyOU][girsanov-check] Q is not positive definite; mean-one and "
            "reweighting criteria are not evaluated"
        )
        return {**criteria, "girsanov_mean_one": None, "reweighting": None}

    out.csv("llr.csv", ["replica", "replica_seed", "llr", "weight"], report.replica_rows())
    convergence = mean_one_convergence(
        spec.drift, A_alt, spec.triplet, config["replicas"], config["seed"], **kwargs
    )
    out.json("mean_one_convergence.json", convergence.to_dict())
    return {
        **criteria,
        "girsanov_mean_one": bool(report.mean_one_passed and convergence.passed),
        "reweighting": report.reweighting_passed,
    }


def _violation(out, name, error):
    logger.warning(f"[LevyOU][{name}] hypothesis violated: {error}")
    out.json(f"{name}.json", {"hypothesis_violated": True, "message": str(error)})


def _recover_drift(config, out, map_fn):
    spec = build_spec(config)
    if not spec.triplet.is_pure_jump:
        _violation(out, "recover_drift", HypothesisViolation(
            "drift recovery needs a pure-jump driving process (b = 0, Q = 0)"
        ))
        return {"drift_recovery": False}

    task = partial(drift_recovery_trial, spec, config["seed"], sigma_tol=config["sigma_tol"])
    trials = list(map_fn(task, range(config["replicas"])))
    late = spec.horizon * (1.0 - LATE_JUMP_SHARE)
    passed = True
    for trial in trials:
        if trial.status == "recovered":
            passed = passed and trial.error <= RECOVERY_TOL and trial.refit_error <= RECOVERY_TOL
        elif trial.status == "singular":
            passed = passed and trial.first_jump >= late
    out.csv(
        "recovery.csv",
        ["replica", "replica_seed", "jump_count", "status", "error", "refit_error", "sigma_min",
         "first_jump"],
        [[t.replica, replica_seed(config["seed"], t.replica), t.jump_count, t.status, t.error,
          t.refit_error, t.sigma_min, t.first_jump] for t in trials],
    )
    recovered = sum(t.status == "recovered" for t in trials)
    logger.info(
        f"[LevyOU][recover-drift] recovered {recovered}/{len(trials)} replicas, passed={passed}"
    )
    return {"drift_recovery": passed}


def expected_verdict(spec, alt_drift):
    """Verdict a correct procedure reaches for this pair of drifts."""
    if np.allclose(spec.drift, alt_drift, rtol=0.0, atol=INDISTINGUISHABLE_TOL):
        return Verdict.INDISTINGUISHABLE
    if spec.triplet.jump_spec.is_zero:
        return Verdict.INCONCLUSIVE
    return Verdict.DISTINCT


def _distinctness(config, out, map_fn):
    spec = build_spec(config)
    A_alt = _matrix(config["alt_drift"], spec.dimension)
    try:
        verdict = distinctness_verdict(
            spec.drift, A_alt, spec.triplet, config["replicas"], config["seed"],
            config["tau"], config["distinct_fraction"],
            horizon=spec.horizon, step=spec.step, map_fn=map_fn,
        )
    except HypothesisViolation as e:
        _violation(out, "verdict", e)
        return {"distinctness": False}
    out.record("verdict.json", DistinctnessVerdictSerializer, verdict.to_dict())
    out.csv(
        "distinctness.csv",
        ["replica", "replica_seed", "jump_count", "residual"],
        [[i, replica_seed(config["seed"], i), count, res]
         for i, count, res in verdict.replica_rows()],
    )
    expected = expected_verdict(spec, A_alt)
    logger.info(
        f"[LevyOU][distinctness] verdict {verdict.verdict.value}, expected {expected.value}"
    )
    return {"distinctness": verdict.verdict == expected}


def random_step_path(rng, horizon, dimension, max_steps=4):
    """Step path with 1..max_steps jumps at uniform times and normal heights."""
    count = int(rng.integers(1, max_steps + 1))
    times = np.sort(rng.uniform(0.0, horizon, count))
    return step_path(horizon, [(t, rng.normal(size=dimension)) for t in times if t > 0.0], dimension)


def skorohod_axioms(f, g, h):
    """(symmetric, triangle holds, bounded by uniform distance, d(f,g), d(g,f))."""
    d_fg = skorohod_distance(f, g)
    d_gf = skorohod_distance(g, f)
    d_fh = skorohod_distance(f, h)
    d_gh = skorohod_distance(g, h)
    symmetric = d_fg == d_gf
    triangle = d_fh <= d_fg + d_gh + TRIANGLE_TOL
    bounded = d_fg <= uniform_distance(f, g) + TRIANGLE_TOL
    return symmetric, triangle, bounded, d_fg, d_fh, d_gh


def _skorohod(config, out, map_fn):
    if config["path_file"]:
        f, g = read_path(config["path_file"]), read_path(config["path_file_b"])
        d_fg, d_gf = skorohod_distance(f, g), skorohod_distance(g, f)
        u = uniform_distance(f, g)
        out.csv("skorohod.csv", ["d_fg", "d_gf", "uniform"], [[d_fg, d_gf, u]])
        return {"skorohod_metric": d_fg == d_gf and d_fg <= u + TRIANGLE_TOL}

    horizon, d, seed = config["horizon"], config["dimension"], config["seed"]
    rows, ok = [], True
    for i in range(config["replicas"]):
        rng = stream(seed, i, "paths")
        f, g, h = (random_step_path(rng, horizon, d) for _ in range(3))
        symmetric, triangle, bounded, d_fg, d_fh, d_gh = skorohod_axioms(f, g, h)
        ok = ok and symmetric and triangle and bounded
        rows.append([i, replica_seed(seed, i), d_fg, d_fh, d_gh, uniform_distance(f, g),
                     symmetric, triangle, bounded])
    out.csv(
        "skorohod.csv",
        ["pair", "replica_seed", "d_fg", "d_fh", "d_gh", "uniform_fg", "symmetric", "triangle",
         "bounded"],
        rows,
    )

    a = step_path(1.0, [(0.5, 1.0)])
    b = step_path(1.0, [(0.6, 1.0)])
    two_step = skorohod_distance(a, b)
    oracle = single_knot_bound(a, b)
    example_ok = abs(two_step - 0.1) <= ORACLE_TOL and abs(two_step - oracle) <= ORACLE_TOL
    out.csv("skorohod_example.csv", ["d_S", "oracle"], [[two_step, oracle]])
    logger.info(
        f"[LevyOU][skorohod] axioms hold on {len(rows)} triples: {ok}; "
        f"step example {two_step!r} vs oracle {oracle!r}"
    )
    return {"skorohod_metric": bool(ok and example_ok)}


def _convergence_probe(config, out, map_fn):
    triplet = build_triplet(config)
    rows = small_jump_convergence_probe(
        triplet.jump_spec, config["probe_time"], config["probe_epsilons"], config["replicas"],
        config["seed"],
    )
    records = []
    for row in rows:
        serializer = ProbeRowSerializer(data=row.to_dict())
        serializer.is_valid(raise_exception=True)
        records.append(serializer.validated_data)
    out.csv(
        "probe.csv",
        ["outer", "inner", "empirical_variance", "analytic_variance", "ratio"],
        [[r["outer"], r["inner"], r["empirical_variance"], r["analytic_variance"], r["ratio"]]
         for r in records],
    )
    passed = all(abs(row.ratio - 1.0) <= PROBE_RELATIVE_TOL for row in rows)
    return {"compensated_convergence": passed}


def _solver_order(config, out, map_fn):
    spec = build_spec(config)
    try:
        result = observed_euler_order(
            spec, config["solver_steps"], config["solver_fine_step"], config["replicas"],
            config["seed"],
        )
    except ValueError as e:
        raise ConfigError(str(e), "solver_steps") from e
    out.csv("solver_order.csv", ["step", "mean_error"], zip(result.steps, result.errors))
    out.json("solver_order.json", result.to_dict())
    return {"solver_order": result.order >= config["min_order"]}


COMMAND_HANDLERS = {
    "simulate": _simulate,
    "decompose": _decompose,
    "girsanov-check": _girsanov_check,
    "recover-drift": _recover_drift,
    "distinctness": _distinctness,
    "skorohod": _skorohod,
    "convergence-probe": _convergence_probe,
    "solver-order": _solver_order,
}


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunManifest:
    command: str
    config_hash: str
    package_version: str
    seed: int
    replica_seeds: tuple
    started_at: str
    finished_at: str
    criteria: dict
    outputs: tuple

    @property
    def passed(self):
        return all(value is not False for value in self.criteria.values())

    @property
    def exit_code(self):
        return 0 if self.passed else 1

    def to_dict(self):
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "package_version": self.package_version,
            "seed": self.seed,
            "replica_seeds": list(self.replica_seeds),
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "criteria": dict(self.criteria),
            "outputs": list(self.outputs),
            "passed": self.passed,
        }


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run(config):
    """Execute the configured command and write its results and manifest.

    Args:
        config: Validated config (see load_config / validate_config)

    Returns:
        RunManifest; its exit_code is 0 when every evaluated criterion passed

    Raises:
        ConfigError: the config cannot describe a valid experiment
    """
    started = _now()
    command = config["command"]
    out = _Outputs(Path(config["output_dir"]))
    out.directory.mkdir(parents=True, exist_ok=True)
    digest = config_hash(config)
    logger.info(f"[LevyOU][run] {command} seed={config['seed']} config={digest[:12]}")

    try:
        with _replica_map(config["workers"]) as map_fn:
            evaluated = COMMAND_HANDLERS[command](config, out, map_fn)
    except ConfigError:
        raise
    except Exception as e:
        logger.error(f"[LevyOU][run] {command} failed: {e}", exc_info=True)
        raise

    criteria = {name: None for name in CRITERIA}
    criteria.update(evaluated)
    out.path("config.yaml").write_text(yaml.safe_dump(config, sort_keys=True), encoding="utf-8")
    manifest = RunManifest(
        command,
        digest,
        PACKAGE_VERSION,
        config["seed"],
        tuple(replica_seed(config["seed"], i) for i in range(config["replicas"])),
        started,
        _now(),
        criteria,
        tuple(out.files) + ("manifest.json",),
    )
    out.record("manifest.json", RunManifestSerializer, manifest.to_dict())
    logger.info(
        f"[LevyOU][run] {command} finished: "
        + ", ".join(f"{k}={v}" for k, v in evaluated.items())
    )
    return manifest
