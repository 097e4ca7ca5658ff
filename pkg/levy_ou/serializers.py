"""Serializers for experiment configs and the records the harness writes.

Every config is validated by ExperimentConfigSerializer before a run starts,
and every report passes through its serializer before it is written, so the
files on disk follow one contract.

Ref: https://www.django-rest-framework.org/api-guide/serializers/
"""

import math

import django
from django.conf import settings

if not settings.configured:
    settings.configure(
        DEBUG=False,
        SECRET_KEY="levy-ou-serializers",
        INSTALLED_APPS=[
            "django.contrib.contenttypes",
            "django.contrib.auth",
            "rest_framework",
        ],
        USE_I18N=False,
    )
    django.setup()

from rest_framework import serializers  # noqa: E402

COMMANDS = (
    "simulate",
    "decompose",
    "girsanov-check",
    "recover-drift",
    "distinctness",
    "skorohod",
    "convergence-probe",
    "solver-order",
)

CRITERIA = (
    "jump_invariance",
    "xi_full_measure",
    "drift_recovery",
    "distinctness",
    "girsanov_mean_one",
    "reweighting",
    "hypothesis_sensitivity",
    "levy_ito_round_trip",
    "compensated_convergence",
    "skorohod_metric",
    "solver_order",
)

# Fields holding d*d row-major matrices, and d-vectors; empty means zero.
MATRIX_FIELDS = ("drift", "alt_drift", "covariance")
VECTOR_FIELDS = ("drift_vector",)

# Fields that do not change results and are left out of the config hash.
RUNTIME_FIELDS = ("output_dir", "workers")


def _float_list(help_text, default=list, **kwargs):
    return serializers.ListField(
        child=serializers.FloatField(), required=False, default=default, help_text=help_text,
        **kwargs,
    )


class ExperimentConfigSerializer(serializers.Serializer):
    """Flat experiment configuration.

    Matrices are row-major lists of d*d numbers. Unknown keys, nested
    mappings and non-finite numbers are rejected.
    """

    command = serializers.ChoiceField(choices=COMMANDS, help_text="Experiment to run")

    # Process
    dimension = serializers.IntegerField(
        min_value=1, required=False, default=2, help_text="State dimension d"
    )
    horizon = serializers.FloatField(required=False, default=1.0, help_text="Time horizon T")
    step = serializers.FloatField(required=False, default=1e-3, help_text="Regular grid step h")
    drift = _float_list("Drift operator A, row-major d*d (empty: zero operator)")
    alt_drift = _float_list("Alternative drift operator A~, row-major d*d")
    drift_vector = _float_list("Levy drift b, length d (empty: zero)")
    covariance = _float_list("Wiener covariance Q, row-major d*d (empty: zero)")

    # Jumps
    jump_rate = serializers.FloatField(
        min_value=0.0, required=False, default=0.0, help_text="Compound-Poisson rate lambda"
    )
    jump_law = serializers.ChoiceField(
        choices=("gaussian", "discrete"),
        required=False,
        default="gaussian",
        help_text="Jump-size law: gaussian (isotropic, centred) or discrete atoms",
    )
    jump_std = serializers.FloatField(
        required=False, default=1.0, help_text="Per-coordinate std of gaussian jump sizes"
    )
    jump_atoms = _float_list("Discrete jump atoms, flattened (n atoms * d)")
    jump_weights = _float_list("Discrete jump weights, one per atom")
    small_jump_alpha = serializers.FloatField(
        required=False,
        allow_null=True,
        default=None,
        help_text="Power-law small-jump index alpha in (0, 2); null disables the family",
    )
    small_jump_scale = serializers.FloatField(
        required=False, default=1.0, help_text="Small-jump density constant c"
    )
    small_jump_mode = serializers.ChoiceField(
        choices=("positive", "symmetric", "isotropic"),
        required=False,
        default="positive",
        help_text="Angular part of the small-jump family",
    )
    small_jump_epsilon = serializers.FloatField(
        required=False, default=0.125, help_text="Truncation radius of the small-jump family"
    )
    probe_epsilons = _float_list(
        "Shell thresholds of the convergence probe", default=lambda: [0.5, 0.25, 0.125]
    )
    probe_time = serializers.FloatField(
        required=False, default=1.0, help_text="Evaluation time of the convergence probe"
    )

    # Monte Carlo
    replicas = serializers.IntegerField(
        min_value=1, required=False, default=100, help_text="Number of replicas N"
    )
    seed = serializers.IntegerField(
        min_value=0, required=False, default=0, help_text="Master seed"
    )

    # Tolerances
    sigma_tol = serializers.FloatField(
        required=False,
        allow_null=True,
        default=None,
        help_text="Gram singular-value floor for drift recovery (null: 1e-10 * grid count)",
    )
    equivalence_tol = serializers.FloatField(
        required=False, default=1e-12, help_text="Eigenvalue floor for Q > 0"
    )
    tau = serializers.FloatField(
        required=False, default=0.01, help_text="Residual threshold of the distinctness verdict"
    )
    distinct_fraction = serializers.FloatField(
        required=False, default=0.99, help_text="Replica share above tau needed for DISTINCT"
    )
    se_multiplier = serializers.FloatField(
        required=False, default=3.0, help_text="Standard-error multiplier of Monte Carlo bands"
    )
    jump_role = serializers.ChoiceField(
        choices=("jumps", "resampled_jumps"),
        required=False,
        default="jumps",
        help_text="Jump stream of girsanov-check; resampled_jumps draws the jumps independently "
        "of the Wiener stream",
    )
    solver_steps = _float_list(
        "Euler steps for the solver-order check", default=lambda: [1e-3, 5e-4, 2.5e-4]
    )
    solver_fine_step = serializers.FloatField(
        required=False, default=1.5625e-5, help_text="Reference grid step for the solver-order check"
    )
    min_order = serializers.FloatField(
        required=False, default=0.9, help_text="Smallest acceptable observed Euler order"
    )

    # I/O
    output_dir = serializers.CharField(
        required=False, default="results", help_text="Directory receiving result files"
    )
    path_file = serializers.CharField(
        required=False,
        allow_null=True,
        default=None,
        help_text="Input path file (decompose: null decomposes N sampled driving paths)",
    )
    path_file_b = serializers.CharField(
        required=False,
        allow_null=True,
        default=None,
        help_text="Second input path file (skorohod)",
    )
    workers = serializers.IntegerField(
        min_value=1, required=False, default=1, help_text="Worker processes for replica fan-out"
    )

    class Meta:
        """Meta options for this serializer."""

        fields = [
            "command",
            "dimension",
            "horizon",
            "step",
            "drift",
            "alt_drift",
            "drift_vector",
            "covariance",
            "jump_rate",
            "jump_law",
            "jump_std",
            "jump_atoms",
            "jump_weights",
            "small_jump_alpha",
            "small_jump_scale",
            "small_jump_mode",
            "small_jump_epsilon",
            "probe_epsilons",
            "probe_time",
            "replicas",
            "seed",
            "sigma_tol",
            "equivalence_tol",
            "tau",
            "distinct_fraction",
            "se_multiplier",
            "jump_role",
            "solver_steps",
            "solver_fine_step",
            "min_order",
            "output_dir",
            "path_file",
            "path_file_b",
            "workers",
        ]

    def validate_horizon(self, value):
        if value <= 0:
            raise serializers.ValidationError("must be positive")
        return value

    def validate_step(self, value):
        if value <= 0:
            raise serializers.ValidationError("must be positive")
        return value

    def validate_jump_std(self, value):
        if value <= 0:
            raise serializers.ValidationError("must be positive")
        return value

    def validate_small_jump_alpha(self, value):
        if value is not None and not (0.0 < value < 2.0):
            raise serializers.ValidationError("must lie in (0, 2)")
        return value

    def validate_small_jump_epsilon(self, value):
        if not (0.0 < value < 1.0):
            raise serializers.ValidationError("must lie in (0, 1)")
        return value

    def validate_distinct_fraction(self, value):
        if not (0.0 < value <= 1.0):
            raise serializers.ValidationError("must lie in (0, 1]")
        return value

    def validate(self, attrs):
        raw = self.initial_data if isinstance(self.initial_data, dict) else {}
        unknown = sorted(set(raw) - set(self.fields))
        if unknown:
            raise serializers.ValidationError({unknown[0]: f"unknown key (known: {', '.join(self.Meta.fields)})"})
        for key, value in raw.items():
            if isinstance(value, dict):
                raise serializers.ValidationError({key: "nested mappings are not allowed"})

        for key, value in attrs.items():
            values = value if isinstance(value, list) else [value]
            for v in values:
                if isinstance(v, float) and not math.isfinite(v):
                    raise serializers.ValidationError({key: "must be finite"})

        d = attrs["dimension"]
        for key in MATRIX_FIELDS:
            if attrs[key] and len(attrs[key]) != d * d:
                raise serializers.ValidationError(
                    {key: f"needs {d * d} entries (row-major {d}x{d}), got {len(attrs[key])}"}
                )
        for key in VECTOR_FIELDS:
            if attrs[key] and len(attrs[key]) != d:
                raise serializers.ValidationError({key: f"needs {d} entries, got {len(attrs[key])}"})

        if attrs["step"] > attrs["horizon"]:
            raise serializers.ValidationError({"step": "must not exceed the horizon"})

        if attrs["jump_law"] == "discrete" and attrs["jump_rate"] > 0:
            atoms, weights = attrs["jump_atoms"], attrs["jump_weights"]
            if not atoms or len(atoms) % d:
                raise serializers.ValidationError(
                    {"jump_atoms": f"needs a non-empty multiple of {d} entries"}
                )
            if len(weights) != len(atoms) // d:
                raise serializers.ValidationError(
                    {"jump_weights": f"needs one weight per atom ({len(atoms) // d})"}
                )

        command = attrs["command"]
        if command in ("girsanov-check", "distinctness") and not attrs["alt_drift"]:
            raise serializers.ValidationError({"alt_drift": f"required for command {command}"})
        if command == "skorohod" and bool(attrs["path_file"]) != bool(attrs["path_file_b"]):
            raise serializers.ValidationError(
                {"path_file_b": "give both path files or neither"}
            )
        if command == "girsanov-check" and attrs["replicas"] < 2:
            raise serializers.ValidationError({"replicas": "girsanov-check needs at least 2"})
        return attrs


class ReweightingEstimateSerializer(serializers.Serializer):
    """Direct against re-weighted estimate of E[X_T] for one coordinate."""

    coordinate = serializers.IntegerField(min_value=0)
    direct_mean = serializers.FloatField()
    direct_se = serializers.FloatField()
    weighted_mean = serializers.FloatField()
    weighted_se = serializers.FloatField()
    difference_se = serializers.FloatField()
    passed = serializers.BooleanField()

    class Meta:
        """Meta options for this serializer."""

        fields = [
            "coordinate",
            "direct_mean",
            "direct_se",
            "weighted_mean",
            "weighted_se",
            "difference_se",
            "passed",
        ]


def _matrix_field(help_text):
    return serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField()), help_text=help_text
    )


class MeasureChangeReportSerializer(serializers.Serializer):
    """Summary of an equivalence report; per-replica weights go to CSV."""

    drift = _matrix_field("Drift operator A")
    alt_drift = _matrix_field("Alternative drift operator A~")
    replicas = serializers.IntegerField(min_value=1)
    seed = serializers.IntegerField(min_value=0)
    horizon = serializers.FloatField()
    step = serializers.FloatField()
    min_eigenvalue = serializers.FloatField(help_text="Smallest eigenvalue of Q")
    hypothesis_violated = serializers.BooleanField(
        help_text="True when Q is not positive definite; Monte Carlo fields are then null"
    )
    se_multiplier = serializers.FloatField()
    jump_role = serializers.ChoiceField(choices=("jumps", "resampled_jumps"))
    mean_weight = serializers.FloatField(allow_null=True, help_text="Mean of exp(llr)")
    mean_weight_se = serializers.FloatField(allow_null=True)
    mean_one_passed = serializers.BooleanField()
    reweighting = ReweightingEstimateSerializer(many=True)
    reweighting_passed = serializers.BooleanField()
    truncation_level = serializers.FloatField(
        allow_null=True, help_text="Largest sup_t |A X_t - A~ X~_t| over the ensemble"
    )

    class Meta:
        """Meta options for this serializer."""

        fields = [
            "drift",
            "alt_drift",
            "replicas",
            "seed",
            "horizon",
            "step",
            "min_eigenvalue",
            "hypothesis_violated",
            "se_multiplier",
            "jump_role",
            "mean_weight",
            "mean_weight_se",
            "mean_one_passed",
            "reweighting",
            "reweighting_passed",
            "truncation_level",
        ]


class DistinctnessVerdictSerializer(serializers.Serializer):
    """Distinctness verdict with its calibration constants."""

    drift = _matrix_field("Drift operator A used to simulate")
    alt_drift = _matrix_field("Drift operator A~ tested against the paths")
    jump_rate = serializers.FloatField(min_value=0.0)
    replicas = serializers.IntegerField(min_value=1)
    tau = serializers.FloatField()
    fraction = serializers.FloatField()
    observed_fraction = serializers.FloatField(min_value=0.0, max_value=1.0)
    verdict = serializers.ChoiceField(choices=("DISTINCT", "INDISTINGUISHABLE", "INCONCLUSIVE"))
    indistinguishable_tol = serializers.FloatField()

    class Meta:
        """Meta options for this serializer."""

        fields = [
            "drift",
            "alt_drift",
            "jump_rate",
            "replicas",
            "tau",
            "fraction",
            "observed_fraction",
            "verdict",
            "indistinguishable_tol",
        ]


class ProbeRowSerializer(serializers.Serializer):
    """One shell of the compensated-convergence probe."""

    outer = serializers.FloatField()
    inner = serializers.FloatField()
    empirical_variance = serializers.FloatField(min_value=0.0)
    analytic_variance = serializers.FloatField(min_value=0.0)
    ratio = serializers.FloatField()

    class Meta:
        """Meta options for this serializer."""

        fields = ["outer", "inner", "empirical_variance", "analytic_variance", "ratio"]


class RunManifestSerializer(serializers.Serializer):
    """Identity and outcome of one harness run.

    criteria holds every acceptance criterion id; null marks criteria the
    command does not evaluate.
    """

    command = serializers.ChoiceField(choices=COMMANDS)
    config_hash = serializers.RegexField(r"^[0-9a-f]{64}$", help_text="SHA-256 of the config")
    package_version = serializers.CharField()
    seed = serializers.IntegerField(min_value=0)
    replica_seeds = serializers.ListField(child=serializers.IntegerField(min_value=0))
    started_at = serializers.CharField(help_text="ISO-8601 UTC start time")
    finished_at = serializers.CharField(help_text="ISO-8601 UTC finish time")
    criteria = serializers.DictField(child=serializers.BooleanField(allow_null=True))
    outputs = serializers.ListField(child=serializers.CharField(), help_text="Files written")
    passed = serializers.BooleanField()

    class Meta:
        """Meta options for this serializer."""

        fields = [
            "command",
            "config_hash",
            "package_version",
            "seed",
            "replica_seeds",
            "started_at",
            "finished_at",
            "criteria",
            "outputs",
            "passed",
        ]

    def validate_criteria(self, value):
        unknown = sorted(set(value) - set(CRITERIA))
        if unknown:
            raise serializers.ValidationError(f"unknown criteria: {', '.join(unknown)}")
        return value
