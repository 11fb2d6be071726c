"""
Serializers for the pipeline.

This module contains Django REST Framework serializers that validate the
RunConfig document read by every pipeline stage, and the request payload of
the expression evaluation endpoint.

The serializers provide:
- Section-by-section validation of the RunConfig with library defaults
- Expression syntax checks with the failing position
- Cross-field checks (exactly one input mode, sweep membership)

Classes:
    InputSerializer: Input mode and its paths
    SynthSerializer: Ground-truth model, initial condition and noise
    PreprocessSerializer: Binning settings
    TrainSerializer: Loss weights, optimiser, early stopping and splits
    SrSerializer: Symbolic regression settings
    SolveSerializer: Forward solver settings
    EvaluateSerializer: Count evaluation settings
    RunConfigSerializer: The whole document
    ExpressionEvaluateSerializer: Expression evaluation requests
"""

import os

from rest_framework import serializers

from py_rdeql import config
from py_rdeql.exceptions import ExpressionParseError
from py_rdeql.sr import SrConfig, parse_expression


def _check_expression(value):
    try:
        parse_expression(value)
    except ExpressionParseError as e:
        raise serializers.ValidationError(str(e))
    return value


def _check_domain(value):
    if value is None:
        return value
    x1_min, x1_max, x2_min, x2_max, t_min, t_max = value
    if not (x1_min < x1_max and x2_min < x2_max and t_min < t_max):
        raise serializers.ValidationError("domain must be [x1_min, x1_max, x2_min, x2_max, t_min, t_max] with min < max.")
    return value


class InputSerializer(serializers.Serializer):
    """
    Input mode of a run.

    Exactly one of ``points`` (CSV ``x1,x2,t``), ``density`` (density CSV with
    its JSON sidecar) or ``synth`` must be set. Point input needs the domain.
    """
    points = serializers.CharField(required=False, allow_null=True, default=None)
    density = serializers.CharField(required=False, allow_null=True, default=None)
    synth = serializers.BooleanField(required=False, default=False)
    domain = serializers.ListField(child=serializers.FloatField(), min_length=6, max_length=6,
                                   required=False, allow_null=True, default=None)
    frame_times = serializers.ListField(child=serializers.FloatField(), required=False,
                                        allow_null=True, default=None)

    def validate_points(self, value):
        if value is not None and not os.path.isfile(value):
            raise serializers.ValidationError(f"Point file not found: {value}")
        return value

    def validate_density(self, value):
        if value is None:
            return value
        if not os.path.isfile(value):
            raise serializers.ValidationError(f"Density file not found: {value}")
        sidecar = os.path.splitext(value)[0] + '.json'
        if not os.path.isfile(sidecar):
            raise serializers.ValidationError(f"Density sidecar not found: {sidecar}")
        return value

    def validate_domain(self, value):
        return _check_domain(value)

    def validate(self, data):
        modes = [name for name in ('points', 'density') if data.get(name)]
        if data.get('synth'):
            modes.append('synth')
        if len(modes) != 1:
            raise serializers.ValidationError(
                f"Exactly one input mode (points, density or synth) must be set, got {modes or 'none'}."
            )
        if data.get('points') and data.get('domain') is None:
            raise serializers.ValidationError("Point input requires 'domain'.")
        return data


class SynthSerializer(serializers.Serializer):
    """Ground truth, initial condition and observation noise of synthetic runs."""
    diffusion = serializers.CharField(default=config.reference_diffusion)
    growth = serializers.CharField(default=config.reference_growth)
    density_reference = serializers.FloatField(default=config.density_reference, min_value=1e-12)
    ic_peak = serializers.FloatField(default=config.ic_peak, min_value=0.0)
    ic_bumps = serializers.IntegerField(default=config.ic_bumps, min_value=1, max_value=5)
    domain = serializers.ListField(child=serializers.FloatField(), min_length=6, max_length=6,
                                   default=list(config.synth_domain))
    frames = serializers.IntegerField(default=config.synth_frames, min_value=2)
    gamma = serializers.FloatField(default=config.noise_gamma, min_value=0.0)
    omega = serializers.FloatField(default=config.noise_omega, min_value=0.0)
    noise_seed = serializers.IntegerField(default=0)
    points = serializers.BooleanField(default=False)
    point_seed = serializers.IntegerField(default=0)

    def validate_diffusion(self, value):
        return _check_expression(value)

    def validate_growth(self, value):
        return _check_expression(value)

    def validate_domain(self, value):
        return _check_domain(value)


class PreprocessSerializer(serializers.Serializer):
    bin_size = serializers.FloatField(default=config.bin_size)

    def validate_bin_size(self, value):
        if not value > 0:
            raise serializers.ValidationError("bin_size must be positive.")
        return value


class TrainSerializer(serializers.Serializer):
    """
    Training settings shared by every split and patience.

    ``es_sweep`` lists the patiences trained; ``n_splits`` TV splits are
    trained for each, with split seeds base_seed + split index.
    """
    lambda_data = serializers.FloatField(default=config.lambda_data, min_value=0.0)
    lambda_pde = serializers.FloatField(default=config.lambda_pde, min_value=0.0)
    lambda_bio = serializers.FloatField(default=config.lambda_bio, min_value=0.0)
    n_collocation = serializers.IntegerField(required=False, allow_null=True, default=None, min_value=1)
    es_sweep = serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=1,
                                     default=list(config.es_sweep))
    es_improvement = serializers.FloatField(default=config.es_improvement)
    learning_rate = serializers.FloatField(default=config.learning_rate)
    beta1 = serializers.FloatField(default=config.adam_beta1)
    beta2 = serializers.FloatField(default=config.adam_beta2)
    epsilon = serializers.FloatField(default=config.adam_epsilon)
    max_epochs = serializers.IntegerField(default=config.max_epochs, min_value=1)
    train_fraction = serializers.FloatField(default=config.train_fraction)
    hidden_widths_u = serializers.ListField(child=serializers.IntegerField(min_value=1), min_length=1,
                                            default=list(config.hidden_widths_u))
    hidden_widths_rate = serializers.ListField(child=serializers.IntegerField(min_value=1), min_length=1,
                                               default=list(config.hidden_widths_rate))
    function_probe_every = serializers.IntegerField(default=config.function_probe_every, min_value=0)
    n_splits = serializers.IntegerField(default=config.n_splits, min_value=1)

    def validate_es_improvement(self, value):
        if not 0 < value < 1:
            raise serializers.ValidationError("es_improvement must lie in (0, 1).")
        return value

    def validate_train_fraction(self, value):
        if not 0 < value < 1:
            raise serializers.ValidationError("train_fraction must lie in (0, 1); a validation set is required.")
        return value

    def validate_learning_rate(self, value):
        if not value > 0:
            raise serializers.ValidationError("learning_rate must be positive.")
        return value

    def validate_es_sweep(self, value):
        if len(set(value)) != len(value):
            raise serializers.ValidationError("es_sweep must not repeat a patience.")
        return value


class SrSerializer(serializers.Serializer):
    """Symbolic regression settings; checked again by constructing an SrConfig."""
    repeats = serializers.IntegerField(default=config.sr_repeats, min_value=1)
    population_size = serializers.IntegerField(default=config.sr_population_size, min_value=2)
    generations = serializers.IntegerField(default=config.sr_generations, min_value=0)
    max_complexity = serializers.IntegerField(default=config.sr_max_complexity, min_value=3)
    parsimony = serializers.FloatField(default=config.sr_parsimony, min_value=0.0)
    binary_operators = serializers.ListField(child=serializers.CharField(), min_length=1,
                                             default=list(config.sr_binary_operators))
    unary_operators = serializers.ListField(child=serializers.CharField(), required=False,
                                            default=list(config.sr_unary_operators))
    refine_iterations = serializers.IntegerField(default=config.sr_refine_iterations, min_value=0)
    tournament_size = serializers.IntegerField(default=config.sr_tournament_size, min_value=1)
    p_optimize = serializers.FloatField(default=config.sr_p_optimize, min_value=0.0, max_value=1.0)

    def validate(self, data):
        try:
            SrConfig(**data)
        except ValueError as e:
            raise serializers.ValidationError(str(e))
        return data


class SolveSerializer(serializers.Serializer):
    safety = serializers.FloatField(default=config.solver_safety)
    max_dt = serializers.FloatField(default=config.solver_max_dt)

    def validate_safety(self, value):
        if not 0 < value <= 1:
            raise serializers.ValidationError("safety must lie in (0, 1].")
        return value

    def validate_max_dt(self, value):
        if not value > 0:
            raise serializers.ValidationError("max_dt must be positive.")
        return value


class EvaluateSerializer(serializers.Serializer):
    """Count evaluation settings."""
    diagnostics = serializers.BooleanField(default=True, help_text="Write per-step solver diagnostics")


class RunConfigSerializer(serializers.Serializer):
    """
    Serializer for a whole RunConfig document.

    Missing sections take the library defaults. ``preferred_es`` pins the
    patience used downstream of training; when null the train stage chooses
    it with the documented tolerance rule.
    """
    output_dir = serializers.CharField()
    base_seed = serializers.IntegerField(default=0, min_value=0)
    jobs = serializers.IntegerField(default=1, min_value=1)
    preferred_es = serializers.IntegerField(required=False, allow_null=True, default=None, min_value=0)
    input = InputSerializer()
    synth = SynthSerializer()
    preprocess = PreprocessSerializer()
    train = TrainSerializer()
    sr = SrSerializer()
    solve = SolveSerializer()
    evaluate = EvaluateSerializer()

    def validate(self, data):
        preferred = data.get('preferred_es')
        if preferred is not None and preferred not in data['train']['es_sweep']:
            raise serializers.ValidationError(
                f"preferred_es {preferred} is not in train.es_sweep {data['train']['es_sweep']}."
            )
        return data


class ExpressionEvaluateSerializer(serializers.Serializer):
    """
    Serializer for the expression evaluation endpoint.

    Fields:
        expression (CharField): expression in U
        U (ListField): densities to evaluate at
    """
    expression = serializers.CharField(help_text="Expression in the variable U")
    U = serializers.ListField(child=serializers.FloatField(), min_length=1, max_length=100_000)

    def validate_expression(self, value):
        return _check_expression(value)
