import math

from rest_framework import serializers
from rest_framework.renderers import JSONRenderer

from .models import RunRecord


class FiniteFloatField(serializers.Field):
    """Floats that stay valid JSON: inf/-inf/nan become strings."""

    def to_representation(self, value):
        if value is None:
            return None
        value = float(value)
        if math.isfinite(value):
            return value
        if math.isnan(value):
            return "nan"
        return "inf" if value > 0 else "-inf"

    def to_internal_value(self, data):
        try:
            return float(data)
        except (TypeError, ValueError):
            raise serializers.ValidationError(f"Not a number: {data!r}")


class SchemeConfigSerializer(serializers.Serializer):
    scheme = serializers.CharField()
    k = FiniteFloatField()
    nu = FiniteFloatField()
    fp_tol = FiniteFloatField()
    fp_max_iter = serializers.IntegerField()


class FieldSpecSerializer(serializers.Serializer):
    kind = serializers.CharField()
    amplitude = FiniteFloatField()
    seed = serializers.IntegerField()
    slope = FiniteFloatField()
    kmax = FiniteFloatField()
    path = serializers.CharField(allow_blank=True)


class ForcingSpecSerializer(serializers.Serializer):
    kind = serializers.CharField()
    modes = serializers.SerializerMethodField()
    seed = serializers.IntegerField()
    slope = FiniteFloatField()
    amplitude = FiniteFloatField()
    kmax = FiniteFloatField()
    modulation = serializers.CharField()
    mod_mean = FiniteFloatField()
    mod_amplitude = FiniteFloatField()
    mod_omega = FiniteFloatField()
    mod_ramp_time = FiniteFloatField()

    def get_modes(self, obj):
        lstModes = []
        for kappa, amplitudes in obj.modes:
            row = [int(c) for c in kappa]
            for value in amplitudes:
                value = complex(value)
                row.extend([value.real, value.imag])
            lstModes.append(row)
        return lstModes


class ConstantsSerializer(serializers.Serializer):
    c0 = FiniteFloatField()
    c1 = FiniteFloatField()
    c2 = FiniteFloatField()
    c3 = FiniteFloatField()
    c4 = FiniteFloatField()
    c5 = FiniteFloatField()


class RunConfigSerializer(serializers.Serializer):
    name = serializers.CharField()
    n = serializers.IntegerField()
    scheme = SchemeConfigSerializer(source='scheme_cfg')
    initial = FieldSpecSerializer()
    forcing = ForcingSpecSerializer()
    constants = ConstantsSerializer()
    t_end = FiniteFloatField(allow_null=True)
    n_steps = serializers.IntegerField(allow_null=True)
    monitor = serializers.CharField()
    snapshot_every = serializers.IntegerField()
    out_dir = serializers.CharField()
    seed = serializers.IntegerField()
    allow_over_horizon = serializers.BooleanField()


class BoundsReportSerializer(serializers.Serializer):
    nu = FiniteFloatField()
    k = FiniteFloatField()
    u0_l2_sq = FiniteFloatField()
    u0_h1_sq = FiniteFloatField()
    f_hm1_sup_sq = FiniteFloatField()
    f_l2_sup_sq = FiniteFloatField()
    K0 = FiniteFloatField()
    K1 = FiniteFloatField()
    K0_tilde = FiniteFloatField()
    K1_tilde = FiniteFloatField()
    K_lemma = FiniteFloatField()
    F_short = FiniteFloatField()
    F_full = FiniteFloatField()


class HorizonReportSerializer(serializers.Serializer):
    z0 = FiniteFloatField()
    t_star_continuous = FiniteFloatField()
    t_star_semi = FiniteFloatField()
    t_f_star = FiniteFloatField()
    blowup_time = FiniteFloatField()


class ConstraintSerializer(serializers.Serializer):
    tag = serializers.CharField()
    k_max = FiniteFloatField()
    description = serializers.CharField()


class AdmissibleStepSerializer(serializers.Serializer):
    variant = serializers.CharField()
    k_max = FiniteFloatField()
    binding = serializers.CharField(allow_null=True)
    constraints = ConstraintSerializer(many=True)


class RunReportSerializer(serializers.Serializer):
    name = serializers.CharField()
    config = RunConfigSerializer()
    bounds = BoundsReportSerializer()
    horizons = HorizonReportSerializer()
    admissible = AdmissibleStepSerializer(allow_null=True)
    termination = serializers.CharField()
    steps = serializers.IntegerField()
    final_time = FiniteFloatField()
    first_violation = serializers.IntegerField(allow_null=True)
    first_hypothesis_violation = serializers.IntegerField(allow_null=True)
    first_conclusion_violation = serializers.IntegerField(allow_null=True)
    l2_envelope = FiniteFloatField()
    error = serializers.CharField(allow_blank=True)
    warnings = serializers.ListField(child=serializers.CharField())


class RunRecordSerializer(serializers.ModelSerializer):
    class Meta:
        model = RunRecord
        fields = ['id', 'name', 'scheme', 'monitor', 'n', 'k', 'nu', 'steps', 'termination',
                  'first_violation', 'output_dir', 'csv_sha256', 'created_at']


def render_json(data):
    return JSONRenderer().render(data, renderer_context={'indent': 2}) + b"\n"
