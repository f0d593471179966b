from django import forms

from .mdlProcess.mdlEnum import FieldKind, ForcingKind, Modulation, MonitorVariant, Scheme


def _choices(values):
    return [(value, value) for value in values]


class PositiveFloatField(forms.FloatField):
    """Finite and strictly positive."""

    def validate(self, value):
        super().validate(value)
        if value is not None and value <= 0:
            raise forms.ValidationError("Must be > 0.", code='min_value')


class GridForm(forms.Form):
    n = forms.IntegerField(min_value=4)

    def clean_n(self):
        n = self.cleaned_data['n']
        if n % 2:
            raise forms.ValidationError("Grid resolution must be even.")
        return n


class SchemeForm(forms.Form):
    scheme = forms.ChoiceField(choices=_choices(Scheme.All))
    k = PositiveFloatField()
    nu = PositiveFloatField()
    fp_tol = PositiveFloatField(required=False)
    fp_max_iter = forms.IntegerField(min_value=1, required=False)


class InitialForm(forms.Form):
    kind = forms.ChoiceField(choices=_choices(FieldKind.All))
    amplitude = forms.FloatField(min_value=0, required=False)
    seed = forms.IntegerField(min_value=0, required=False)
    slope = forms.FloatField(required=False)
    kmax = forms.FloatField(min_value=1, required=False)
    path = forms.CharField(required=False)

    def clean(self):
        cleaned_data = super().clean()
        if cleaned_data.get('kind') == FieldKind.File and not cleaned_data.get('path'):
            self.add_error('path', "Required when kind = file.")
        return cleaned_data


class ForcingModesField(forms.CharField):
    """
    `kx ky kz re_x im_x re_y im_y re_z im_z; ...` -> ((kappa, amplitudes), ...).
    """

    def to_python(self, value):
        value = super().to_python(value)
        lstModes = []
        for chunk in value.split(';'):
            parts = chunk.split()
            if not parts:
                continue
            if len(parts) != 9:
                raise forms.ValidationError(f"Mode '{chunk.strip()}' needs 9 numbers, got {len(parts)}.")
            try:
                kappa = tuple(int(p) for p in parts[:3])
                numbers = [float(p) for p in parts[3:]]
            except ValueError:
                raise forms.ValidationError(f"Mode '{chunk.strip()}' is not numeric.")
            amplitudes = tuple(complex(numbers[i], numbers[i + 1]) for i in range(0, 6, 2))
            lstModes.append((kappa, amplitudes))
        return tuple(lstModes)


class ForcingForm(forms.Form):
    kind = forms.ChoiceField(choices=_choices(ForcingKind.All))
    modes = ForcingModesField(required=False)
    seed = forms.IntegerField(min_value=0, required=False)
    slope = forms.FloatField(required=False)
    amplitude = forms.FloatField(min_value=0, required=False)
    kmax = forms.FloatField(min_value=1, required=False)
    modulation = forms.ChoiceField(choices=_choices(Modulation.All), required=False)
    mod_mean = forms.FloatField(required=False)
    mod_amplitude = forms.FloatField(required=False)
    mod_omega = forms.FloatField(required=False)
    mod_ramp_time = PositiveFloatField(required=False)

    def clean(self):
        cleaned_data = super().clean()
        if cleaned_data.get('kind') == ForcingKind.Modes and not cleaned_data.get('modes'):
            self.add_error('modes', "At least one mode is required when kind = modes.")
        return cleaned_data


class ConstantsForm(forms.Form):
    c0 = PositiveFloatField(required=False)
    c1 = PositiveFloatField(required=False)
    c2 = PositiveFloatField(required=False)
    c3 = PositiveFloatField(required=False)
    c4 = PositiveFloatField(required=False)
    c5 = PositiveFloatField(required=False)


class RunForm(forms.Form):
    name = forms.CharField(max_length=200, required=False)
    t_end = PositiveFloatField(required=False)
    n_steps = forms.IntegerField(min_value=1, required=False)
    monitor = forms.ChoiceField(choices=_choices(MonitorVariant.All), required=False)
    seed = forms.IntegerField(min_value=0, required=False)
    allow_over_horizon = forms.BooleanField(required=False)

    def clean(self):
        cleaned_data = super().clean()
        if (cleaned_data.get('t_end') is None) == (cleaned_data.get('n_steps') is None):
            if 't_end' not in self.errors and 'n_steps' not in self.errors:
                self.add_error('t_end', "Give exactly one of t_end and n_steps.")
        return cleaned_data


class OutputForm(forms.Form):
    dir = forms.CharField(required=False)
    snapshot_every = forms.IntegerField(min_value=0, required=False)


class FloatListField(forms.CharField):

    def to_python(self, value):
        value = super().to_python(value)
        try:
            return [float(part) for part in value.replace(',', ' ').split()]
        except ValueError:
            raise forms.ValidationError("Expected a whitespace-separated list of numbers.")


class SweepForm(forms.Form):
    k_values = FloatListField(required=False)
    schemes = forms.CharField(required=False)
    reference_k = PositiveFloatField(required=False)
    workers = forms.IntegerField(min_value=1, required=False)

    def clean_k_values(self):
        values = self.cleaned_data['k_values']
        if any(not value > 0 for value in values):
            raise forms.ValidationError("Every k must be > 0.")
        return values

    def clean_schemes(self):
        lstSchemes = self.cleaned_data['schemes'].replace(',', ' ').split()
        unknown = [scheme for scheme in lstSchemes if scheme not in Scheme.All]
        if unknown:
            raise forms.ValidationError(f"Unknown scheme(s): {', '.join(unknown)}.")
        return lstSchemes


SECTION_FORMS = {
    'grid': GridForm,
    'scheme': SchemeForm,
    'initial': InitialForm,
    'forcing': ForcingForm,
    'constants': ConstantsForm,
    'run': RunForm,
    'output': OutputForm,
    'sweep': SweepForm,
}
