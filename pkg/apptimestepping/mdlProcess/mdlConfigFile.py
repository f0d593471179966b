"""
INI run configurations: parse, apply `--set section.key=value` overrides,
validate each section with its form and build a RunConfig.
"""
import configparser
import os
import re
from dataclasses import dataclass, field, replace

from django.conf import settings

from .logger import Logger
from .mdlEnum import ForcingKind, MonitorVariant, Scheme
from .mdlErrors import AnalysisInputError, ConfigError
from .mdlHarness import RunConfig
from .mdlSpectral import FieldSpec, ForcingSpec
from .mdlStability import ConstantsSet
from .mdlTimestep import SchemeConfig

logger = Logger.get_logger()

REQUIRED_SECTIONS = ('grid', 'scheme', 'run')
_SECTION_LINE = re.compile(r'^\s*\[([^\]]+)\]')
_KEY_LINE = re.compile(r'^([^\s=:#;\[][^=:]*?)\s*[=:]')


@dataclass(frozen=True)
class LoadedConfig:
    run: RunConfig
    sweep: dict = field(default_factory=dict)
    sections: dict = field(default_factory=dict)


def _line_numbers(text):
    """(section, key) -> 1-based line number of its definition."""
    dicLines = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        match = _SECTION_LINE.match(line)
        if match:
            section = match.group(1).strip().lower()
            dicLines[(section, None)] = lineno
            continue
        match = _KEY_LINE.match(line)
        if match and section is not None:
            dicLines[(section, match.group(1).strip().lower())] = lineno
    return dicLines


def _where(dicLines, section, key=None):
    lineno = dicLines.get((section, key))
    return f" (line {lineno})" if lineno else " (from --set)"


def _apply_override(parser, override):
    if '=' not in override:
        raise ConfigError(f"Override '{override}' is not of the form section.key=value", key=override)
    target, value = override.split('=', 1)
    if '.' not in target:
        raise ConfigError(f"Override '{override}' is not of the form section.key=value", key=target)
    section, key = (part.strip().lower() for part in target.split('.', 1))
    if not parser.has_section(section):
        parser.add_section(section)
    parser.set(section, key, value.strip())


def _validate_sections(parser, dicLines):
    from ..forms import SECTION_FORMS

    dicClean = {}
    for section in parser.sections():
        form_class = SECTION_FORMS.get(section)
        if form_class is None:
            raise ConfigError(f"Unknown section [{section}]{_where(dicLines, section)}",
                              key=section, line=dicLines.get((section, None)))
        data = dict(parser.items(section))
        for key in data:
            if key not in form_class.base_fields:
                raise ConfigError(f"Unknown key '{key}' in [{section}]{_where(dicLines, section, key)}",
                                  key=f"{section}.{key}", line=dicLines.get((section, key)))
        form = form_class(data)
        if not form.is_valid():
            key, messages = next(iter(form.errors.items()))
            if key == '__all__':
                raise ConfigError(f"[{section}]: {' '.join(messages)}{_where(dicLines, section)}",
                                  key=section, line=dicLines.get((section, None)))
            raise ConfigError(f"{section}.{key}: {' '.join(messages)}{_where(dicLines, section, key)}",
                              key=f"{section}.{key}", line=dicLines.get((section, key)))
        dicClean[section] = {name: value for name, value in form.cleaned_data.items()
                             if name in data}
    for section in REQUIRED_SECTIONS:
        if section not in dicClean:
            raise ConfigError(f"Missing section [{section}]", key=section)
    return dicClean


def _pick(values, key, default):
    value = values.get(key)
    return default if value is None or value == "" else value


def build_run_config(dicClean, deterministic=False, out_dir=None):
    dicNse3d = settings.NSE3D
    grid, scheme, run = dicClean['grid'], dicClean['scheme'], dicClean['run']
    initial = dicClean.get('initial', {})
    forcing = dicClean.get('forcing', {})
    output = dicClean.get('output', {})
    seed = _pick(run, 'seed', 0)
    name = _pick(run, 'name', "run")

    try:
        constants = ConstantsSet.from_mapping({**dicNse3d.get('CONSTANTS', {}),
                                               **dicClean.get('constants', {})})
    except AnalysisInputError as e:
        raise ConfigError(str(e), key='constants.c3') from e

    try:
        scheme_cfg = SchemeConfig(
            k=scheme['k'],
            nu=scheme['nu'],
            scheme=scheme['scheme'],
            fp_tol=_pick(scheme, 'fp_tol', dicNse3d.get('FP_TOL', 1e-12)),
            fp_max_iter=_pick(scheme, 'fp_max_iter', dicNse3d.get('FP_MAX_ITER', 100)),
            deterministic=deterministic,
        )
    except AnalysisInputError as e:
        raise ConfigError(str(e), key='scheme') from e

    field_spec = FieldSpec(
        kind=_pick(initial, 'kind', "zero"),
        amplitude=_pick(initial, 'amplitude', 1.0),
        seed=_pick(initial, 'seed', seed),
        slope=_pick(initial, 'slope', 0.0),
        kmax=_pick(initial, 'kmax', 2.0),
        path=_pick(initial, 'path', ""),
    )
    forcing_spec = ForcingSpec(
        kind=_pick(forcing, 'kind', ForcingKind.Zero),
        modes=_pick(forcing, 'modes', ()),
        seed=_pick(forcing, 'seed', seed + 1),
        slope=_pick(forcing, 'slope', 0.0),
        amplitude=_pick(forcing, 'amplitude', 0.0),
        kmax=_pick(forcing, 'kmax', 2.0),
        modulation=_pick(forcing, 'modulation', "none"),
        mod_mean=_pick(forcing, 'mod_mean', 1.0),
        mod_amplitude=_pick(forcing, 'mod_amplitude', 0.0),
        mod_omega=_pick(forcing, 'mod_omega', 0.0),
        mod_ramp_time=_pick(forcing, 'mod_ramp_time', 1.0),
    )
    if out_dir is None:
        out_dir = _pick(output, 'dir', os.path.join(str(dicNse3d.get('OUTPUT_DIR', "output")), name))

    return RunConfig(
        name=name,
        n=grid['n'],
        scheme_cfg=scheme_cfg,
        initial=field_spec,
        forcing=forcing_spec,
        constants=constants,
        t_end=run.get('t_end'),
        n_steps=run.get('n_steps'),
        monitor=_pick(run, 'monitor', MonitorVariant.NoMonitor),
        snapshot_every=_pick(output, 'snapshot_every', 0),
        out_dir=out_dir,
        seed=seed,
        allow_over_horizon=bool(run.get('allow_over_horizon', False)),
        fft_workers=1 if deterministic else int(dicNse3d.get('FFT_WORKERS', 1)),
    )


def load_config(path, overrides=(), deterministic=False, out_dir=None):
    """
    Read and validate a run configuration. Returns the result dictionary
    {'iserror', 'error', 'error_details', 'value'} with value a LoadedConfig.
    """
    dicResult = {'iserror': False}
    try:
        try:
            with open(path, encoding='utf-8') as handle:
                text = handle.read()
        except OSError as e:
            raise ConfigError(f"Cannot read config file {path}: {e}", key=None)

        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=('#', ';'))
        try:
            parser.read_string(text, source=path)
        except configparser.Error as e:
            raise ConfigError(f"Malformed config file {path}: {e}", line=getattr(e, 'lineno', None))
        for override in overrides or ():
            _apply_override(parser, override)

        dicClean = _validate_sections(parser, _line_numbers(text))
        dicResult['value'] = LoadedConfig(
            run=build_run_config(dicClean, deterministic=deterministic, out_dir=out_dir),
            sweep=dicClean.get('sweep', {}),
            sections=dicClean,
        )
    except ConfigError as e:
        dicResult['iserror'] = True
        dicResult['error'] = "Invalid configuration"
        dicResult['error_details'] = dicResult['error'] + " | " + str(e)
        dicResult['key'] = e.key
        dicResult['line'] = e.line
        logger.warning(dicResult['error_details'])
    return dicResult


def monitor_for_scheme(monitor, scheme):
    """Same kind of monitor (small data, short time, none) for another scheme."""
    if monitor == MonitorVariant.NoMonitor:
        return monitor
    small = monitor in MonitorVariant.SmallData
    if scheme == Scheme.SemiImplicit:
        return MonitorVariant.SemiSmall if small else MonitorVariant.SemiShort
    return MonitorVariant.FullSmall if small else MonitorVariant.FullShort


def sweep_configs(loaded):
    """Cartesian product of the [sweep] k values and schemes around the base run."""
    base = loaded.run
    k_values = loaded.sweep.get('k_values') or [base.scheme_cfg.k]
    schemes = loaded.sweep.get('schemes') or [base.scheme_cfg.scheme]
    lstConfigs = []
    for scheme in schemes:
        for index, k in enumerate(k_values):
            name = f"{base.name}_{scheme}_k{index}"
            n_steps = base.n_steps
            if n_steps is not None:
                n_steps = max(int(round(n_steps * base.scheme_cfg.k / k)), 1)
            lstConfigs.append(replace(
                base,
                name=name,
                n_steps=n_steps,
                scheme_cfg=replace(base.scheme_cfg, k=k, scheme=scheme),
                monitor=monitor_for_scheme(base.monitor, scheme),
                out_dir=os.path.join(base.out_dir, name),
            ))
    return lstConfigs
