"""
Run orchestration: multi-step trajectories with per-step monitors, horizon
enforcement, atomic persistence of the time series, report and snapshots,
and concurrent parameter sweeps.
"""
import hashlib
import io
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import pandas as pd
from progressbar import Bar, Percentage, ProgressBar

from .logger import Logger
from .mdlEnum import MonitorVariant, Scheme, TIME_SERIES_COLUMNS, Termination
from .mdlErrors import ConfigError, Infeasible, InfeasibleConfig, NonConvergence
from .mdlSpectral import FieldSpec, ForcingSpec, Grid, h1_inner, make_field, norms, save_field, atomic_write_bytes
from .mdlStability import ConstantsSet, compute_bounds, dt_restrictions, horizons, l2_envelope, step_verdict
from .mdlTimestep import SchemeConfig, step

logger = Logger.get_logger()

CSV_NAME = "timeseries.csv"
REPORT_NAME = "report.json"


def _setting(key, default):
    try:
        from django.conf import settings
        return settings.NSE3D.get(key, default) if settings.configured else default
    except (ImportError, AttributeError):
        return default


def log_execution_time(func):
    """
    Decorator to log the total execution time of a function.
    """
    def wrapper(*args, **kwargs):
        start_time = time.time()
        logger.info(f"Started: {func.__name__}")

        result = func(*args, **kwargs)

        elapsed_time = time.time() - start_time
        logger.info(f"Completed: {func.__name__} in {elapsed_time:.2f} seconds")
        return result
    wrapper.__name__ = func.__name__
    wrapper.__doc__ = func.__doc__
    return wrapper


@dataclass(frozen=True)
class RunConfig:
    n: int
    scheme_cfg: SchemeConfig
    initial: FieldSpec = field(default_factory=FieldSpec)
    forcing: ForcingSpec = field(default_factory=ForcingSpec)
    constants: ConstantsSet = field(default_factory=ConstantsSet)
    t_end: Optional[float] = None
    n_steps: Optional[int] = None
    monitor: str = MonitorVariant.NoMonitor
    snapshot_every: int = 0
    out_dir: str = "output"
    seed: int = 0
    name: str = "run"
    allow_over_horizon: bool = False
    fft_workers: int = field(default=1, compare=False)
    write_files: bool = field(default=True, compare=False)

    def __post_init__(self):
        if (self.t_end is None) == (self.n_steps is None):
            raise ConfigError("Exactly one of run.t_end and run.n_steps must be given", key='run.t_end')
        if self.t_end is not None and not (math.isfinite(self.t_end) and self.t_end > 0):
            raise ConfigError(f"run.t_end must be finite and > 0, got {self.t_end!r}", key='run.t_end')
        if self.n_steps is not None and self.n_steps < 1:
            raise ConfigError(f"run.n_steps must be >= 1, got {self.n_steps!r}", key='run.n_steps')
        if self.snapshot_every < 0:
            raise ConfigError(f"output.snapshot_every must be >= 0, got {self.snapshot_every!r}",
                              key='output.snapshot_every')
        if self.monitor not in MonitorVariant.All:
            raise ConfigError(f"Unknown monitor variant {self.monitor!r}", key='run.monitor')
        semi_monitor = self.monitor in (MonitorVariant.SemiSmall, MonitorVariant.SemiShort)
        full_monitor = self.monitor in (MonitorVariant.FullSmall, MonitorVariant.FullShort)
        scheme = self.scheme_cfg.scheme
        if (semi_monitor and scheme != Scheme.SemiImplicit) or (full_monitor and scheme != Scheme.FullyImplicit):
            raise ConfigError(f"Monitor {self.monitor!r} does not apply to scheme {scheme!r}", key='run.monitor')

    @property
    def total_steps(self):
        if self.n_steps is not None:
            return int(self.n_steps)
        ratio = self.t_end / self.scheme_cfg.k
        nearest = round(ratio)
        if abs(ratio - nearest) <= 1e-9 * max(ratio, 1.0):
            return max(int(nearest), 1)
        return int(math.ceil(ratio))

    @property
    def times(self):
        k = self.scheme_cfg.k
        return [j * k for j in range(1, self.total_steps + 1)]


@dataclass(frozen=True)
class RunRow:
    n: int
    t: float
    norms: object
    fp_iters: int
    fp_residual: float
    energy_residual: float
    verdict: object

    def as_record(self):
        verdict = self.verdict
        cubic = verdict.cubic
        return {
            'n': self.n,
            't': self.t,
            'l2_sq': self.norms.l2_sq,
            'h1_sq': self.norms.h1_sq,
            'h2_sq': self.norms.h2_sq,
            'l3': self.norms.l3,
            'fp_iters': self.fp_iters,
            'energy_residual': self.energy_residual,
            'verdict_l2': verdict.l2_recurrence.label,
            'verdict_h1': verdict.h1_recurrence.label,
            'verdict_lemma': verdict.lemma_hypotheses.label,
            'verdict_y1': verdict.y1_membership.label,
            'verdict_bound': verdict.bound.label,
            'y1': cubic.y1,
            'y2': cubic.y2,
            'y_plus': cubic.y_plus,
            'slack_min': verdict.slack_min,
        }


@dataclass
class RunReport:
    name: str
    config: RunConfig
    rows: list
    bounds: object
    horizons: object
    admissible: object
    termination: str
    first_violation: Optional[int] = None
    first_hypothesis_violation: Optional[int] = None
    first_conclusion_violation: Optional[int] = None
    error: str = ""
    warnings: list = field(default_factory=list)
    wall_time: float = 0.0
    outputs: dict = field(default_factory=dict)
    u_final: object = field(default=None, repr=False)

    @property
    def steps(self):
        return len(self.rows)

    @property
    def final_time(self):
        return self.rows[-1].t if self.rows else 0.0

    @property
    def l2_envelope(self):
        return l2_envelope(self.bounds, self.config.constants, self.steps)

    def time_series(self):
        return pd.DataFrame([row.as_record() for row in self.rows], columns=TIME_SERIES_COLUMNS)

    def summary(self):
        return (f"{self.name}: {self.termination} after {self.steps} steps "
                f"(t={self.final_time!r}, first violation: {self.first_violation or 'none'})")


def _preflight(config, bounds):
    """Timestep restrictions of the monitor variant; small-data variants refuse to start."""
    if config.monitor == MonitorVariant.NoMonitor:
        return None, []
    k = config.scheme_cfg.k
    rtol = _setting('CONSTRAINT_RTOL', 1e-12)
    small = config.monitor in MonitorVariant.SmallData
    try:
        admissible = dt_restrictions(bounds, config.constants, config.monitor)
    except Infeasible as e:
        if small:
            raise InfeasibleConfig(e.tag, str(e)) from e
        logger.warning(f"{config.name}: {e}")
        return None, [str(e)]

    failing = admissible.failing(k, rtol)
    if not failing:
        return admissible, []
    binding = min((c for c in admissible.constraints if c.tag in failing), key=lambda c: c.k_max)
    message = (f"k={k!r} exceeds the admissible timestep {binding.k_max!r} "
               f"of {config.monitor} (binding: {binding.tag})")
    if small:
        raise InfeasibleConfig(binding.tag, message)
    logger.warning(f"{config.name}: {message}")
    return admissible, [message]


def _horizon_time(config, hz):
    if config.allow_over_horizon:
        return math.inf
    if config.monitor == MonitorVariant.SemiShort:
        return hz.t_star_semi
    if config.monitor == MonitorVariant.FullShort:
        return hz.t_f_star
    return math.inf


def _progress(name, total):
    widgets = [
        "Running " + str(name) + ":",
        Percentage(),
        Bar("=")
    ]
    return ProgressBar(widgets=widgets, maxval=total, term_width=100).start()


@log_execution_time
def run(config, progress=False):
    """
    Integrate one trajectory and evaluate every monitor on every step.
    Monitors only observe: a bound violation ends the run after its row,
    a non-converged step ends it with the rows computed so far.
    """
    start = time.perf_counter()
    cfg = config.scheme_cfg
    grid = Grid(config.n, workers=1 if cfg.deterministic else config.fft_workers)
    u = make_field(grid, config.initial)
    total = config.total_steps
    bounds = compute_bounds(u, config.forcing, cfg.nu, config.constants, cfg.k, config.times)
    hz = horizons(bounds, config.constants)
    admissible, lstWarnings = _preflight(config, bounds)
    horizon = _horizon_time(config, hz)

    report = RunReport(name=config.name, config=config, rows=[], bounds=bounds, horizons=hz,
                       admissible=admissible, termination=Termination.Completed,
                       warnings=lstWarnings)
    if config.write_files and config.snapshot_every:
        report.outputs['snapshots'] = [_snapshot(config, 0, u)]

    bar = _progress(config.name, total) if progress else None
    prev = norms(u)
    for n in range(1, total + 1):
        t = n * cfg.k
        if t > horizon * (1.0 + 1e-12):
            report.termination = Termination.HorizonReached
            logger.info(f"{config.name}: horizon t*={horizon!r} reached before step {n}")
            break
        f_n = config.forcing.evaluate(grid, t)
        try:
            result = step(u, f_n, cfg)
        except NonConvergence as e:
            report.termination = Termination.NonConvergence
            report.error = str(e)
            logger.warning(f"{config.name}: step {n} did not converge: {e}")
            break

        new = norms(result.u_new)
        f_norms = norms(f_n)
        verdict = step_verdict(prev, new, f_norms.hm1_sq, f_norms.l2_sq, cfg, config.constants,
                               bounds, config.monitor)
        report.rows.append(RunRow(n=n, t=t, norms=new, fp_iters=result.fp_iters,
                                  fp_residual=result.fp_residual,
                                  energy_residual=result.energy_identity_residual,
                                  verdict=verdict))
        logger.debug(f"{config.name} n={n} fp_iters={result.fp_iters} "
                     f"residual={result.energy_identity_residual:.3e} slack_min={verdict.slack_min:.3e}")
        # first_violation covers both kinds; the split fields tell a failed assumption from a failed bound
        if report.first_hypothesis_violation is None and _any_failed(verdict.hypothesis_checks()):
            report.first_hypothesis_violation = n
        if report.first_conclusion_violation is None and _any_failed(verdict.conclusion_checks()):
            report.first_conclusion_violation = n
        if report.first_violation is None and _any_failed(verdict.checks()):
            report.first_violation = n

        u, prev = result.u_new, new
        if config.write_files and config.snapshot_every and n % config.snapshot_every == 0:
            report.outputs['snapshots'].append(_snapshot(config, n, u))
        if bar is not None:
            bar.update(n)
        if verdict.bound.applicable and not verdict.bound.ok:
            report.termination = Termination.BoundViolated
            logger.warning(f"{config.name}: bound of {config.monitor} violated at step {n} "
                           f"({verdict.bound.value!r} > {verdict.bound.threshold!r})")
            break
    if bar is not None:
        bar.finish()

    report.u_final = u
    report.wall_time = time.perf_counter() - start
    if config.write_files:
        write_outputs(report)
    _record(report)
    logger.info(report.summary())
    return report


def _any_failed(checks):
    return any(check.applicable and not check.ok for check in checks.values())


def _snapshot(config, n, u):
    path = os.path.join(config.out_dir, f"snap_{n:08}.fld")
    save_field(path, u)
    return path


def time_series_csv(report):
    buffer = io.StringIO()
    report.time_series().to_csv(buffer, index=False, lineterminator="\n", na_rep="nan")
    return buffer.getvalue().encode("utf-8")


def report_json(report):
    from ..serializers import RunReportSerializer, render_json
    return render_json(RunReportSerializer(report).data)


def write_outputs(report):
    """CSV and JSON, each written to a temporary file and renamed into place."""
    out_dir = report.config.out_dir
    csv_path = os.path.join(out_dir, CSV_NAME)
    json_path = os.path.join(out_dir, REPORT_NAME)
    csv_bytes = time_series_csv(report)
    atomic_write_bytes(csv_path, csv_bytes)
    atomic_write_bytes(json_path, report_json(report))
    report.outputs.update({'csv': csv_path, 'json': json_path,
                           'csv_sha256': hashlib.sha256(csv_bytes).hexdigest()})
    logger.info(f"{report.name}: wrote {csv_path} and {json_path}")


def _record(report):
    if not _setting('RECORD_RUNS', False):
        return
    try:
        from ..models import RunRecord
        cfg = report.config.scheme_cfg
        RunRecord.objects.create(
            name=report.name, scheme=cfg.scheme, monitor=report.config.monitor,
            n=report.config.n, k=cfg.k, nu=cfg.nu, steps=report.steps,
            termination=report.termination, first_violation=report.first_violation,
            output_dir=report.config.out_dir if report.config.write_files else "",
            csv_sha256=report.outputs.get('csv_sha256', ""),
        )
    except Exception as e:
        logger.warning(f"Run registry not updated for {report.name}: {e}")


def _run_one(config, index):
    dicResult = {'iserror': False, 'index': index, 'name': config.name}
    try:
        dicResult['value'] = run(config)
    except InfeasibleConfig as e:
        dicResult['iserror'] = True
        dicResult['error'] = f"InfeasibleConfig ({e.tag})"
        dicResult['error_details'] = dicResult['error'] + " | " + str(e)
    except Exception as e:
        logger.exception(f"Sweep member {config.name} failed")
        dicResult['iserror'] = True
        dicResult['error'] = type(e).__name__
        dicResult['error_details'] = dicResult['error'] + " | " + str(e)
    return dicResult


@log_execution_time
def sweep(configs, max_workers=None, deterministic=False):
    """
    Independent runs, optionally concurrent. Returns one result dictionary
    per config, in input order; a failing member never stops the others.
    """
    if deterministic:
        max_workers = 1
    elif max_workers is None:
        max_workers = _setting('SWEEP_WORKERS', 3)
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        lsttask = [executor.submit(_run_one, config, index) for index, config in enumerate(configs)]
        lstResults = [task.result() for task in lsttask]
    failed = sum(1 for dicResult in lstResults if dicResult['iserror'])
    logger.info(f"Sweep finished: {len(lstResults) - failed} runs, {failed} errors")
    return lstResults


def sweep_summary(results):
    """(k, scheme, variant) -> first violation step (or "none"), one row per sweep member."""
    lstRows = []
    for dicResult in results:
        row = {'name': dicResult['name'], 'k': None, 'scheme': None, 'monitor': None,
               'termination': None, 'first_violation': None, 'error': dicResult.get('error', "")}
        report = dicResult.get('value')
        if report is not None:
            cfg = report.config.scheme_cfg
            row.update(k=cfg.k, scheme=cfg.scheme, monitor=report.config.monitor,
                       termination=report.termination,
                       first_violation=report.first_violation or "none")
        lstRows.append(row)
    return pd.DataFrame(lstRows, columns=['name', 'k', 'scheme', 'monitor', 'termination',
                                          'first_violation', 'error'])


def halving_configs(config, levels):
    """config with k, k/2, ..., k/2^(levels-1); each run writes below its own directory."""
    lstConfigs = []
    for level in range(levels):
        k = config.scheme_cfg.k / 2 ** level
        name = f"{config.name}_k{level}"
        n_steps = None if config.n_steps is None else config.n_steps * 2 ** level
        lstConfigs.append(replace(config, name=name, n_steps=n_steps,
                                  scheme_cfg=replace(config.scheme_cfg, k=k),
                                  out_dir=os.path.join(config.out_dir, name)))
    return lstConfigs


def h1_distance(u, v):
    diff = u - v
    return math.sqrt(max(h1_inner(diff, diff), 0.0))


def estimate_order(finals, reference):
    """
    Observed convergence orders from end states at k, k/2, k/4, ...
    measured in H1 against a reference solution: log2(e_j / e_{j+1}).
    """
    errors = [h1_distance(u, reference) for u in finals]
    orders = []
    for coarse, fine in zip(errors, errors[1:]):
        orders.append(math.log2(coarse / fine) if coarse > 0 and fine > 0 else math.nan)
    return errors, orders


def richardson_order(finals):
    """Order from three end states at k, k/2, k/4 without a reference."""
    if len(finals) != 3:
        raise ValueError(f"Three end states are needed, got {len(finals)}")
    coarse = h1_distance(finals[0], finals[1])
    fine = h1_distance(finals[1], finals[2])
    return math.log2(coarse / fine) if coarse > 0 and fine > 0 else math.nan


def energy_decay_ok(report):
    """l2_sq strictly decreasing along an unforced trajectory."""
    values = np.array([report.bounds.u0_l2_sq] + [row.norms.l2_sq for row in report.rows])
    return bool(np.all(np.diff(values) < 0)) if values[0] > 0 else bool(np.all(values == 0))
