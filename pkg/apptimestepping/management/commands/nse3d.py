import argparse
import math
import sys
from dataclasses import replace

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from apptimestepping.mdlProcess.mdlConfigFile import load_config, sweep_configs
from apptimestepping.mdlProcess.mdlEnum import MonitorVariant, Termination
from apptimestepping.mdlProcess.mdlErrors import (
    BlowUp, Infeasible, InfeasibleConfig, Nse3dError,
)
from apptimestepping.mdlProcess.mdlHarness import (
    estimate_order, richardson_order, run, sweep, sweep_summary,
)
from apptimestepping.mdlProcess.mdlSpectral import Grid, make_field
from apptimestepping.mdlProcess.mdlStability import (
    ConstantsSet, blowup_time, compute_bounds, comparison_ode, comparison_seq, cubic_analyze,
    doubling_time, dt_restrictions, estimate_constants, gronwall_envelope,
)
from apptimestepping.models import RunRecord
from apptimestepping.serializers import RunRecordSerializer, render_json

EXIT_CODES = {
    Termination.Completed: 0,
    Termination.HorizonReached: 0,
    Termination.BoundViolated: 2,
    Termination.NonConvergence: 3,
}
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 4


class Command(BaseCommand):
    help = 'Pseudospectral 3d Navier-Stokes runs with stability monitors, timestep calculators and scalar analysis tools'
    requires_system_checks = []

    def add_arguments(self, parser):
        # argparse errors become CommandError (exit 1) instead of SystemExit(2)
        parser.called_from_command_line = False

        common = argparse.ArgumentParser(add_help=False)
        common.add_argument('--config', help='Run configuration (INI file)')
        common.add_argument('--set', dest='overrides', action='append', default=[], metavar='SECTION.KEY=VALUE',
                            help='Override one configuration value (repeatable)')
        common.add_argument('--deterministic', action='store_true',
                            help='Single-threaded transforms and sweeps')
        common.add_argument('--out', dest='out_dir', help='Output directory (overrides output.dir)')

        subparsers = parser.add_subparsers(dest='subcommand', metavar='SUBCOMMAND')
        subparsers.required = True

        run_parser = subparsers.add_parser('run', parents=[common], help='Integrate one configured trajectory')
        run_parser.add_argument('--progress', action='store_true', help='Draw a progress bar')

        sweep_parser = subparsers.add_parser('sweep', parents=[common],
                                             help='Run the [sweep] product of k values and schemes')
        sweep_parser.add_argument('--workers', type=int, help='Concurrent runs')

        dt_parser = subparsers.add_parser('admissible-dt', parents=[common],
                                          help='Largest timestep allowed by a monitor variant')
        dt_parser.add_argument('--variant', choices=MonitorVariant.Restricted,
                               help='Monitor variant (default: run.monitor of the config)')

        cubic_parser = subparsers.add_parser('cubic', parents=[common], help='Roots and extrema of the H1 cubic')
        cubic_parser.add_argument('--x', type=float, required=True)
        cubic_parser.add_argument('--nu', type=float, required=True)
        cubic_parser.add_argument('--k', type=float, required=True)
        cubic_parser.add_argument('--c0', type=float)
        cubic_parser.add_argument('--c4', type=float)

        gronwall_parser = subparsers.add_parser('gronwall', parents=[common],
                                                help='Discrete Gronwall envelope')
        gronwall_parser.add_argument('--b', type=float, required=True)
        gronwall_parser.add_argument('--x0', type=float, required=True)
        gronwall_parser.add_argument('--r-max', dest='r_max', type=float, required=True)
        gronwall_parser.add_argument('--n', type=int, required=True)

        compare_parser = subparsers.add_parser('compare', parents=[common],
                                               help='Comparison sequence against the comparison ODE')
        compare_parser.add_argument('--z0', type=float, required=True)
        compare_parser.add_argument('--nu', type=float, required=True)
        compare_parser.add_argument('--c4', type=float)
        compare_parser.add_argument('--k', type=float, help='Step of the comparison sequence table')
        compare_parser.add_argument('--n', type=int, help='Rows of the table (default: up to blow-up)')
        compare_parser.add_argument('--t', type=float, help='Evaluate z(t)^2 at one time instead of a table')
        compare_parser.add_argument('--growth', type=float,
                                    help='Growth factor (default 1 for --t, 2 for the table)')

        estimate_parser = subparsers.add_parser('estimate-constants', parents=[common],
                                                help='Lower estimates of c0, c1, c4 from random fields')
        estimate_parser.add_argument('--n', type=int, default=16, help='Grid resolution')
        estimate_parser.add_argument('--samples', type=int, default=32)
        estimate_parser.add_argument('--seed', type=int, default=0)

        history_parser = subparsers.add_parser('history', parents=[common], help='Latest recorded runs as JSON')
        history_parser.add_argument('--limit', type=int, default=20)

    def run_from_argv(self, argv):
        try:
            super().run_from_argv(argv)
        except CommandError as e:
            self.stderr.write(f"CommandError: {e}")
            sys.exit(e.returncode)

    def handle(self, *args, **options):
        handler = {
            'run': self.handle_run,
            'sweep': self.handle_sweep,
            'admissible-dt': self.handle_admissible_dt,
            'cubic': self.handle_cubic,
            'gronwall': self.handle_gronwall,
            'compare': self.handle_compare,
            'estimate-constants': self.handle_estimate_constants,
            'history': self.handle_history,
        }[options['subcommand']]
        try:
            handler(options)
        except Nse3dError as e:
            raise CommandError(str(e), returncode=EXIT_CONFIG)

    def _load(self, options):
        if not options.get('config'):
            raise CommandError("--config is required", returncode=EXIT_CONFIG)
        dicResult = load_config(options['config'], options['overrides'],
                                deterministic=options['deterministic'], out_dir=options['out_dir'])
        if dicResult['iserror']:
            raise CommandError(dicResult['error_details'], returncode=EXIT_CONFIG)
        return dicResult['value']

    def _constants(self, **values):
        dicConstants = dict(settings.NSE3D.get('CONSTANTS', {}))
        dicConstants.update({key: value for key, value in values.items() if value is not None})
        return ConstantsSet.from_mapping(dicConstants)

    def handle_run(self, options):
        loaded = self._load(options)
        try:
            report = run(loaded.run, progress=options['progress'])
        except InfeasibleConfig as e:
            raise CommandError(f"Infeasible ({e.tag}): {e}", returncode=EXIT_INFEASIBLE)
        except Nse3dError as e:
            raise CommandError(str(e), returncode=EXIT_CONFIG)

        line = report.summary()
        code = EXIT_CODES[report.termination]
        if code:
            self.stdout.write(self.style.WARNING(line))
            raise CommandError(report.error or f"Run ended with {report.termination}", returncode=code)
        self.stdout.write(self.style.SUCCESS(line))

    def handle_sweep(self, options):
        loaded = self._load(options)
        configs = sweep_configs(loaded)
        workers = options['workers'] or loaded.sweep.get('workers')
        results = sweep(configs, max_workers=workers, deterministic=options['deterministic'])
        self.stdout.write(sweep_summary(results).to_string(index=False))
        self._print_orders(loaded, results)
        for dicResult in results:
            if dicResult['iserror']:
                self.stdout.write(self.style.ERROR(f"{dicResult['name']}: {dicResult['error_details']}"))

    def _print_orders(self, loaded, results):
        dicFinals = {}
        for dicResult in results:
            report = dicResult.get('value')
            if report is None or report.termination not in (Termination.Completed, Termination.HorizonReached):
                continue
            cfg = report.config.scheme_cfg
            dicFinals.setdefault(cfg.scheme, []).append((cfg.k, report.u_final))

        reference_k = loaded.sweep.get('reference_k')
        for scheme, lstFinals in dicFinals.items():
            lstFinals.sort(key=lambda item: -item[0])
            finals = [u for _, u in lstFinals]
            if reference_k:
                base = loaded.run
                reference = run(replace(
                    base, name=f"{base.name}_{scheme}_reference", monitor=MonitorVariant.NoMonitor,
                    n_steps=None if base.n_steps is None else
                    max(int(round(base.n_steps * base.scheme_cfg.k / reference_k)), 1),
                    scheme_cfg=replace(base.scheme_cfg, k=reference_k, scheme=scheme),
                    write_files=False,
                ))
                errors, orders = estimate_order(finals, reference.u_final)
                self.stdout.write(f"{scheme}: H1 errors {errors!r}, observed orders {orders!r}")
            elif len(finals) == 3:
                self.stdout.write(f"{scheme}: Richardson order {richardson_order(finals)!r}")

    def handle_admissible_dt(self, options):
        loaded = self._load(options)
        config = loaded.run
        variant = options['variant'] or config.monitor
        if variant not in MonitorVariant.Restricted:
            raise CommandError("Give --variant (run.monitor is 'none')", returncode=EXIT_CONFIG)
        cfg = config.scheme_cfg
        u0 = make_field(Grid(config.n, workers=config.fft_workers), config.initial)
        bounds = compute_bounds(u0, config.forcing, cfg.nu, config.constants, cfg.k, config.times)
        try:
            admissible = dt_restrictions(bounds, config.constants, variant)
        except Infeasible as e:
            raise CommandError(f"Infeasible ({e.tag}): {e}", returncode=EXIT_INFEASIBLE)

        for constraint in admissible.constraints:
            self.stdout.write(f"{constraint.tag:<6} k_max = {constraint.k_max!r}    {constraint.description}")
        self.stdout.write(self.style.SUCCESS(
            f"k_max = {admissible.k_max!r} (binding: {admissible.binding or 'none'})"))
        verdict = "admissible" if admissible.holds(cfg.k, settings.NSE3D.get('CONSTRAINT_RTOL', 1e-12)) \
            else "not admissible"
        self.stdout.write(f"configured k = {cfg.k!r}: {verdict}")

    def handle_cubic(self, options):
        consts = self._constants(c0=options['c0'], c4=options['c4'])
        nu, k = options['nu'], options['k']
        # x is passed as grad_prev_sq with zero forcing, so G uses exactly this x
        analysis = cubic_analyze(options['x'], 0.0, nu, k, consts)
        dtf1_threshold = 2.0 / 3.0 * math.sqrt(nu ** 3 / (3.0 * consts.c4 * k))
        dtf1_ok = analysis.x < dtf1_threshold

        self.stdout.write(f"x = {analysis.x!r}")
        self.stdout.write(f"cubic coefficient = {analysis.cubic_coeff!r}, linear coefficient = {analysis.linear_coeff!r}")
        self.stdout.write(f"y_minus = {analysis.y_minus!r}, y_plus = {analysis.y_plus!r}, G(y_plus) = {analysis.g_at_y_plus!r}")
        self.stdout.write(f"y0 = {analysis.y0!r}")
        if analysis.is_degenerate:
            self.stdout.write(f"degenerate (x = 0): y1 = {analysis.y1!r}, y2 = {analysis.y2!r}")
        elif analysis.has_positive_roots:
            self.stdout.write(f"y1 = {analysis.y1!r}, y2 = {analysis.y2!r}")
        else:
            self.stdout.write("no positive roots" + ("; dtf1 violated" if not dtf1_ok else ""))
        self.stdout.write(f"dtf1: {'holds' if dtf1_ok else 'violated'} (x = {analysis.x!r}, threshold = {dtf1_threshold!r})")
        self.stdout.write(f"a = {analysis.a!r}, y_star = {analysis.y_star!r}")

    def handle_gronwall(self, options):
        value = gronwall_envelope(options['b'], options['x0'], options['r_max'], options['n'])
        self.stdout.write(f"envelope = {value!r}")

    def handle_compare(self, options):
        c4 = options['c4'] if options['c4'] is not None else self._constants().c4
        z0, nu = options['z0'], options['nu']
        if options['t'] is not None:
            growth = options['growth'] or 1.0
            try:
                value = comparison_ode(z0, nu, c4, options['t'], growth)
            except BlowUp as e:
                raise CommandError(str(e), returncode=EXIT_CONFIG)
            self.stdout.write(f"z(t)^2 = {value!r}")
            self.stdout.write(f"doubling time = {doubling_time(z0, nu, c4, growth)!r}, "
                              f"blow-up time = {blowup_time(z0, nu, c4, growth)!r}")
            return

        if options['k'] is None:
            raise CommandError("compare needs --k for a table or --t for one value", returncode=EXIT_CONFIG)
        growth = options['growth'] or 2.0
        k = options['k']
        limit = blowup_time(z0, nu, c4, growth)
        steps = options['n']
        if steps is None:
            steps = int(math.ceil(limit / k)) - 1 if math.isfinite(limit) else 100
        zeta = comparison_seq(z0, nu, c4, k, max(steps, 0), growth)
        self.stdout.write("n,t,zeta,z,ok")
        for n, value in enumerate(zeta):
            t = n * k
            if t >= limit:
                break
            z = math.sqrt(comparison_ode(z0, nu, c4, t, growth))
            self.stdout.write(f"{n},{t!r},{float(value)!r},{z!r},{'true' if value <= z else 'false'}")

    def handle_estimate_constants(self, options):
        estimated = estimate_constants(Grid(options['n']), options['samples'], options['seed'])
        for name in ('c0', 'c1', 'c4'):
            self.stdout.write(f"{name} estimated >= {getattr(estimated, name)!r}")
        self.stdout.write(f"({estimated.samples} samples on n={options['n']})")

    def handle_history(self, options):
        records = RunRecord.objects.all()[:max(options['limit'], 0)]
        self.stdout.write(render_json(RunRecordSerializer(records, many=True).data).decode('utf-8'))
