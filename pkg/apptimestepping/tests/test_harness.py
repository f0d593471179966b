import json
import os
import shutil
import tempfile
from dataclasses import replace

import pandas as pd
from django.conf import settings
from django.test import TestCase, override_settings

from apptimestepping.mdlProcess.mdlConfigFile import load_config, sweep_configs
from apptimestepping.mdlProcess.mdlEnum import (
    ConstraintTag, FieldKind, ForcingKind, MonitorVariant, Scheme, TIME_SERIES_COLUMNS, Termination,
)
from apptimestepping.mdlProcess.mdlErrors import ConfigError, InfeasibleConfig
from apptimestepping.mdlProcess.mdlHarness import (
    CSV_NAME, REPORT_NAME, RunConfig, energy_decay_ok, estimate_order, halving_configs, richardson_order,
    report_json, run, sweep, sweep_summary,
)
from apptimestepping.mdlProcess.mdlSpectral import FieldSpec, ForcingSpec, Grid, load_field, norms, shear
from apptimestepping.mdlProcess.mdlStability import ConstantsSet
from apptimestepping.mdlProcess.mdlTimestep import SchemeConfig
from apptimestepping.models import RunRecord


def shear_config(out_dir, amplitude=0.05, scheme=Scheme.SemiImplicit, monitor=MonitorVariant.SemiShort,
                 k=0.01, **kwargs):
    return RunConfig(
        name=kwargs.pop('name', 'shear'),
        n=16,
        scheme_cfg=SchemeConfig(k=k, nu=1.0, scheme=scheme),
        initial=FieldSpec(kind=FieldKind.Shear, amplitude=amplitude),
        monitor=monitor,
        out_dir=out_dir,
        **kwargs,
    )


def random_config(out_dir, scheme=Scheme.SemiImplicit, k=0.01, **kwargs):
    return RunConfig(
        name=kwargs.pop('name', 'random'),
        n=8,
        scheme_cfg=SchemeConfig(k=k, nu=1.0, scheme=scheme),
        initial=FieldSpec(kind=FieldKind.Random, amplitude=1.0, seed=3, slope=1.0, kmax=1.8),
        out_dir=out_dir,
        **kwargs,
    )


class HarnessTestCase(TestCase):

    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)


class RunConfigTests(HarnessTestCase):

    def test_exactly_one_stopping_rule(self):
        with self.assertRaises(ConfigError):
            shear_config(self.tmp)
        with self.assertRaises(ConfigError):
            shear_config(self.tmp, t_end=1.0, n_steps=10)

    def test_monitor_must_match_scheme(self):
        with self.assertRaises(ConfigError):
            shear_config(self.tmp, monitor=MonitorVariant.FullSmall, n_steps=1)

    def test_step_count_from_end_time(self):
        self.assertEqual(shear_config(self.tmp, t_end=0.1).total_steps, 10)
        self.assertEqual(shear_config(self.tmp, t_end=0.105).total_steps, 11)


class ShearRunTests(HarnessTestCase):

    def test_semi_implicit_run(self):
        config = shear_config(self.tmp, t_end=0.1, snapshot_every=5)
        report = run(config)
        self.assertEqual(report.termination, Termination.Completed)
        self.assertEqual([row.n for row in report.rows], list(range(1, 11)))
        self.assertIsNone(report.first_violation)
        expected = report.bounds.u0_l2_sq * 1.01 ** -20
        self.assertAlmostEqual(report.rows[-1].norms.l2_sq / expected, 1.0, places=12)

        frame = pd.read_csv(os.path.join(self.tmp, CSV_NAME), dtype=str, keep_default_na=False)
        self.assertEqual(list(frame.columns), TIME_SERIES_COLUMNS)
        self.assertEqual(set(frame['verdict_l2']), {"true"})
        self.assertEqual(set(frame['verdict_bound']), {"true"})
        self.assertEqual(set(frame['verdict_lemma']), {"na"})
        for name in ("snap_00000000.fld", "snap_00000005.fld", "snap_00000010.fld"):
            self.assertTrue(os.path.exists(os.path.join(self.tmp, name)))
        final = load_field(os.path.join(self.tmp, "snap_00000010.fld"))
        self.assertEqual(norms(final).l2_sq, report.rows[-1].norms.l2_sq)

    def test_fully_implicit_run_verdicts(self):
        config = shear_config(self.tmp, scheme=Scheme.FullyImplicit, monitor=MonitorVariant.FullShort,
                              t_end=0.1)
        report = run(config)
        self.assertEqual(report.termination, Termination.Completed)
        for row in report.rows:
            for name, check in row.verdict.checks().items():
                self.assertTrue(check.ok, f"{name} at n={row.n}")
            self.assertTrue(row.verdict.y1_membership.applicable)
        self.assertTrue(energy_decay_ok(report))

    def test_rerun_is_byte_identical(self):
        config = shear_config(self.tmp, t_end=0.05)
        run(config)
        with open(os.path.join(self.tmp, CSV_NAME), 'rb') as handle:
            csv_first = handle.read()
        with open(os.path.join(self.tmp, REPORT_NAME), 'rb') as handle:
            json_first = handle.read()
        run(config)
        with open(os.path.join(self.tmp, CSV_NAME), 'rb') as handle:
            self.assertEqual(handle.read(), csv_first)
        with open(os.path.join(self.tmp, REPORT_NAME), 'rb') as handle:
            self.assertEqual(handle.read(), json_first)
        self.assertNotIn(b"wall", json_first)

    def test_run_is_recorded(self):
        run(shear_config(self.tmp, n_steps=2, name='recorded'))
        record = RunRecord.objects.get(name='recorded')
        self.assertEqual(record.steps, 2)
        self.assertEqual(record.termination, Termination.Completed)
        self.assertEqual(len(record.csv_sha256), 64)


class TerminationTests(HarnessTestCase):

    def test_short_time_variant_stops_at_horizon(self):
        config = shear_config(self.tmp, amplitude=0.5, k=1e-4, t_end=0.01)
        report = run(config)
        self.assertEqual(report.termination, Termination.HorizonReached)
        self.assertEqual(report.steps, 1)
        self.assertLess(report.final_time, report.horizons.t_star_semi)

    def test_horizon_can_be_ignored(self):
        config = shear_config(self.tmp, amplitude=0.5, k=1e-4, n_steps=3, allow_over_horizon=True)
        self.assertEqual(run(config).steps, 3)

    def test_small_data_variant_refuses_large_data(self):
        config = shear_config(self.tmp, amplitude=1.0, scheme=Scheme.FullyImplicit,
                              monitor=MonitorVariant.FullSmall, n_steps=5)
        with self.assertRaises(InfeasibleConfig) as ctx:
            run(config)
        self.assertEqual(ctx.exception.tag, ConstraintTag.Hypf)
        self.assertFalse(os.path.exists(os.path.join(self.tmp, CSV_NAME)))

    def test_small_data_variant_refuses_large_step(self):
        config = shear_config(self.tmp, k=0.8, scheme=Scheme.FullyImplicit,
                              monitor=MonitorVariant.FullSmall, n_steps=5)
        with self.assertRaises(InfeasibleConfig) as ctx:
            run(config)
        self.assertEqual(ctx.exception.tag, ConstraintTag.Dtfb)

    def test_nonconvergence_ends_the_run(self):
        config = RunConfig(
            n=8,
            scheme_cfg=SchemeConfig(k=1.0, nu=0.01, scheme=Scheme.FullyImplicit, fp_max_iter=20),
            initial=FieldSpec(kind=FieldKind.Random, amplitude=100.0, seed=41, kmax=3.0),
            n_steps=3,
            out_dir=self.tmp,
        )
        report = run(config)
        self.assertEqual(report.termination, Termination.NonConvergence)
        self.assertEqual(report.steps, 0)
        self.assertIn("did not converge", report.error)
        self.assertTrue(os.path.exists(os.path.join(self.tmp, REPORT_NAME)))

    def test_bound_violation_ends_the_run(self):
        # c0 far below its true value makes the small-data bound fail under steady forcing
        config = RunConfig(
            n=8,
            scheme_cfg=SchemeConfig(k=0.001, nu=1.0, scheme=Scheme.FullyImplicit),
            forcing=ForcingSpec(kind=ForcingKind.Modes, modes=(((0, 0, 3), (0.01, 0, 0)),)),
            constants=ConstantsSet(c0=0.001),
            monitor=MonitorVariant.FullSmall,
            n_steps=200,
            out_dir=self.tmp,
        )
        report = run(config)
        self.assertEqual(report.termination, Termination.BoundViolated)
        self.assertLess(report.steps, 200)
        self.assertFalse(report.rows[-1].verdict.bound_ok)
        self.assertTrue(all(row.verdict.bound_ok for row in report.rows[:-1]))
        self.assertLessEqual(report.first_violation, report.steps)
        self.assertIsNotNone(report.first_conclusion_violation)
        self.assertLessEqual(report.first_conclusion_violation, report.steps)

    def test_failed_assumptions_are_told_apart_from_failed_bounds(self):
        # k = 1 breaks the lemma restrictions on the first step while every bound still holds
        config = shear_config(self.tmp, scheme=Scheme.FullyImplicit, monitor=MonitorVariant.FullShort,
                              k=1.0, n_steps=2, allow_over_horizon=True, write_files=False)
        report = run(config)
        self.assertEqual(report.termination, Termination.Completed)
        self.assertFalse(report.rows[0].verdict.dtfx.ok)
        self.assertEqual(report.first_violation, 1)
        self.assertEqual(report.first_hypothesis_violation, 1)
        self.assertIsNone(report.first_conclusion_violation)
        self.assertTrue(report.warnings)
        data = json.loads(report_json(report))
        self.assertEqual(data['first_hypothesis_violation'], 1)
        self.assertIsNone(data['first_conclusion_violation'])


class DissipationTests(HarnessTestCase):

    def test_rest_state_passes_every_monitor(self):
        for monitor in MonitorVariant.Restricted:
            scheme = Scheme.SemiImplicit if monitor.startswith("semi") else Scheme.FullyImplicit
            config = RunConfig(n=8, scheme_cfg=SchemeConfig(k=0.01, nu=1.0, scheme=scheme),
                               monitor=monitor, n_steps=3, write_files=False)
            report = run(config)
            self.assertEqual(report.termination, Termination.Completed, monitor)
            self.assertIsNone(report.first_violation, monitor)

    def test_unforced_energy_decreases(self):
        for scheme in Scheme.All:
            report = run(random_config(self.tmp, scheme=scheme, n_steps=10, write_files=False))
            self.assertEqual(report.termination, Termination.Completed)
            self.assertTrue(energy_decay_ok(report))


class LongRunMonitorTests(HarnessTestCase):

    def test_small_data_bound_holds_up_to_ten(self):
        config = RunConfig(
            name='semi_small',
            n=16,
            scheme_cfg=SchemeConfig(k=0.05, nu=1.0, scheme=Scheme.SemiImplicit),
            initial=FieldSpec(kind=FieldKind.Random, amplitude=0.1, seed=7, slope=1.0, kmax=3.0),
            monitor=MonitorVariant.SemiSmall,
            t_end=10.0,
            write_files=False,
        )
        report = run(config)
        self.assertEqual(report.termination, Termination.Completed)
        self.assertAlmostEqual(report.final_time, 10.0, places=9)
        self.assertIsNone(report.first_violation)
        self.assertTrue(all(row.verdict.bound.applicable and row.verdict.bound_ok for row in report.rows))

    def test_forced_fully_implicit_run_stays_below_the_small_root(self):
        config = RunConfig(
            name='full_short',
            n=8,
            scheme_cfg=SchemeConfig(k=0.01, nu=1.0, scheme=Scheme.FullyImplicit),
            initial=FieldSpec(kind=FieldKind.Random, amplitude=0.1, seed=8, slope=1.0, kmax=3.0),
            forcing=ForcingSpec(kind=ForcingKind.Random, amplitude=0.05, seed=9, kmax=2.0),
            monitor=MonitorVariant.FullShort,
            n_steps=50,
            write_files=False,
        )
        report = run(config)
        self.assertEqual(report.termination, Termination.Completed)
        self.assertEqual(report.steps, 50)
        self.assertIsNone(report.first_hypothesis_violation)
        for row in report.rows:
            verdict = row.verdict
            self.assertTrue(verdict.y1_membership.applicable, row.n)
            self.assertTrue(verdict.y1_membership_ok, row.n)
            if verdict.explicit_bound.applicable:
                self.assertTrue(verdict.explicit_bound.ok, row.n)


@override_settings(NSE3D={**settings.NSE3D, "RECORD_RUNS": False})
class SweepTests(HarnessTestCase):

    def test_infeasible_members_are_isolated(self):
        feasible = shear_config(os.path.join(self.tmp, 'a'), scheme=Scheme.FullyImplicit,
                                monitor=MonitorVariant.FullSmall, n_steps=3, name='feasible')
        infeasible = replace(feasible, name='infeasible', out_dir=os.path.join(self.tmp, 'b'),
                             initial=FieldSpec(kind=FieldKind.Shear, amplitude=1.0))
        results = sweep([feasible, infeasible, feasible], deterministic=True)
        self.assertEqual([r['iserror'] for r in results], [False, True, False])
        self.assertIn("InfeasibleConfig", results[1]['error'])
        self.assertEqual(results[0]['value'].time_series().to_csv(),
                         results[2]['value'].time_series().to_csv())
        summary = sweep_summary(results)
        self.assertEqual(list(summary['first_violation']), ["none", None, "none"])

    def test_observed_order_of_both_schemes(self):
        base = random_config(self.tmp, k=0.04, t_end=0.2, write_files=False)
        for scheme in Scheme.All:
            configs = halving_configs(replace(base, scheme_cfg=replace(base.scheme_cfg, scheme=scheme)), 3)
            results = sweep(configs, max_workers=3)
            finals = [r['value'].u_final for r in results]
            reference = run(replace(configs[0], name='reference', scheme_cfg=replace(configs[0].scheme_cfg, k=0.00125)))
            errors, orders = estimate_order(finals, reference.u_final)
            self.assertTrue(all(e > 0 for e in errors))
            for order in orders:
                self.assertGreaterEqual(order, 0.8, scheme)
                self.assertLessEqual(order, 1.2, scheme)

    def test_richardson_order_of_linear_error(self):
        grid = Grid(8)
        finals = [shear(grid, 1.0), shear(grid, 2.0), shear(grid, 2.5)]
        self.assertAlmostEqual(richardson_order(finals), 1.0, places=12)


RANDOM_INI = """\
[grid]
n = 8

[scheme]
scheme = semi_implicit
k = 0.01
nu = 1.0

[initial]
kind = random
amplitude = 0.1

[forcing]
kind = random
amplitude = 0.01

[run]
seed = 5
t_end = 0.1
"""


class ConfigFileTests(HarnessTestCase):

    def load(self, text, overrides=()):
        path = os.path.join(self.tmp, 'run.ini')
        with open(path, 'w', encoding='utf-8') as handle:
            handle.write(text)
        return load_config(path, overrides, out_dir=self.tmp)

    def test_defaults_and_seeds(self):
        dicResult = self.load(RANDOM_INI)
        self.assertFalse(dicResult['iserror'])
        config = dicResult['value'].run
        self.assertEqual(config.total_steps, 10)
        self.assertEqual(config.initial.seed, 5)
        self.assertEqual(config.forcing.seed, 6)
        self.assertEqual(config.monitor, MonitorVariant.NoMonitor)
        self.assertEqual(config.constants.c3, 1.0)
        self.assertEqual(config.out_dir, self.tmp)

    def test_override(self):
        dicResult = self.load(RANDOM_INI, ['scheme.k=0.005', 'run.monitor=semi_short'])
        config = dicResult['value'].run
        self.assertEqual(config.scheme_cfg.k, 0.005)
        self.assertEqual(config.total_steps, 20)
        self.assertEqual(config.monitor, MonitorVariant.SemiShort)

    def test_unknown_key_reports_line(self):
        dicResult = self.load(RANDOM_INI.replace("nu = 1.0", "viscocity = 1.0"))
        self.assertTrue(dicResult['iserror'])
        self.assertEqual(dicResult['key'], 'scheme.viscocity')
        self.assertEqual(dicResult['line'], 7)

    def test_unknown_section(self):
        dicResult = self.load(RANDOM_INI + "\n[solver]\nk = 1\n")
        self.assertTrue(dicResult['iserror'])
        self.assertEqual(dicResult['key'], 'solver')

    def test_stopping_rules_are_exclusive(self):
        dicResult = self.load(RANDOM_INI.replace("t_end = 0.1", "t_end = 0.1\nn_steps = 10"))
        self.assertTrue(dicResult['iserror'])
        self.assertEqual(dicResult['key'], 'run.t_end')

    def test_odd_grid_is_rejected(self):
        dicResult = self.load(RANDOM_INI, ['grid.n=9'])
        self.assertTrue(dicResult['iserror'])
        self.assertEqual(dicResult['key'], 'grid.n')

    def test_sweep_product(self):
        path = os.path.join(settings.BASE_DIR, 'configs', 'sweep.ini')
        loaded = load_config(path, out_dir=self.tmp)['value']
        configs = sweep_configs(loaded)
        self.assertEqual(len(configs), 6)
        self.assertEqual([c.scheme_cfg.k for c in configs[:3]], [0.04, 0.02, 0.01])
        self.assertEqual({c.scheme_cfg.scheme for c in configs}, set(Scheme.All))
        self.assertEqual(len({c.out_dir for c in configs}), 6)
