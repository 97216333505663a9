"""
Subcommand bodies shared by the management commands.

Each run_* function turns a validated ConfigBundle into a CommandOutcome
(the artifacts to write and the exit code); ShearflowCommand wires them to
Django's command machinery and maps exceptions to exit codes.
"""
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import BaseCommand, CommandError

from .config import ConfigBundle, build_bundle, parse_config, with_viscosity
from .coordinates import shifted_vorticity
from .diagnostics import (DiagnosticsRecord, TrajectoryRecorder, bootstrap_report, decay_model_fits,
                          echo_scan, fit_onset_scaling, onset_time)
from .exceptions import ConfigurationError, CoordinateMonotonicityError, ShearflowError
from .linear_oracle import linear_rate_report, orr_response
from .multipliers import MultiplierKind, check_all_properties, multiplier_table
from .outputs import RunResults, Snapshot, Table, claim_directory, read_records, write_outputs
from .solver import initial_field, run

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_ACCEPTANCE = 2
EXIT_USAGE = 64

SUBCOMMANDS = {
    'linear': 'Kelvin-mode time series and fitted linear decay rates',
    'simulate': 'nonlinear run with diagnostics records, echo scan and bootstrap monitors',
    'multipliers': 'multiplier tables; --check runs the property suite',
    'sweep': 'simulate over a geometric viscosity grid and fit the onset time',
    'report': 'decay fits and SVG plots of an existing run directory',
}

USAGE = "usage: manage.py couette <subcommand> [options]\n\nsubcommands:\n" + ''.join(
    f"  {name:<12} {text}\n" for name, text in SUBCOMMANDS.items())

TABLE_KINDS = (MultiplierKind.W, MultiplierKind.J, MultiplierKind.A, MultiplierKind.ANU, MultiplierKind.D)

# onset scaling accepted as nu^(-1/3 +- 0.1) with r^2 above 0.95
ONSET_EXPONENT = -1.0 / 3.0
ONSET_TOLERANCE = 0.1
ONSET_MIN_R_SQUARED = 0.95

REPORT_SERIES = ('l2_total', 'l2_zero_mode', 'l2_nonzero', 'ux_nonzero', 'uy')


class CommandOutcome(NamedTuple):
    results: RunResults
    exit_code: int
    summary: str


def fit_window(bundle: ConfigBundle, t_end: float) -> tuple:
    diag = bundle.diagnostics
    return (float(diag['fit_window_start']), min(float(diag['fit_window_end']), float(t_end)))


def run_linear(bundle: ConfigBundle) -> CommandOutcome:
    """Samples the exact linear solution of the configured initial data and fits its rates"""
    sim = bundle.sim
    diag = bundle.diagnostics
    omega_in = initial_field(sim)
    times = np.linspace(0.0, sim.t_max, int(diag['linear_samples']))
    report = linear_rate_report(omega_in, sim.nu, times, fit_window(bundle, sim.t_max),
                                sobolev=float(diag['sobolev_index']))
    names = list(report.series)
    rows = [[float(t)] + [float(report.series[name][i]) for name in names] for i, t in enumerate(report.times)]

    orr = {}
    for k, j, _ in sim.initial_data.modes if sim.initial_data.kind == 'modes' else ():
        if k != 0:
            eta0 = j * sim.grid.eta_spacing
            orr[f"{k}:{j}"] = orr_response(k, eta0, sim.nu)._asdict()
    fits = {'window': report.window, 'linear': report.fits, 'orr': orr}
    results = RunResults(tables={'series_linear': Table(['t'] + names, rows)}, fits=fits)
    return CommandOutcome(results, EXIT_OK, f"linear: {len(rows)} samples, window {report.window}")


def simulate_bundle(bundle: ConfigBundle, expensive: Optional[bool] = None):
    """Runs the solver with a TrajectoryRecorder; returns (trajectory, recorder)"""
    diag = bundle.diagnostics
    recorder = TrajectoryRecorder(bundle.weights, k_watch=int(diag['k_watch']),
                                  expensive=bool(diag['expensive'] if expensive is None else expensive),
                                  nonlinear=bundle.sim.nonlinear)
    return run(bundle.sim, recorder), recorder


def run_simulation(bundle: ConfigBundle, expensive: Optional[bool] = None) -> CommandOutcome:
    """
    Nonlinear run with the full diagnostics stream.

    Exit code 2 when a bootstrap monitor grows past its bound.
    """
    sim = bundle.sim
    diag = bundle.diagnostics
    trajectory, recorder = simulate_bundle(bundle, expensive)
    records: List[DiagnosticsRecord] = trajectory.records
    history = recorder.mode_history()
    bursts = []
    if sim.nonlinear:
        bursts = echo_scan(history, int(diag['k_watch']), float(diag['echo_prominence']), float(diag['echo_window']),
                           transfer=bool(diag['echo_transfer']))
    bootstrap = bootstrap_report(records, sim.epsilon, float(diag['bootstrap_growth_factor']))
    decay = decay_model_fits(records, fit_window(bundle, trajectory.final.t), sim.nu)

    width = history.norms.shape[1]
    columns = ['t'] + [f"norm_k{k}" for k in range(width)] + [f"transfer_k{k}" for k in range(width)]
    rows = [[float(t)] + list(map(float, history.norms[i])) + list(map(float, history.transfer[i]))
            for i, t in enumerate(history.times)]

    snapshots = {}
    for i, state in enumerate(trajectory.snapshots):
        stem = 'final' if state is trajectory.final else f"snapshot_{i:04d}"
        snapshots[stem] = Snapshot(state.f_hat, {'t': state.t, 'remap_count': state.remap_count, 'frame': 'shear'})
    coords = recorder.coordinates.current
    if coords is not None and not coords.masked:
        snapshots['final_shifted'] = Snapshot(shifted_vorticity(trajectory.final.f_hat, coords.phi),
                                              {'t': trajectory.final.t, 'frame': 'profile_shifted'})

    final = trajectory.final
    fits = {
        'decay': decay,
        'echoes': bursts,
        'bootstrap': bootstrap,
        'steps': trajectory.steps,
        'remaps': final.remap_count,
        'remap_loss': final.remap_loss,
        'warnings': final.warnings,
    }
    failed = sorted(name for name, entry in bootstrap.items() if not entry.passed)
    results = RunResults(tables={'series_modes': Table(columns, rows)}, records=records, fits=fits,
                         snapshots=snapshots)
    if failed:
        return CommandOutcome(results, EXIT_ACCEPTANCE, f"simulate: bootstrap monitors failed: {', '.join(failed)}")
    return CommandOutcome(results, EXIT_OK,
                          f"simulate: t={final.t:g} in {trajectory.steps} steps, {len(bursts)} echo bursts")


def run_multipliers(bundle: ConfigBundle, check: bool = False) -> CommandOutcome:
    """Multiplier tables (k, eta, t, value); with check, the property suite decides the exit code"""
    diag = bundle.diagnostics
    tables = {}
    for kind in TABLE_KINDS:
        rows = multiplier_table(kind, diag['table_ks'], diag['table_etas'], diag['table_times'], bundle.weights)
        tables[f"table_{kind.value}"] = Table(['k', 'eta', 't', 'value'], rows)
    if not check:
        return CommandOutcome(RunResults(tables=tables), EXIT_OK, f"multipliers: {len(tables)} tables")

    properties = check_all_properties(bundle.weights, n_samples=int(diag['property_samples']),
                                      seed=int(bundle.resolved['run']['seed']))
    results = RunResults(tables=tables, fits={'properties': properties})
    if not properties['passed']:
        failed = [name for name, value in properties.items() if value is False]
        return CommandOutcome(results, EXIT_ACCEPTANCE, f"multipliers: properties failed: {', '.join(failed)}")
    return CommandOutcome(results, EXIT_OK, "multipliers: all properties hold")


def _worker_setup():
    import django
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'couette_sim.settings')
    if not settings.configured:
        django.setup()


def simulate_point(resolved: Dict, nu: float, directory: str, expensive: bool = False) -> List[DiagnosticsRecord]:
    """One sweep point in its own output directory; returns the record stream"""
    _worker_setup()
    bundle = with_viscosity(build_bundle(resolved), nu)
    outcome = run_simulation(bundle, expensive)
    write_outputs(outcome.results, directory, bundle)
    return list(outcome.results.records)


def sweep_viscosities(bundle: ConfigBundle) -> List[float]:
    sweep = bundle.sweep
    return [float(nu) for nu in np.geomspace(sweep['nu_max'], sweep['nu_min'], int(sweep['points']))]


def run_sweep(bundle: ConfigBundle, target: Path, expensive: bool = False) -> CommandOutcome:
    """
    Runs simulate at every sweep viscosity (and nu = 0 as baseline), each in
    its own subdirectory, then fits T*(nu) ~ nu^p.

    Exit code 2 when the fit has enough points but misses nu^(-1/3).
    """
    nus = sweep_viscosities(bundle)
    jobs = [(nu, str(target / f"nu-{i:02d}")) for i, nu in enumerate(nus)]
    if bundle.sweep['baseline']:
        jobs.append((0.0, str(target / 'baseline')))
    workers = max(1, min(int(settings.COUETTE_THREADS), len(jobs)))
    logger.info("sweep over %d viscosities with %d workers", len(nus), workers)
    if workers == 1:
        streams = [simulate_point(bundle.resolved, nu, directory, expensive) for nu, directory in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(simulate_point, bundle.resolved, nu, directory, expensive)
                       for nu, directory in jobs]
            streams = [future.result() for future in futures]

    baseline = streams[len(nus)] if bundle.sweep['baseline'] else []
    onsets = [onset_time(records, baseline) for records in streams[:len(nus)]]
    fit = fit_onset_scaling(nus, onsets)
    rows = [[nu, onset, records[-1].l2_nonzero if records else math.nan, Path(directory).name]
            for (nu, directory), onset, records in zip(jobs, onsets, streams)]
    results = RunResults(tables={'table_sweep': Table(['nu', 'onset_time', 'final_l2_nonzero', 'directory'], rows)},
                         fits={'onset_scaling': fit, 'nus': nus, 'onsets': onsets})
    if not fit.sufficient:
        return CommandOutcome(results, EXIT_OK, f"sweep: onset fit has insufficient points ({fit.points})")
    if abs(fit.exponent - ONSET_EXPONENT) > ONSET_TOLERANCE or fit.r_squared <= ONSET_MIN_R_SQUARED:
        return CommandOutcome(results, EXIT_ACCEPTANCE,
                              f"sweep: onset exponent {fit.exponent:.3f} (r^2 {fit.r_squared:.3f}) "
                              f"outside {ONSET_EXPONENT:.3f} +- {ONSET_TOLERANCE}")
    return CommandOutcome(results, EXIT_OK, f"sweep: onset exponent {fit.exponent:.3f} (r^2 {fit.r_squared:.3f})")


def _record_series(records: Sequence[Dict], name: str) -> np.ndarray:
    return np.array([math.nan if r.get(name) is None else r[name] for r in records], dtype=float)


def _plot_series(times: np.ndarray, series: Dict[str, np.ndarray], fits: Dict):
    import matplotlib
    matplotlib.use('Agg')
    from matplotlib.figure import Figure

    figure = Figure(figsize=(7.0, 4.5))
    axes = figure.subplots()
    for name, values in series.items():
        positive = (values > 0) & (times > 0)
        if np.any(positive):
            axes.loglog(times[positive], values[positive], label=name)
        fit = fits.get(name)
        if fit is not None and fit.kind.value == 'power':
            model = fit.coefficient * np.sqrt(1.0 + times[positive] ** 2) ** fit.rate
            axes.loglog(times[positive], model, linestyle='--', linewidth=0.8, label=f"{name} fit {fit.rate:.2f}")
    axes.set_xlabel('t')
    axes.set_ylabel('norm')
    axes.legend(fontsize='small')
    figure.tight_layout()
    return figure


def report_bundle(input_dir: Path) -> ConfigBundle:
    """Configuration embedded in the header of a run's records.ndjson"""
    header, _ = read_records(Path(input_dir) / 'records.ndjson')
    if 'config' not in header:
        raise ConfigurationError("records.ndjson has no header record", rule='records start with a header',
                                 path=str(input_dir))
    return build_bundle(header['config'], source=str(input_dir))


def run_report(bundle: ConfigBundle, input_dir: Path, svg: bool = False) -> CommandOutcome:
    """Decay fits (and plots) of a simulate run directory"""
    _, records = read_records(Path(input_dir) / 'records.ndjson')
    fields = DiagnosticsRecord._fields
    typed = [DiagnosticsRecord(**{key: r.get(key) for key in fields}) for r in records]
    times = np.array([r.t for r in typed])
    window = fit_window(bundle, times.max() if times.size else 0.0)
    decay = decay_model_fits(typed, window, bundle.sim.nu)
    rows = [[name, fit.kind.value, fit.coefficient, fit.rate, fit.r_squared, fit.samples]
            for name, fit in sorted(decay.items()) if fit is not None]
    results = RunResults(
        tables={'report': Table(['quantity', 'model', 'coefficient', 'rate', 'r_squared', 'samples'], rows)},
        fits={'decay': decay, 'window': window},
        figures={'report_norms': _plot_series(times, {name: _record_series(records, name)
                                                     for name in REPORT_SERIES}, decay)} if svg else None,
    )
    return CommandOutcome(results, EXIT_OK, f"report: {len(rows)} fits over {len(records)} records")


class ShearflowCommand(BaseCommand):
    """
    Base for the subcommands: shared flags, configuration loading, output
    writing and the exception to exit-code mapping.
    """
    name = ''

    def add_arguments(self, parser):
        parser.add_argument('--config', help='run file with [grid], [physics], [weights], [run] sections')
        parser.add_argument('--out', help='output directory (default: COUETTE_OUTPUT_DIR/<subcommand>)')
        parser.add_argument('--seed', type=int, help='overrides [run] seed')
        parser.add_argument('--lenient', action='store_true', help='warn about unknown keys instead of failing')
        parser.add_argument('--expensive-diagnostics', action='store_true', dest='expensive',
                            help='also record CK_w and the coordinate monitors')

    def load_bundle(self, options) -> ConfigBundle:
        overrides = {}
        if options.get('seed') is not None:
            overrides.setdefault('run', {})['seed'] = int(options['seed'])
        if options.get('expensive'):
            overrides.setdefault('diagnostics', {})['expensive'] = True
        return parse_config(options.get('config'), strict=not options.get('lenient'), overrides=overrides)

    def out_dir(self, options) -> Path:
        return Path(options['out']) if options.get('out') else Path(settings.COUETTE_OUTPUT_DIR) / self.name

    def produce(self, bundle: ConfigBundle, target: Path, options) -> CommandOutcome:
        raise NotImplementedError

    def handle(self, *args, **options):
        try:
            bundle = self.load_bundle(options)
            target = claim_directory(self.out_dir(options))
            outcome = self.produce(bundle, target, options)
            manifest = write_outputs(outcome.results, target, bundle)
        except CoordinateMonotonicityError as e:
            logger.error("%s", e)
            raise CommandError(str(e), returncode=EXIT_ACCEPTANCE)
        except (ShearflowError, OSError) as e:
            logger.error("%s failed: %s", self.name, e)
            raise CommandError(str(e), returncode=EXIT_RUNTIME)
        except CommandError:
            raise
        except Exception as e:
            logger.exception("%s failed unexpectedly", self.name)
            raise CommandError(f"{type(e).__name__}: {e}", returncode=EXIT_RUNTIME)

        self.stdout.write(f"{outcome.summary}\n{len(manifest['artifacts'])} artifacts in {manifest['directory']}")
        if outcome.exit_code != EXIT_OK:
            raise CommandError(outcome.summary, returncode=outcome.exit_code)


def run_command(argv: Sequence[str], stdout=None, stderr=None) -> int:
    """
    Runs a subcommand and returns its exit code: 0 success, 1 runtime error,
    2 acceptance failure, 64 usage error (with the usage text on stderr).
    """
    argv = list(argv)
    stderr = stderr or sys.stderr
    if not argv or argv[0] not in SUBCOMMANDS:
        if argv:
            stderr.write(f"unknown subcommand '{argv[0]}'\n")
        stderr.write(USAGE)
        return EXIT_USAGE
    try:
        call_command(argv[0], *argv[1:], stdout=stdout or sys.stdout, stderr=stderr)
    except CommandError as e:
        # argument parsing errors surface as "Error: ..." with return code 1
        if e.returncode == EXIT_RUNTIME and str(e).startswith('Error: '):
            stderr.write(f"{e}\n{USAGE}")
            return EXIT_USAGE
        stderr.write(f"{e}\n")
        return e.returncode
    return EXIT_OK
