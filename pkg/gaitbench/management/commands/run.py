"""
Run one experiment arm under leave-one-subject-out and write its results bundle.
"""

from django.core.management.base import BaseCommand, CommandError

from gaitbench.bundle import write_bundle
from gaitbench.client import BACKEND_KINDS, FAULT_MODES, make_backend
from gaitbench.datafiles import load_dataset
from gaitbench.exceptions import ConfigError, DatasetError, GaitBenchException, MissingCredentialError
from gaitbench.helpers import get_settings, load_config_file
from gaitbench.runs import ARMS, RunConfig, config_echo, execute_run

OVERRIDES = (
    'arm', 'dataset', 'out', 'grounded', 'backend', 'model', 'endpoint', 'k', 'seed', 'jobs', 'standardize',
    'max_retries', 'max_concurrent', 'fault', 'fault_fraction', 'fault_attempts',
)


class Command(BaseCommand):
    """
    ``gaitbench run --arm knn|ocsvm|llm --dataset <path> --out <dir> [...]``.

    Exit codes: 1 runtime failure (including failed folds), 2 config error, 3 missing credential.
    """

    help = 'Run the knn, ocsvm or llm arm and write predictions, metrics and diagnostics.'

    def add_arguments(self, parser):
        """Add command arguments."""
        parser.add_argument('--config', help='Run config file, e.g. the config.json of an earlier bundle.')
        parser.add_argument('--arm', choices=ARMS)
        parser.add_argument('--dataset', help='JSON Lines dataset.')
        parser.add_argument('--out', help='Bundle directory.')
        parser.add_argument('--grounded', action='store_true', default=None,
                            help='Include NORMAL reference statistics in LLM prompts.')
        parser.add_argument('--backend', choices=BACKEND_KINDS)
        parser.add_argument('--model', help='Model id for the http backend.')
        parser.add_argument('--endpoint', help='Base URL of an OpenAI-compatible API.')
        parser.add_argument('--k', type=int)
        parser.add_argument('--seed', type=int)
        parser.add_argument('--jobs', type=int, help='Folds run in parallel.')
        parser.add_argument('--standardize', dest='standardize', action='store_true', default=None)
        parser.add_argument('--no-standardize', dest='standardize', action='store_false')
        parser.add_argument('--max-retries', dest='max_retries', type=int)
        parser.add_argument('--max-concurrent', dest='max_concurrent', type=int)
        parser.add_argument('--fault', choices=FAULT_MODES, help='Mock backend fault injection.')
        parser.add_argument('--fault-fraction', dest='fault_fraction', type=float)
        parser.add_argument('--fault-attempts', dest='fault_attempts', type=int)

    def handle(self, *args, **options):
        """Resolve the config, run the arm and write the bundle."""
        try:
            data = load_config_file(options['config']) if options['config'] else {}
            overrides = {name: options[name] for name in OVERRIDES if options.get(name) is not None}
            run_config = RunConfig.from_dict({**data, **overrides})
        except ConfigError as exc:
            raise CommandError(str(exc), returncode=2) from exc
        if not run_config.out:
            raise CommandError('An output directory is required (--out).', returncode=2)

        backend = None
        if run_config.arm == 'llm':
            try:
                backend = make_backend(run_config.backend_spec())
            except MissingCredentialError as exc:
                raise CommandError(str(exc), returncode=3) from exc
            except ConfigError as exc:
                raise CommandError(str(exc), returncode=2) from exc

        try:
            dataset = load_dataset(run_config.dataset)
        except DatasetError as exc:
            raise CommandError(str(exc), returncode=1) from exc

        try:
            result = execute_run(run_config, dataset, backend=backend)
        except ConfigError as exc:
            raise CommandError(str(exc), returncode=2) from exc
        except GaitBenchException as exc:
            raise CommandError(str(exc), returncode=1) from exc

        try:
            write_bundle(
                run_config.out, result, config_echo(run_config, dataset),
                min_samples=get_settings()['CONFIDENCE_MIN_SAMPLES'],
            )
        except OSError as exc:
            raise CommandError(f'Cannot write the bundle to {run_config.out}: {exc}', returncode=1) from exc

        diagnostics = result.diagnostics()
        self.stdout.write(
            f'{run_config.arm}: {diagnostics["n_scored"]} of {diagnostics["n_records"]} trials scored, '
            f'{diagnostics["n_failed"]} failed; bundle written to {run_config.out}'
        )
        if result.fold_errors:
            raise CommandError(
                f'{len(result.fold_errors)} fold(s) failed; see {run_config.out}/diagnostics.json', returncode=1,
            )
