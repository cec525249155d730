"""
Generate a synthetic gait dataset.
"""

from django.core.management.base import BaseCommand, CommandError

from gaitbench.datafiles import dataset_digest, save_dataset
from gaitbench.domain import GeneratorConfig, generate_dataset
from gaitbench.exceptions import ConfigError
from gaitbench.helpers import load_config_file


class Command(BaseCommand):
    """
    ``gaitbench generate --config <path> --out <path>``.
    """

    help = 'Generate a seeded synthetic seven-class gait dataset as JSON Lines.'

    def add_arguments(self, parser):
        """Add command arguments."""
        parser.add_argument('--config', help='YAML/JSON generator config; defaults are used when omitted.')
        parser.add_argument('--out', required=True, help='Dataset file to write.')
        parser.add_argument('--seed', type=int, help='Override rng_seed from the config.')

    def handle(self, *args, **options):
        """Generate and write the dataset."""
        try:
            data = load_config_file(options['config']) if options['config'] else {}
            if options['seed'] is not None:
                data = {**data, 'rng_seed': options['seed']}
            config = GeneratorConfig.from_dict(data)
        except ConfigError as exc:
            raise CommandError(str(exc), returncode=2) from exc

        dataset = generate_dataset(config)
        try:
            save_dataset(dataset, options['out'])
        except OSError as exc:
            raise CommandError(f'Cannot write {options["out"]}: {exc}', returncode=1) from exc

        self.stdout.write(
            f'Wrote {len(dataset)} cycles from {len(dataset.subjects)} subjects to {options["out"]} '
            f'(sha256 {dataset_digest(dataset)})'
        )
