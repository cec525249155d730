"""
Compare results bundles side by side.
"""

from django.core.management.base import BaseCommand, CommandError

from gaitbench.exceptions import ReportError
from gaitbench.report import build_table, load_bundle, render_text, write_csv


class Command(BaseCommand):
    """
    ``gaitbench report <bundle>... [--csv <path>]``.
    """

    help = 'Print overall and confidence-stratified metrics of one or more bundles.'

    def add_arguments(self, parser):
        """Add command arguments."""
        parser.add_argument('bundles', nargs='+', help='Bundle directories written by "run".')
        parser.add_argument('--csv', dest='csv_path', help='Also write the table as CSV.')

    def handle(self, *args, **options):
        """Load the bundles and print the table."""
        try:
            summaries = [load_bundle(path) for path in options['bundles']]
        except ReportError as exc:
            raise CommandError(str(exc), returncode=1) from exc

        rows = build_table(summaries)
        self.stdout.write(render_text(rows), ending='')
        if options['csv_path']:
            try:
                write_csv(rows, options['csv_path'])
            except OSError as exc:
                raise CommandError(f'Cannot write {options["csv_path"]}: {exc}', returncode=1) from exc
