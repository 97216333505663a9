from pathlib import Path

from django.core.management.base import CommandError

from shearflow.cli import ShearflowCommand, report_bundle, run_report


class Command(ShearflowCommand):
    help = 'Fits decay laws to the records of a simulate run and optionally plots them as SVG'
    name = 'report'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--input', required=True, help='run directory holding records.ndjson')
        parser.add_argument('--svg', action='store_true', help='also write SVG line plots')

    def load_bundle(self, options):
        if options.get('config'):
            raise CommandError('report takes its configuration from the run directory, not --config')
        return report_bundle(Path(options['input']))

    def out_dir(self, options):
        return Path(options['out']) if options.get('out') else Path(options['input']) / 'report'

    def produce(self, bundle, target, options):
        return run_report(bundle, Path(options['input']), svg=options.get('svg', False))
