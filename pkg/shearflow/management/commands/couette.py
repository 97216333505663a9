import argparse

from django.core.management.base import BaseCommand, CommandError

from shearflow.cli import EXIT_OK, run_command


class Command(BaseCommand):
    help = 'Dispatches to a shearflow subcommand: couette <linear|simulate|multipliers|sweep|report> [options]'

    def add_arguments(self, parser):
        parser.add_argument('argv', nargs=argparse.REMAINDER, help='subcommand and its options')

    def handle(self, *args, **options):
        code = run_command(options['argv'], stdout=self.stdout, stderr=self.stderr)
        if code != EXIT_OK:
            raise CommandError(f"exit status {code}", returncode=code)
