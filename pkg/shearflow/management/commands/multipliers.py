from shearflow.cli import ShearflowCommand, run_multipliers


class Command(ShearflowCommand):
    help = 'Writes w, J, A, A^nu and D tables; --check runs the multiplier property suite'
    name = 'multipliers'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--check', action='store_true', help='run the property suite, exit 2 on a violation')

    def produce(self, bundle, target, options):
        return run_multipliers(bundle, check=options.get('check', False))
