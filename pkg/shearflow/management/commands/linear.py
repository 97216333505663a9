from shearflow.cli import ShearflowCommand, run_linear


class Command(ShearflowCommand):
    help = 'Samples the exact Kelvin-mode solution of the configured initial data and fits its decay rates'
    name = 'linear'

    def produce(self, bundle, target, options):
        return run_linear(bundle)
