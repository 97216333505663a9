from shearflow.cli import ShearflowCommand, run_simulation


class Command(ShearflowCommand):
    help = 'Runs the pseudo-spectral solver and records diagnostics, echoes and bootstrap monitors'
    name = 'simulate'

    def produce(self, bundle, target, options):
        return run_simulation(bundle, options.get('expensive') or None)
