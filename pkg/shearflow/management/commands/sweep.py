from shearflow.cli import ShearflowCommand, run_sweep


class Command(ShearflowCommand):
    help = 'Simulates over the [sweep] viscosity grid and fits the onset time against nu'
    name = 'sweep'

    def produce(self, bundle, target, options):
        expensive = bool(options.get('expensive') or bundle.diagnostics['expensive'])
        return run_sweep(bundle, target, expensive)
