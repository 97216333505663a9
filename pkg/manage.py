#!/usr/bin/env python
"""
Entry point of the Couette simulator.

`manage.py <subcommand> [options]` runs a simulator subcommand (linear,
simulate, multipliers, sweep, report) and exits with its status; anything else
goes to Django's management utility, so `manage.py test shearflow` and
`manage.py couette <subcommand>` keep working.
"""
import os
import sys


def main(argv=None):
    argv = list(sys.argv if argv is None else argv)
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'couette_sim.settings')
    try:
        import django
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Is it installed and on PYTHONPATH, "
            "and is the virtual environment active?"
        ) from exc

    django.setup()
    from shearflow.cli import SUBCOMMANDS, run_command

    if len(argv) > 1 and argv[1] in SUBCOMMANDS:
        return run_command(argv[1:])
    execute_from_command_line(argv)
    return 0


if __name__ == '__main__':
    sys.exit(main())
