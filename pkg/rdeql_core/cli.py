"""
Console entry point ``rd-binn``.

Forwards to Django's command-line utility with this project's settings, so
``rd-binn train --config run.json`` is ``python manage.py train --config run.json``.
The hyphenated stage names are accepted as aliases of the command modules.
"""

import os
import sys

COMMAND_ALIASES = {
    'ensemble-sr': 'ensemble_sr',
    'run-all': 'run_all',
}


def main(argv=None):
    """Run a pipeline stage or any other management command."""
    argv = list(sys.argv if argv is None else argv)
    if len(argv) > 1:
        argv[1] = COMMAND_ALIASES.get(argv[1], argv[1])
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'rdeql_core.settings')
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Are you sure it's installed and "
            "available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    execute_from_command_line(argv)


if __name__ == '__main__':
    main()
