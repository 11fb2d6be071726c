#!/usr/bin/env python
"""
Django's command-line utility for administrative tasks.

This script is the main entry point for running Django management commands
for the RD-BINN pipeline, including the pipeline stages themselves.

Usage:
    python manage.py [command] [options]

Pipeline commands:
    python manage.py synth --config run.json        # Synthetic ground-truth data
    python manage.py preprocess --config run.json   # Bin the input into a density tensor
    python manage.py train --config run.json        # Split x patience training sweep
    python manage.py ensemble_sr --config run.json  # Ensemble curves and symbolic regression
    python manage.py evaluate --config run.json     # Total-count curves and metrics
    python manage.py run_all --config run.json      # Every stage in order

Other commands:
    python manage.py runserver        # Start the development server
    python manage.py test             # Run tests

For a complete list of commands, run:
    python manage.py help
"""

import os
import sys


def main():
    """Run administrative tasks."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'rdeql_core.settings')
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Are you sure it's installed and "
            "available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    execute_from_command_line(sys.argv)


if __name__ == '__main__':
    main()
