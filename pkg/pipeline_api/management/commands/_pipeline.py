"""
Shared base of the pipeline stage commands.

Every stage accepts the same flags, loads and validates the RunConfig, and
maps failures to exit codes: 2 for configuration and input errors, 3 for
numeric failures.
"""

import logging

from django.core.management.base import BaseCommand, CommandError

from pipeline_api.runconfig import RunConfig, load_run_config

logger = logging.getLogger(__name__)

CONFIG_ERROR = 2
NUMERIC_ERROR = 3


class PipelineCommand(BaseCommand):
    """Base class; subclasses implement ``run_stage``."""

    stage = ''

    def add_arguments(self, parser):
        parser.add_argument('--config', dest='config', default=None, help='RunConfig JSON file')
        parser.add_argument('--out', dest='out', default=None, help='Output directory (overrides output_dir)')
        parser.add_argument('--seed', dest='seed', type=int, default=None, help='Base seed (overrides base_seed)')
        parser.add_argument('--jobs', dest='jobs', type=int, default=None, help='Worker count (overrides jobs)')
        parser.add_argument('--force', action='store_true', help='Overwrite existing stage outputs')
        parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                            help='Override a RunConfig value, e.g. --set train.es_sweep=[500]')

    def run_stage(self, run: RunConfig, force: bool):
        raise NotImplementedError

    def handle(self, *args, **options):
        try:
            run = load_run_config(options['config'], options['overrides'], options['out'],
                                  options['seed'], options['jobs'])
            result = self.run_stage(run, options['force'])
        except (ValueError, FileNotFoundError, FileExistsError) as e:
            raise CommandError(f"{self.stage}: {str(e)}", returncode=CONFIG_ERROR) from e
        except (RuntimeError, ArithmeticError) as e:
            raise CommandError(f"{self.stage}: {str(e)}", returncode=NUMERIC_ERROR) from e
        self.stdout.write(self.style.SUCCESS(f"{self.stage}: outputs in {result}"))
