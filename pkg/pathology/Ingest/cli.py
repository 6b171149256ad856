"""
Command-line surface.

`python manage.py <command>` and `python -m pathology <subcommand>` drive
the same management commands; subcommands use dashes (`flag-outliers`),
command modules use underscores (`flag_outliers`).
"""

import os
import sys

import django
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import BaseCommand, CommandError
from logzero import logger

from pathology.exceptions import PipelineError
from pathology.Ingest.config import load_config
from pathology.Ingest.stages import STAGES, run_stage

USAGE = f"usage: python -m pathology {{{','.join(STAGES)}}} [options]"


class StageCommand(BaseCommand):
    """Shared options and error translation for the pipeline stage commands."""
    stage = None

    def add_arguments(self, parser):
        parser.add_argument('--config', default=settings.PATHOLOGY_CONFIG_FILE,
                            help='key=value config file (default: PATHOLOGY_CONFIG_FILE)')
        parser.add_argument('--cache-dir', help='artifact directory (default: PATHOLOGY_CACHE_DIR)')
        parser.add_argument('--seed', type=int)
        parser.add_argument('--exp', choices=['Exp1', 'Exp2', 'Exp3.1', 'Exp3.2'])
        parser.add_argument('--strategy', choices=['resample', 'timewarp'])
        parser.add_argument('--split-unit', choices=['recording', 'segment'])
        parser.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                            help='override any config key; repeatable')
        parser.add_argument('--force', action='store_true', help='rebuild even if the stage is up to date')

    def overrides(self, options):
        overrides = list(options['set'])
        for option, key in (('cache_dir', 'cache_dir'), ('seed', 'seed'), ('exp', 'experiment'),
                            ('strategy', 'augmentation'), ('split_unit', 'split_unit')):
            if options.get(option) is not None:
                overrides.append(f"{key}={options[option]}")
        return overrides

    def handle(self, *args, **options):
        defaults = {'seed': settings.PATHOLOGY_SEED, 'cache_dir': str(settings.PATHOLOGY_CACHE_DIR)}
        try:
            config = load_config(options['config'] or None, self.overrides(options), defaults)
            output = run_stage(self.stage, config, force=options['force'])
        except PipelineError as exc:
            logger.error(f"{self.stage} failed: {exc}")
            raise CommandError(str(exc)) from exc
        self.stdout.write(f"{self.stage}: {output}")


def cli(argv=None):
    """Run one pipeline subcommand; returns the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in STAGES:
        sys.stderr.write(USAGE + '\n')
        return 2
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'voice_pathology.settings')
    django.setup()
    try:
        call_command(argv[0].replace('-', '_'), *argv[1:])
    except CommandError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    return 0
