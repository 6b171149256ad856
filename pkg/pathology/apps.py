import logging

import logzero
from django.apps import AppConfig
from django.conf import settings


class PathologyConfig(AppConfig):
    name = 'pathology'
    verbose_name = 'Voice pathology pipeline'

    def ready(self):
        logzero.loglevel(getattr(logging, settings.PATHOLOGY_LOG_LEVEL.upper(), logging.INFO))
        if settings.PATHOLOGY_LOG_FILE:
            logzero.logfile(settings.PATHOLOGY_LOG_FILE, maxBytes=5_000_000, backupCount=3)
