"""
Django settings for the voice_pathology project.

The project has no web surface: Django hosts the `pathology` app, whose
management commands drive the preprocessing, augmentation, training,
evaluation and analysis pipeline.

Pipeline defaults can be overridden from the environment or a `.env` file.
"""

import os
from pathlib import Path

from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

load_dotenv(BASE_DIR / '.env')

SECRET_KEY = os.getenv('DJANGO_SECRET_KEY', 'voice-pathology-offline-pipeline')

DEBUG = os.getenv('DJANGO_DEBUG', 'false').lower() == 'true'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'pathology',
]

# No models: stages exchange files, never database rows.
DATABASES = {}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Pipeline

PATHOLOGY_CACHE_DIR = Path(os.getenv('PATHOLOGY_CACHE_DIR', BASE_DIR / 'cache'))

# key=value file read by pathology.Ingest.config.load_config
PATHOLOGY_CONFIG_FILE = os.getenv('PATHOLOGY_CONFIG_FILE', '')

PATHOLOGY_SEED = int(os.getenv('PATHOLOGY_SEED', '42'))

# enables the desk-profile acceptance run in the test suite (tens of minutes)
PATHOLOGY_ACCEPTANCE = os.getenv('PATHOLOGY_ACCEPTANCE', 'false').lower() == 'true'

PATHOLOGY_LOG_LEVEL = os.getenv('PATHOLOGY_LOG_LEVEL', 'INFO')
PATHOLOGY_LOG_FILE = os.getenv('PATHOLOGY_LOG_FILE', '')
