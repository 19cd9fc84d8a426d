"""
Django settings for the koopman_lab project.

The project has no web surface: Django supplies the management-command CLI,
the settings layer, the ORM (run manifests and the kernel cache index) and
the test runner.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/6.0/ref/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Database, default outputs and the kernel cache live under KOOPMAN_HOME.
KOOPMAN_HOME = Path(os.environ.get('KOOPMAN_HOME', BASE_DIR / 'var'))
KOOPMAN_HOME.mkdir(parents=True, exist_ok=True)

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get(
    'DJANGO_SECRET_KEY',
    'django-insecure-koopman-lab-local-only',
)

DEBUG = os.environ.get('DJANGO_DEBUG', '') == '1'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'spectral',
]


# Database
# https://docs.djangoproject.com/en/6.0/ref/settings/#databases

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': KOOPMAN_HOME / 'db.sqlite3',
        'OPTIONS': {
            'timeout': 20,
        },
    }
}


# Internationalization
# https://docs.djangoproject.com/en/6.0/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Default primary key field type
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging
# https://docs.djangoproject.com/en/6.0/topics/logging/

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'spectral': {
            'handlers': ['console'],
            'level': os.environ.get('KOOPMAN_LOG_LEVEL', 'WARNING'),
            'propagate': False,
        },
    },
}


# Pipeline defaults
# Published experiment values where they exist (dt, theta, m),
# desk-scale values otherwise. FULL_* keys are used by --full-scale.

KOOPMAN = {
    'N': 8000,
    'DT': 0.01,
    'Q': [400],
    'EPSILON': 'auto',
    'K_NN': None,
    'M': 50,
    'THETA': 1e-4,
    'SCHEME': 'first_forward',
    'SEED': 0,
    'SPINUP_TORUS': 0.0,
    'SPINUP_L63': 100.0,
    'FULL_SPINUP_L63': 4000.0,
    'FULL_N': 50000,
    'FULL_Q': [2000],
    'FAYAD_K_MAX': 32,
    'MAX_SUBSTEP': 0.01,
    'DENSE_EIGEN_LIMIT': 4096,
    'EIGEN_TOL': 1e-10,
    'TUNE_GRID_POINTS': 64,
    'TUNE_SAMPLE': 2_000_000,
    'DIAGNOSE_BASELINE_Q': [1, 10],
    'OUTPUT_DIR': KOOPMAN_HOME / 'runs',
    'WORKERS': 1,
}
