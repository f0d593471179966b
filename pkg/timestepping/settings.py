"""
Django settings for timestepping project.

Generated by 'django-admin startproject' using Django 5.0.

For more information on this file, see
https://docs.djangoproject.com/en/5.0/topics/settings/

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.0/ref/settings/
"""

from pathlib import Path
import os

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get('NSE3D_SECRET_KEY', 'django-insecure-nse3d-local-only')

DEBUG = False

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'rest_framework',#  added
    'apptimestepping',#  added
]

MIDDLEWARE = []


# Database
# https://docs.djangoproject.com/en/5.0/ref/settings/#databases

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}


# Internationalization
# https://docs.djangoproject.com/en/5.0/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True


# Default primary key field type
# https://docs.djangoproject.com/en/5.0/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Newly added-------------------------------
REST_FRAMEWORK = {
    'DEFAULT_AUTHENTICATION_CLASSES': [],
    'DEFAULT_PERMISSION_CLASSES': [],
    'UNAUTHENTICATED_USER': None,
}

# Solver and analysis defaults. Constants c0..c5 are placeholders of order
# one; c3 is always derived as sqrt(c2/c0).
NSE3D = {
    'CONSTANTS': {
        'c0': 1.0,
        'c1': 1.0,
        'c2': 1.0,
        'c4': 1.0,
        'c5': 1.0,
    },
    'FP_TOL': 1e-12,
    'FP_MAX_ITER': 100,
    'OUTPUT_DIR': os.environ.get('NSE3D_OUTPUT_DIR', str(BASE_DIR / 'output')),
    'LOG_DIR': os.environ.get('NSE3D_LOG_DIR', str(BASE_DIR / 'logs')),
    'FFT_WORKERS': int(os.environ.get('NSE3D_FFT_WORKERS', '1')),
    'SWEEP_WORKERS': 3,
    'DEBUG_INVARIANTS': os.environ.get('NSE3D_DEBUG_INVARIANTS', '') == '1',
    'RECORD_RUNS': True,
    'CONSTRAINT_RTOL': 1e-12,
}
#-------------------------------------------------
