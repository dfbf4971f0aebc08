"""
Django settings for melelab project.

The lab is model-less: every engine lives in plain modules inside the apps
and all experiment state is kept in files. The settings below wire up the
apps, the REST surface, logging and the ``MELE_LAB`` defaults that
``harness.config`` falls back to.

For the full list of Django settings and their values, see
https://docs.djangoproject.com/en/5.1/ref/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.environ.get(
    'MELE_SECRET_KEY',
    'django-insecure-mele-lab-local-only-0f3c9a7e21b54d6c8e1a',
)

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = os.environ.get('MELE_DEBUG', '1') == '1'

ALLOWED_HOSTS = ['127.0.0.1', 'localhost']


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    'django.contrib.staticfiles',
    'rest_framework',
    'environment',
    'exploration',
    'queries',
    'answering',
    'aggregation',
    'learners',
    'analysis',
    'harness',
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

ROOT_URLCONF = 'melelab.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.debug',
                'django.template.context_processors.request',
            ],
        },
    },
]

WSGI_APPLICATION = 'melelab.wsgi.application'


# Database
# Nothing is stored in it; Django still expects a default connection.

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}


# REST framework: JSON only, no accounts.

REST_FRAMEWORK = {
    'DEFAULT_RENDERER_CLASSES': ['rest_framework.renderers.JSONRenderer'],
    'DEFAULT_PARSER_CLASSES': ['rest_framework.parsers.JSONParser'],
    'DEFAULT_AUTHENTICATION_CLASSES': [],
    'DEFAULT_PERMISSION_CLASSES': ['rest_framework.permissions.AllowAny'],
    'UNAUTHENTICATED_USER': None,
}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Static files (CSS, JavaScript, Images)

STATIC_URL = 'static/'

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'lab': {
            'format': '{levelname} {asctime} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'lab',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': os.environ.get('MELE_LOG_LEVEL', 'INFO'),
    },
    'loggers': {
        # the openai client logs every retry at INFO
        'openai': {'level': 'WARNING'},
        'httpx': {'level': 'WARNING'},
    },
}


# Lab defaults. harness.config materializes these into every report so a
# run can be replayed from the report alone.

MELE_LAB = {
    'HOUSE': {
        'NUM_ROOMS': 8,
        'NODES_PER_ROOM': [2, 4],
        'ROOM_TYPE_MIX': [
            'kitchen', 'dining room', 'living room', 'bedroom',
            'bathroom', 'office', 'hallway',
        ],
        'EXTRA_EDGE_PROB': 0.3,
        'SEED': 0,
    },
    'NOISE': {
        'P_DETECT': 0.9,
        'P_FALSE': 0.01,
        'SEED': 0,
    },
    'HEURISTIC': {
        'THRESHOLD': 0.5,
        'FLIP_NOISE': 0.1,
        'SEED': 0,
    },
    'EXPLORATION': {
        'STEPS': 10,
        'POLICY': 'greedy_novelty',
    },
    'DEBATE': {
        'ROUNDS': 2,
        'STUBBORNNESS': 0.5,
        'MODE': 'simulated',
    },
    'AGGREGATION': {
        'METHODS': ['mv', 'debate', 'cam'],
        'TIE_BREAK': 0,
    },
    'CAM': {
        'ALGOS': ['mlp', 'rf', 'dt', 'gbt', 'svm_rbf', 'svm_linear', 'lr'],
        'HYPERPARAMS': {
            'dt': {'max_depth': None, 'min_samples_split': 2},
            'rf': {'n_estimators': 1000, 'max_depth': None, 'n_jobs': 1},
            'gbt': {
                'n_estimators': 100, 'learning_rate': 0.3, 'max_depth': 6,
                'reg_lambda': 1.0, 'min_child_weight': 1.0,
            },
            'lr': {'learning_rate': 0.5, 'max_iter': 5000, 'tol': 1e-6, 'l2': 1e-4},
            'svm_linear': {'l2': 1e-2, 'learning_rate': 0.1, 'max_iter': 1000},
            'svm_rbf': {'C': 1.0, 'tol': 1e-3, 'max_passes': 5, 'max_iter': 2000},
            'mlp': {'learning_rate': 0.05, 'epochs': 500, 'batch_size': 32},
        },
    },
    'HARNESS': {
        'TEST_FRACTION': 0.10,
        'SEEDS': [0, 1, 2, 3, 4],
        'QUERY_SEED': 0,
        'SKIP_SATURATED': False,
        'OBSERVATIONS': 'explore',
        'N_JOBS': 1,
        'OUTPUT_DIR': str(BASE_DIR / 'runs'),
    },
    'ANALYSIS': {
        'PFI_REPEATS': 5,
        'PFI_TRIALS': 5,
        'NEAR_CONSTANT': 0.90,
        'VAL_FRACTION': 0.3,
    },
    'LLM': {
        'BASE_URL': os.environ.get('MELE_LLM_BASE_URL', 'https://api.openai.com/v1'),
        'MODEL': os.environ.get('MELE_LLM_MODEL', 'gpt-4-turbo'),
        'API_KEY_ENV': 'MELE_LLM_API_KEY',
        'MAX_IN_FLIGHT': 4,
        'MAX_RETRIES': 3,
        'TIMEOUT': 60.0,
        'TEMPERATURE': 0.0,
    },
}
