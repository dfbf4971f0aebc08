import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'melelab.settings')
django.setup()

from django.test.utils import setup_test_environment  # noqa: E402

# Mirror what ``manage.py test`` does before running the suite.
setup_test_environment()
