"""Configure Django so pytest can collect and run the Django test cases."""
import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'koopman_lab.settings')
django.setup()


def pytest_sessionstart(session):
    from django.test.utils import setup_databases, setup_test_environment

    setup_test_environment()
    session._django_db_config = setup_databases(verbosity=0, interactive=False)


def pytest_sessionfinish(session, exitstatus):
    from django.test.utils import teardown_databases, teardown_test_environment

    config = getattr(session, '_django_db_config', None)
    if config is not None:
        teardown_databases(config, verbosity=0)
    teardown_test_environment()
