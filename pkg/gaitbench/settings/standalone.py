"""
Settings used by the ``gaitbench`` console script when no host Django project is configured.
"""
import sys

from gaitbench.settings.common import plugin_settings

SECRET_KEY = 'gaitbench-standalone'

INSTALLED_APPS = (
    'gaitbench',
)

DATABASES: dict = {}

USE_TZ = True

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'standard': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'standard',
            'stream': 'ext://sys.stderr',
        },
    },
    'loggers': {
        'gaitbench': {
            'handlers': ['console'],
            'level': 'INFO',
        },
    },
}

plugin_settings(sys.modules[__name__])
