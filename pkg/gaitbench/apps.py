"""
gaitbench Django application initialization.
"""

from django.apps import AppConfig


class GaitbenchConfig(AppConfig):
    """
    Configuration for the gaitbench Django application.

    The app has no models or URLs; it exists so its management commands (generate, run and
    report) are found.
    """

    name = 'gaitbench'
    verbose_name = 'Gait classification benchmark'
