"""
``gaitbench`` console script: Django's command runner on the standalone settings.
"""

import os
import sys
from typing import List, Optional


def main(argv: Optional[List[str]] = None) -> None:
    """Run ``gaitbench <generate|run|report> ...``."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'gaitbench.settings.standalone')
    from django.core.management import execute_from_command_line  # pylint: disable=import-outside-toplevel

    argv = list(sys.argv if argv is None else argv)
    execute_from_command_line(['gaitbench'] + argv[1:])
