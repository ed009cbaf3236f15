"""Run the mftraj CLI."""

import sys

from .cli import main

sys.exit(main())
