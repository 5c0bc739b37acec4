"""Allows ``python -m fefakit``."""

import sys

from fefakit.cli import main

sys.exit(main())
