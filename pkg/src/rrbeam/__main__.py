"""Allow ``python3 -m rrbeam``."""
import sys

from .cli import main

sys.exit(main())
