"""Allow ``python3 -m directseek`` to invoke the command line."""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
