import sys

from microweave.cli import main

sys.exit(main())
