import sys

from redpro.cli import main

sys.exit(main())
