import sys

from covsem.cli import main

sys.exit(main())
