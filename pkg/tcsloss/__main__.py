import sys

from tcsloss.cli import main

sys.exit(main())
