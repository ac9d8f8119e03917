import sys

from tcsloss.cli import main

if __name__ == "__main__":
    sys.exit(main())
