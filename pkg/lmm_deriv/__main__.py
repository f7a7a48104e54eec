import sys

from lmm_deriv.cli.commands import main

if __name__ == "__main__":
    sys.exit(main())
