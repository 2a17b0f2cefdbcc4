import sys

from ep_spectra.cli import main

if __name__ == "__main__":
    sys.exit(main())
