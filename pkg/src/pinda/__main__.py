import sys

from pinda.cli import main

sys.exit(main())
