import sys

from qets.cli import main

sys.exit(main())
