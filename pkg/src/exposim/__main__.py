import sys

from exposim.cli import main

sys.exit(main())
