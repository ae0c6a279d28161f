import sys

from gap.cli import main

sys.exit(main())
