import sys

from capskin.cli import main

sys.exit(main())
