import sys

from momsjump.cli import main

sys.exit(main())
