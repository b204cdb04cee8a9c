import sys

from prebo.cli import main

sys.exit(main())
