import sys

from uwfkit.cli import main

sys.exit(main())
