import sys

from admean.cli import main

sys.exit(main())
