import sys

from desmrank.cli import main

sys.exit(main())
