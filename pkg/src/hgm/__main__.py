import sys

from hgm.cli import main

sys.exit(main())
