import sys

from activediag.cli import main

sys.exit(main())
